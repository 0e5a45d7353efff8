//! Dataset ingestion, distance-cache persistence and report formats.

mod bandwidth;
mod cache;
mod dataset;
mod landmarks;
mod report;

pub use bandwidth::{format_bandwidth, parse_bandwidth, parse_grid};
pub use cache::{decode_cache, encode_cache, preshape_hash, CacheStore};
pub use dataset::{
    ingest, DatasetBundle, DerivedCovariate, Manifest, ManifestRecord, ResponseType,
};
pub use landmarks::{format_landmarks, parse_landmarks, read_landmarks, write_landmarks};
pub use report::{write_cv_detail, write_cv_table, FitReport, RunConfig, SubjectFit, FIT_REPORT_FORMAT};
