use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::cache::{preshape_hash, CacheStore};
use super::landmarks::{read_landmarks, write_landmarks};
use crate::error::{GplmError, Result};
use crate::geometry::{preshape, Configuration, KendallShapeSpace, PreShape};
use crate::smoothing::SmootherCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseType {
    Binary,
    Ordinal3,
    Continuous,
}

impl std::str::FromStr for ResponseType {
    type Err = GplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Self::Binary),
            "ordinal3" => Ok(Self::Ordinal3),
            "continuous" => Ok(Self::Continuous),
            other => Err(GplmError::invalid(format!(
                "unknown response type '{other}' (expected binary|ordinal3|continuous)"
            ))),
        }
    }
}

impl ResponseType {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::Ordinal3 => "ordinal3",
            Self::Continuous => "continuous",
        }
    }

    fn check(&self, v: f64) -> bool {
        match self {
            Self::Binary => v == 0.0 || v == 1.0,
            Self::Ordinal3 => v == 1.0 || v == 2.0 || v == 3.0,
            Self::Continuous => v.is_finite(),
        }
    }
}

/// Covariates computed from the landmarks instead of read from the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedCovariate {
    CentroidSize,
}

impl DerivedCovariate {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CentroidSize => "centroid_size",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRecord {
    pub id: String,
    pub landmarks: PathBuf,
    /// Missing for prediction inputs.
    pub response: Option<f64>,
    pub group: Option<String>,
    pub covariates: Vec<f64>,
}

/// Parsed dataset manifest.
///
/// A CSV file with header `id,landmarks,response[,group],<covariates...>`.
/// Lines before the header starting with `#` carry directives:
/// `# response: binary|ordinal3|continuous` and `# derive: centroid_size`.
/// Landmark paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub response_type: ResponseType,
    pub derived: Vec<DerivedCovariate>,
    pub covariate_names: Vec<String>,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let parse_err = |message: String| GplmError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let mut response_type = None;
        let mut derived = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| l.starts_with('#')) {
            let Some((key, value)) = line.trim_start_matches('#').split_once(':') else {
                continue;
            };
            match key.trim() {
                "response" => response_type = Some(value.trim().parse::<ResponseType>()?),
                "derive" => {
                    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                        match item {
                            "centroid_size" => derived.push(DerivedCovariate::CentroidSize),
                            other => {
                                return Err(parse_err(format!("unknown derived covariate '{other}'")))
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| parse_err(e.to_string()))?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols.len() < 3 || cols[..3] != ["id", "landmarks", "response"] {
            return Err(parse_err(
                "header must start with `id,landmarks,response`".into(),
            ));
        }
        let has_group = cols.get(3) == Some(&"group");
        let first_cov = if has_group { 4 } else { 3 };
        let covariate_names: Vec<String> = cols[first_cov..].iter().map(|s| s.to_string()).collect();
        for d in &derived {
            if covariate_names.iter().any(|c| c == d.name()) {
                return Err(parse_err(format!("covariate '{}' is both listed and derived", d.name())));
            }
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let response_type = response_type.unwrap_or(ResponseType::Continuous);
        let mut records = Vec::new();
        let mut seen = HashMap::new();
        for (row, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            let line = rec.position().map_or(row + 2, |p| p.line() as usize);
            let field = |i: usize| rec.get(i).unwrap_or("");
            let id = field(0).to_string();
            if id.is_empty() {
                return Err(parse_err(format!("line {line}: empty id")));
            }
            if let Some(prev) = seen.insert(id.clone(), line) {
                return Err(parse_err(format!("line {line}: id '{id}' already used on line {prev}")));
            }
            let response = match field(2) {
                "" | "NA" => None,
                s => {
                    let v: f64 = s
                        .parse()
                        .map_err(|_| parse_err(format!("line {line}: bad response '{s}'")))?;
                    if !response_type.check(v) {
                        return Err(parse_err(format!(
                            "line {line}: response {v} is not valid for type {}",
                            response_type.name()
                        )));
                    }
                    Some(v)
                }
            };
            let group = has_group
                .then(|| field(3).to_string())
                .filter(|g| !g.is_empty());
            let covariates = (first_cov..cols.len())
                .map(|i| {
                    field(i).parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                        parse_err(format!(
                            "line {line}: covariate '{}' has bad value '{}'",
                            cols[i],
                            field(i)
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            records.push(ManifestRecord {
                id,
                landmarks: base.join(field(1)),
                response,
                group,
                covariates,
            });
        }
        if records.is_empty() {
            return Err(GplmError::invalid(format!(
                "manifest {} lists no specimens",
                path.display()
            )));
        }
        Ok(Self {
            path: path.to_path_buf(),
            response_type,
            derived,
            covariate_names,
            records,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GplmError::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Everything a fit needs, aligned by row: responses, covariates, shapes and
/// the pairwise distance cache.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub ids: Vec<String>,
    pub response_type: ResponseType,
    pub responses: Vec<Option<f64>>,
    /// Group ids as given; rows without a group form their own subject.
    pub groups: Vec<Option<String>>,
    /// Listed covariates followed by derived ones.
    pub covariate_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub configurations: Vec<Configuration>,
    pub sizes: Vec<f64>,
    pub shapes: Vec<PreShape>,
    pub k: usize,
    pub m: usize,
    /// SHA-256 of all preshapes.
    pub hash: String,
    pub cache: Option<Arc<SmootherCache>>,
}

impl DatasetBundle {
    /// Builds a bundle from in-memory parts; no cache is attached.
    pub fn from_parts(
        ids: Vec<String>,
        response_type: ResponseType,
        responses: Vec<Option<f64>>,
        covariate_names: Vec<String>,
        x: DMatrix<f64>,
        configurations: Vec<Configuration>,
    ) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(GplmError::invalid("dataset has no specimens"));
        }
        if responses.len() != n || x.nrows() != n || configurations.len() != n {
            return Err(GplmError::invalid("dataset parts have different lengths"));
        }
        if x.ncols() != covariate_names.len() {
            return Err(GplmError::invalid("covariate names do not match columns"));
        }
        let (k, m) = (configurations[0].landmarks(), configurations[0].ambient_dim());
        let mut sizes = Vec::with_capacity(n);
        let mut shapes = Vec::with_capacity(n);
        for (id, c) in ids.iter().zip(&configurations) {
            if (c.landmarks(), c.ambient_dim()) != (k, m) {
                return Err(GplmError::DimensionMismatch {
                    id: id.clone(),
                    expected: format!("{k}x{m}"),
                    found: format!("{}x{}", c.landmarks(), c.ambient_dim()),
                });
            }
            let s = preshape(c).map_err(|e| match e {
                GplmError::DegenerateConfiguration(msg) => {
                    GplmError::DegenerateConfiguration(format!("specimen {id}: {msg}"))
                }
                other => other,
            })?;
            sizes.push(s.size);
            shapes.push(s.preshape);
        }
        let hash = preshape_hash(&shapes);
        Ok(Self {
            ids,
            response_type,
            responses,
            groups: vec![None; n],
            covariate_names,
            x,
            configurations,
            sizes,
            shapes,
            k,
            m,
            hash,
            cache: None,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn backend(&self) -> Result<KendallShapeSpace> {
        KendallShapeSpace::new(self.k, self.m)
    }

    /// Attaches the distance cache from `store`, computing it at most once per key.
    pub fn attach_cache(&mut self, store: &CacheStore) -> Result<Arc<SmootherCache>> {
        let cache = store.get_or_build(&self.hash, &self.backend()?, &self.shapes)?;
        self.cache = Some(Arc::clone(&cache));
        Ok(cache)
    }

    /// All responses, failing if any row lacks one.
    pub fn labelled_responses(&self) -> Result<Vec<f64>> {
        self.responses
            .iter()
            .zip(&self.ids)
            .map(|(r, id)| r.ok_or_else(|| GplmError::invalid(format!("specimen {id} has no response"))))
            .collect()
    }

    /// Dense subject index per row: rows sharing a group id share an index,
    /// ungrouped rows get their own.
    pub fn group_indices(&self) -> Vec<usize> {
        let mut map: HashMap<&str, usize> = HashMap::new();
        let mut next = 0;
        self.groups
            .iter()
            .map(|g| {
                let mut fresh = || {
                    next += 1;
                    next - 1
                };
                match g {
                    Some(name) => *map.entry(name.as_str()).or_insert_with(fresh),
                    None => fresh(),
                }
            })
            .collect()
    }

    /// Writes landmark files and a manifest reproducing this bundle into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| GplmError::io(dir, e))?;
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["id".to_string(), "landmarks".into(), "response".into(), "group".into()];
        header.extend(self.covariate_names.iter().cloned());
        let csv_err = |e: csv::Error| GplmError::invalid(format!("manifest serialization: {e}"));
        wtr.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let file = format!("{}.txt", self.ids[i]);
            write_landmarks(&dir.join(&file), &self.configurations[i])?;
            let mut row = vec![
                self.ids[i].clone(),
                file,
                self.responses[i].map(|v| format!("{v:?}")).unwrap_or_default(),
                self.groups[i].clone().unwrap_or_default(),
            ];
            row.extend(self.x.row(i).iter().map(|v| format!("{v:?}")));
            wtr.write_record(&row).map_err(csv_err)?;
        }
        let body = wtr.into_inner().map_err(|e| GplmError::invalid(e.to_string()))?;
        let mut text = format!("# response: {}\n", self.response_type.name());
        text.push_str(&String::from_utf8_lossy(&body));
        let path = dir.join("manifest.csv");
        std::fs::write(&path, text).map_err(|e| GplmError::io(&path, e))?;
        Ok(path)
    }
}

/// Loads a manifest and its landmark files into a bundle, attaching the
/// distance cache from `store` when given.
pub fn ingest(manifest_path: &Path, store: Option<&CacheStore>) -> Result<DatasetBundle> {
    let manifest = Manifest::read(manifest_path)?;
    let configurations = manifest
        .records
        .iter()
        .map(|r| read_landmarks(&r.landmarks))
        .collect::<Result<Vec<_>>>()?;
    let n = manifest.records.len();
    let listed = manifest.covariate_names.len();
    let mut names = manifest.covariate_names.clone();
    names.extend(manifest.derived.iter().map(|d| d.name().to_string()));
    let mut x = DMatrix::zeros(n, names.len());
    for (i, r) in manifest.records.iter().enumerate() {
        for (j, v) in r.covariates.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let mut bundle = DatasetBundle::from_parts(
        manifest.records.iter().map(|r| r.id.clone()).collect(),
        manifest.response_type,
        manifest.records.iter().map(|r| r.response).collect(),
        names,
        x,
        configurations,
    )?;
    for (j, d) in manifest.derived.iter().enumerate() {
        for i in 0..n {
            bundle.x[(i, listed + j)] = match d {
                DerivedCovariate::CentroidSize => bundle.sizes[i],
            };
        }
    }
    bundle.groups = manifest.records.iter().map(|r| r.group.clone()).collect();
    if let Some(store) = store {
        bundle.attach_cache(store)?;
    }
    Ok(bundle)
}
