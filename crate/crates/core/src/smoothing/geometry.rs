use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{GplmError, Result};
use crate::geometry::ManifoldBackend;

/// Source of pairwise `(distance, log volume density)` values over an indexed
/// point set. Implemented by the precomputed cache, by on-the-fly evaluation,
/// and by index-remapping views used for cross-validation folds.
pub trait PairwiseGeometry: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(rho(s_i, s_j), log theta_{s_i}(s_j))`.
    fn pair(&self, i: usize, j: usize) -> Result<(f64, f64)>;
}

/// Precomputed distance and log-density matrices. Both are symmetric with an
/// exactly zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherCache {
    distances: DMatrix<f64>,
    log_density: DMatrix<f64>,
}

impl SmootherCache {
    pub fn build<B: ManifoldBackend>(backend: &B, points: &[B::Point]) -> Result<Self> {
        let n = points.len();
        let rows: Vec<Vec<(f64, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        let rho = backend.distance(&points[i], &points[j])?;
                        Ok((rho, backend.log_density_at(rho)))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;

        let mut distances = DMatrix::zeros(n, n);
        let mut log_density = DMatrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (offset, (rho, lt)) in row.into_iter().enumerate() {
                let j = i + 1 + offset;
                distances[(i, j)] = rho;
                distances[(j, i)] = rho;
                log_density[(i, j)] = lt;
                log_density[(j, i)] = lt;
            }
        }
        Ok(Self {
            distances,
            log_density,
        })
    }

    /// Reassembles a cache from stored matrices, checking the invariants.
    pub fn from_parts(distances: DMatrix<f64>, log_density: DMatrix<f64>) -> Result<Self> {
        let n = distances.nrows();
        if distances.shape() != (n, n) || log_density.shape() != (n, n) {
            return Err(GplmError::invalid("cache matrices must be square and equal-sized"));
        }
        for i in 0..n {
            if distances[(i, i)] != 0.0 || log_density[(i, i)] != 0.0 {
                return Err(GplmError::invalid("cache diagonal must be exactly zero"));
            }
            for j in 0..i {
                if distances[(i, j)] != distances[(j, i)]
                    || log_density[(i, j)] != log_density[(j, i)]
                {
                    return Err(GplmError::invalid("cache matrices must be symmetric"));
                }
            }
        }
        Ok(Self {
            distances,
            log_density,
        })
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }

    pub fn log_density(&self) -> &DMatrix<f64> {
        &self.log_density
    }
}

impl PairwiseGeometry for SmootherCache {
    fn len(&self) -> usize {
        self.distances.nrows()
    }

    fn pair(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        Ok((self.distances[(i, j)], self.log_density[(i, j)]))
    }
}

/// Evaluates every pair on demand through the backend; no caching.
pub struct LiveGeometry<'a, B: ManifoldBackend> {
    backend: &'a B,
    points: &'a [B::Point],
}

impl<'a, B: ManifoldBackend> LiveGeometry<'a, B> {
    pub fn new(backend: &'a B, points: &'a [B::Point]) -> Self {
        Self { backend, points }
    }
}

impl<B: ManifoldBackend> PairwiseGeometry for LiveGeometry<'_, B> {
    fn len(&self) -> usize {
        self.points.len()
    }

    fn pair(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        if i == j {
            return Ok((0.0, 0.0));
        }
        // same evaluation order as the cache, so both agree bit for bit
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let rho = self.backend.distance(&self.points[lo], &self.points[hi])?;
        Ok((rho, self.backend.log_density_at(rho)))
    }
}

/// A view of `inner` restricted to (and renumbered by) `index`.
pub struct Subset<'a> {
    inner: &'a dyn PairwiseGeometry,
    index: Vec<usize>,
}

impl<'a> Subset<'a> {
    pub fn new(inner: &'a dyn PairwiseGeometry, index: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = index.iter().find(|&&i| i >= inner.len()) {
            return Err(GplmError::invalid(format!(
                "subset index {bad} out of range for {} points",
                inner.len()
            )));
        }
        Ok(Self { inner, index })
    }

    pub fn indices(&self) -> &[usize] {
        &self.index
    }
}

impl PairwiseGeometry for Subset<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn pair(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        self.inner.pair(self.index[i], self.index[j])
    }
}
