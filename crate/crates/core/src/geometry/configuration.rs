use nalgebra::DMatrix;
use crate::error::{GplmError, Result};

/// Landmark coordinates of one specimen, `k` landmarks by `m` ambient axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    coords: DMatrix<f64>,
}

impl Configuration {
    pub fn new(coords: DMatrix<f64>) -> Result<Self> {
        if coords.nrows() < 2 || coords.ncols() < 1 {
            return Err(GplmError::invalid(format!(
                "configuration needs k >= 2 landmarks and m >= 1 axes, got {}x{}",
                coords.nrows(),
                coords.ncols()
            )));
        }
        if let Some(bad) = coords.iter().find(|v| !v.is_finite()) {
            return Err(GplmError::invalid(format!(
                "configuration contains non-finite coordinate {bad}"
            )));
        }
        Ok(Self { coords })
    }

    pub fn from_rows(k: usize, m: usize, values: &[f64]) -> Result<Self> {
        if values.len() != k * m {
            return Err(GplmError::invalid(format!(
                "expected {} coordinates for a {k}x{m} configuration, got {}",
                k * m,
                values.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(k, m, values))
    }

    pub fn landmarks(&self) -> usize {
        self.coords.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Applies `x -> scale * x * rotation + 1 t^T`.
    pub fn transformed(&self, scale: f64, rotation: &DMatrix<f64>, translation: &[f64]) -> Self {
        let mut out = &self.coords * rotation * scale;
        for mut row in out.row_iter_mut() {
            for (v, t) in row.iter_mut().zip(translation) {
                *v += t;
            }
        }
        Self { coords: out }
    }
}

/// Unit-norm Helmertized configuration, stored as `(k-1) x m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreShape {
    z: DMatrix<f64>,
}

impl PreShape {
    /// Wraps a matrix that is already unit norm (tolerance 1e-9), renormalizing it
    /// to machine precision.
    pub fn new(z: DMatrix<f64>) -> Result<Self> {
        let norm = z.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(GplmError::invalid(format!(
                "preshape must have unit Frobenius norm, got {norm}"
            )));
        }
        Ok(Self { z: z / norm })
    }

    /// Scales an arbitrary nonzero matrix onto the preshape sphere.
    pub fn normalize(z: DMatrix<f64>) -> Result<Self> {
        let norm = z.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(GplmError::DegenerateConfiguration(format!(
                "cannot normalize matrix with norm {norm}"
            )));
        }
        Ok(Self { z: z / norm })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Number of landmarks `k` of the underlying configuration.
    pub fn landmarks(&self) -> usize {
        self.z.nrows() + 1
    }

    pub fn ambient_dim(&self) -> usize {
        self.z.ncols()
    }
}

/// A preshape together with the centroid size it was scaled by.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSample {
    pub preshape: PreShape,
    pub size: f64,
}

/// Sub-Helmert matrix: row `j` (1-based) holds `j` copies of
/// `h_j = -(j(j+1))^{-1/2}`, then `-j h_j`, then zeros.
pub fn helmert_submatrix(k: usize) -> Result<DMatrix<f64>> {
    if k < 2 {
        return Err(GplmError::invalid(format!(
            "Helmert submatrix needs k >= 2, got {k}"
        )));
    }
    let mut h = DMatrix::zeros(k - 1, k);
    for j in 1..k {
        let hj = -1.0 / ((j * (j + 1)) as f64).sqrt();
        for c in 0..j {
            h[(j - 1, c)] = hj;
        }
        h[(j - 1, j)] = -(j as f64) * hj;
    }
    Ok(h)
}

/// `H X` without materializing `H`, using running column sums.
fn helmertize(x: &Configuration) -> DMatrix<f64> {
    let (k, m) = (x.landmarks(), x.ambient_dim());
    let coords = x.coords();
    let mut out = DMatrix::zeros(k - 1, m);
    let mut running = vec![0.0; m];
    for j in 1..k {
        for (c, acc) in running.iter_mut().enumerate() {
            *acc += coords[(j - 1, c)];
        }
        let hj = -1.0 / ((j * (j + 1)) as f64).sqrt();
        for c in 0..m {
            out[(j - 1, c)] = hj * running[c] - (j as f64) * hj * coords[(j, c)];
        }
    }
    out
}

fn checked_helmertized(x: &Configuration) -> Result<(DMatrix<f64>, f64)> {
    let xh = helmertize(x);
    let size = xh.norm();
    let scale = x.coords().amax();
    if !(size > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(GplmError::DegenerateConfiguration(
            "all landmarks coincide (centroid size is zero)".into(),
        ));
    }
    Ok((xh, size))
}

/// Centroid size `||H X||_F`.
pub fn centroid_size(x: &Configuration) -> Result<f64> {
    checked_helmertized(x).map(|(_, size)| size)
}

/// Removes location and scale: `Z = H X / ||H X||`.
pub fn preshape(x: &Configuration) -> Result<ShapeSample> {
    let (xh, size) = checked_helmertized(x)?;
    Ok(ShapeSample {
        preshape: PreShape { z: xh / size },
        size,
    })
}
