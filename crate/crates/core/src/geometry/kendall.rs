use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{
    angle_from_one_minus_cos, inv_sinc, ln_sinc, procrustes_mean, ManifoldBackend, PreShape,
    TangentChart,
};
use crate::error::{GplmError, Result};
use crate::linalg::thin_svd;

/// Optimal rotation of `moving` onto `target`, with the quantities it determines.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// `R` in SO(m) minimizing `||target - moving R||`.
    pub rotation: DMatrix<f64>,
    /// Signed sum of singular values of `target^T moving`; equals `cos(rho)`.
    pub sum_lambda: f64,
    /// `moving R`.
    pub aligned: DMatrix<f64>,
    /// `1 - cos(rho)`, computed from the aligned residual.
    pub one_minus_cos: f64,
}

fn check_same_space(a: &PreShape, b: &PreShape) -> Result<()> {
    if a.matrix().shape() != b.matrix().shape() {
        return Err(GplmError::invalid(format!(
            "preshapes live in different spaces: {:?} vs {:?}",
            a.matrix().shape(),
            b.matrix().shape()
        )));
    }
    Ok(())
}

/// Orthogonal Procrustes rotation restricted to SO(m): reflections are never used,
/// the smallest singular value takes a negative sign when `det(target^T moving) < 0`.
pub fn optimal_rotation(target: &PreShape, moving: &PreShape) -> Result<Alignment> {
    check_same_space(target, moving)?;
    let cross = target.matrix().transpose() * moving.matrix();
    let svd = thin_svd(&cross, "optimal rotation")?;
    let (u, sigma, v) = (svd.u, svd.sigma, svd.v);
    let smallest = sigma.imin();
    let flip = u.determinant() * v.determinant() < 0.0;

    let m = sigma.len();
    let mut d = DMatrix::identity(m, m);
    let mut sum_lambda = sigma.sum();
    if flip {
        d[(smallest, smallest)] = -1.0;
        sum_lambda -= 2.0 * sigma[smallest];
    }
    let rotation = v * d * u.transpose();
    let aligned = moving.matrix() * &rotation;
    let one_minus_cos = (target.matrix() - &aligned).norm_squared() / 2.0;
    Ok(Alignment {
        rotation,
        sum_lambda,
        aligned,
        one_minus_cos,
    })
}

/// Riemannian (Procrustes) distance between the shapes of two preshapes.
///
/// Equals `arcsin(sqrt(1 - (sum lambda)^2))`. The signed sum is never negative
/// (`lambda_1 >= |lambda_m|`), so this is also `arccos(sum lambda)`; the value is
/// evaluated through the aligned residual to stay accurate near zero.
pub fn procrustes_distance(a: &PreShape, b: &PreShape) -> Result<f64> {
    if a.matrix() == b.matrix() {
        return Ok(0.0);
    }
    let al = optimal_rotation(a, b)?;
    Ok(angle_from_one_minus_cos(al.one_minus_cos))
}

/// The printed closed form, evaluated literally from the eigenvalues of
/// `Z1^T Z2 Z2^T Z1`. Independent of the SVD route; used to cross-check it.
pub fn procrustes_distance_by_eigenvalues(a: &PreShape, b: &PreShape) -> Result<f64> {
    check_same_space(a, b)?;
    let cross = a.matrix().transpose() * b.matrix();
    let gram = &cross * cross.transpose();
    let eig = SymmetricEigen::new(gram);
    let mut lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&v| v.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|x, y| y.total_cmp(x));
    if cross.determinant() < 0.0 {
        if let Some(last) = lambdas.last_mut() {
            *last = -*last;
        }
    }
    let s = lambdas.iter().sum::<f64>().clamp(-1.0, 1.0);
    Ok((1.0 - s * s).clamp(0.0, 1.0).sqrt().asin())
}

/// Exponent `m(k-1) - 2 - m(m-1)/2` of the shape-space volume density.
pub fn volume_density_exponent(k: usize, m: usize) -> f64 {
    (m * (k - 1)) as f64 - 2.0 - (m * (m - 1)) as f64 / 2.0
}

/// `log theta` between two shapes of a `k`-landmark, `m`-dimensional space.
pub fn log_volume_density(a: &PreShape, b: &PreShape, k: usize, m: usize) -> Result<f64> {
    let rho = procrustes_distance(a, b)?;
    Ok(volume_density_exponent(k, m) * ln_sinc(rho))
}

fn flatten_rows(z: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = z.shape();
    DVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| z[(i, j)])))
}

fn unflatten_rows(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v.as_slice())
}

/// Inverse exponential map at `pole` after rotating `s` into optimal alignment,
/// flattened row-major. The norm equals `procrustes_distance(pole, s)`.
pub fn tangent_coordinates(pole: &PreShape, s: &PreShape) -> Result<DVector<f64>> {
    if pole.matrix() == s.matrix() {
        return Ok(DVector::zeros(pole.matrix().len()));
    }
    let al = optimal_rotation(pole, s)?;
    let rho = angle_from_one_minus_cos(al.one_minus_cos);
    if rho >= FRAC_PI_2 {
        return Err(GplmError::OutOfChart { distance: rho });
    }
    if rho == 0.0 {
        return Ok(DVector::zeros(pole.matrix().len()));
    }
    // aligned - cos(rho) pole, rearranged to avoid cancellation for small rho
    let direction = (&al.aligned - pole.matrix()) + pole.matrix() * al.one_minus_cos;
    Ok(flatten_rows(&(direction * inv_sinc(rho))))
}

/// Exponential map on the preshape sphere from `pole` along a flattened
/// tangent vector.
pub fn exp_map(pole: &PreShape, v: &DVector<f64>) -> Result<PreShape> {
    let (rows, cols) = pole.matrix().shape();
    if v.len() != rows * cols {
        return Err(GplmError::invalid(format!(
            "tangent vector has length {}, expected {}",
            v.len(),
            rows * cols
        )));
    }
    let t = v.norm();
    if t == 0.0 {
        return Ok(pole.clone());
    }
    let dir = unflatten_rows(v, rows, cols) / t;
    PreShape::normalize(pole.matrix() * t.cos() + dir * t.sin())
}

/// Kendall's shape space of `k` landmarks in `m` dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KendallShapeSpace {
    pub k: usize,
    pub m: usize,
}

impl KendallShapeSpace {
    pub fn new(k: usize, m: usize) -> Result<Self> {
        if k < 3 || m < 1 {
            return Err(GplmError::invalid(format!(
                "shape space needs k >= 3 and m >= 1, got k={k}, m={m}"
            )));
        }
        Ok(Self { k, m })
    }

    pub fn exponent(&self) -> f64 {
        volume_density_exponent(self.k, self.m)
    }

    fn check(&self, p: &PreShape) -> Result<()> {
        if p.landmarks() != self.k || p.ambient_dim() != self.m {
            return Err(GplmError::invalid(format!(
                "preshape of a {}x{} configuration used in a {}x{} shape space",
                p.landmarks(),
                p.ambient_dim(),
                self.k,
                self.m
            )));
        }
        Ok(())
    }
}

impl ManifoldBackend for KendallShapeSpace {
    type Point = PreShape;

    fn distance(&self, a: &PreShape, b: &PreShape) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        procrustes_distance(a, b)
    }

    fn log_density_at(&self, rho: f64) -> f64 {
        self.exponent() * ln_sinc(rho)
    }

    fn injectivity_bound(&self) -> f64 {
        FRAC_PI_2
    }
}

impl TangentChart for KendallShapeSpace {
    fn intrinsic_mean(&self, points: &[PreShape]) -> Result<PreShape> {
        for p in points {
            self.check(p)?;
        }
        procrustes_mean(points)
    }

    fn log_map(&self, pole: &PreShape, p: &PreShape) -> Result<DVector<f64>> {
        tangent_coordinates(pole, p)
    }
}
