//! Seeded synthetic datasets for tests, benchmarks and demonstrations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GplmError, Result};
use crate::geometry::{Configuration, SpherePoint};
use crate::models::sigmoid;

/// Responses, covariates and manifold points of a generated dataset.
#[derive(Debug, Clone)]
pub struct SyntheticSample<P> {
    pub points: Vec<P>,
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Half-width in radians of the latitude/longitude patch points are drawn from.
pub const PATCH_HALF_WIDTH: f64 = 0.6;

fn patch_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<SpherePoint> {
    (0..n)
        .map(|_| {
            let lat = rng.random_range(-PATCH_HALF_WIDTH..PATCH_HALF_WIDTH);
            let lon = rng.random_range(-PATCH_HALF_WIDTH..PATCH_HALF_WIDTH);
            SpherePoint::from_lat_lon(lat, lon)
        })
        .collect()
}

/// Standard deviation, in radians, of the latitude jitter used to rank
/// subjects into ordinal classes. Keeps neighbouring classes overlapping so a
/// proportional-odds fit on tangent coordinates has a finite maximizer.
pub const ORDINAL_LABEL_NOISE: f64 = 0.1;

/// Points in a patch of S^2, labelled 1, 2, 3 by tercile of jittered
/// latitude, with one independent standard-normal covariate. Classes are
/// balanced when `n` is a multiple of three.
pub fn sphere_ordinal(n: usize, seed: u64) -> Result<SyntheticSample<SpherePoint>> {
    if n < 3 {
        return Err(GplmError::invalid("sphere_ordinal needs n >= 3"));
    }
    let mut r = rng(seed);
    let points = patch_points(n, &mut r);
    let score: Vec<f64> = points
        .iter()
        .map(|p| p.latitude() + ORDINAL_LABEL_NOISE * normal(&mut r))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]));
    let mut y = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        y[i] = (1 + 3 * rank / n) as f64;
    }
    let x = DMatrix::from_fn(n, 1, |_, _| normal(&mut r));
    Ok(SyntheticSample { points, y, x })
}

/// Smooth test function on the sphere used by the regression generators.
pub fn sphere_signal(p: &SpherePoint) -> f64 {
    let lat = p.latitude();
    let lon = p.0[1].atan2(p.0[0]);
    (3.0 * lat).sin() + 0.5 * (2.0 * lon).cos()
}

/// `y = x beta + g(s) + N(0, sigma^2)` with `x` partly driven by latitude so
/// the smoother has something to remove.
pub fn sphere_plm(n: usize, beta: f64, sigma: f64, seed: u64) -> SyntheticSample<SpherePoint> {
    let mut r = rng(seed);
    let points = patch_points(n, &mut r);
    let x = DMatrix::from_fn(n, 1, |i, _| 0.5 * points[i].latitude() + normal(&mut r));
    let y = (0..n)
        .map(|i| x[(i, 0)] * beta + sphere_signal(&points[i]) + sigma * normal(&mut r))
        .collect();
    SyntheticSample { points, y, x }
}

/// Bernoulli responses with `logit P(y = 1) = x beta + scale * g(s)`.
pub fn sphere_logistic(n: usize, beta: f64, scale: f64, seed: u64) -> SyntheticSample<SpherePoint> {
    let mut r = rng(seed);
    let points = patch_points(n, &mut r);
    let x = DMatrix::from_fn(n, 1, |_, _| normal(&mut r));
    let y = (0..n)
        .map(|i| {
            let p = sigmoid(x[(i, 0)] * beta + scale * sphere_signal(&points[i]));
            f64::from(u8::from(r.random::<f64>() < p))
        })
        .collect();
    SyntheticSample { points, y, x }
}

/// Uniformly random proper rotation of R^m (QR of a Gaussian matrix with the
/// sign convention fixed, determinant forced to +1).
pub fn random_rotation(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Noisy copies of a random template of `k` landmarks in `m` dimensions, each
/// with a random similarity transform. The unit-scale template is perturbed by
/// isotropic Gaussian noise of standard deviation `spread`.
pub fn kendall_specimens(n: usize, k: usize, m: usize, spread: f64, seed: u64) -> Result<Vec<Configuration>> {
    let mut r = rng(seed);
    let template = DMatrix::from_fn(k, m, |_, _| normal(&mut r));
    (0..n)
        .map(|_| {
            let noisy = DMatrix::from_fn(k, m, |i, j| template[(i, j)] + spread * normal(&mut r));
            let rot = random_rotation(m, &mut r);
            let scale = r.random_range(0.5..20.0);
            let shift: Vec<f64> = (0..m).map(|_| 10.0 * normal(&mut r)).collect();
            Configuration::new(noisy).map(|c| c.transformed(scale, &rot, &shift))
        })
        .collect()
}

/// Two groups of specimens whose templates differ by a shape change of size
/// `effect`, with a size covariate; labels are 0 and 1. Mimics the layout of a
/// small two-sex morphometric sample.
pub fn kendall_two_groups(
    per_group: usize,
    k: usize,
    effect: f64,
    seed: u64,
) -> Result<(Vec<Configuration>, Vec<f64>, Vec<f64>)> {
    let m = 3;
    let mut r = rng(seed);
    let template = DMatrix::from_fn(k, m, |_, _| normal(&mut r));
    let shift = DMatrix::from_fn(k, m, |_, _| effect * normal(&mut r));
    let mut configs = Vec::new();
    let mut labels = Vec::new();
    let mut sizes = Vec::new();
    for label in [1.0, 0.0] {
        for _ in 0..per_group {
            let base = if label == 1.0 { &template + &shift } else { template.clone() };
            let noisy = DMatrix::from_fn(k, m, |i, j| base[(i, j)] + 0.05 * normal(&mut r));
            let size = if label == 1.0 { 110.0 } else { 100.0 } + 4.0 * normal(&mut r);
            let rot = random_rotation(m, &mut r);
            let c = Configuration::new(noisy)?;
            let cs = crate::geometry::centroid_size(&c)?;
            configs.push(c.transformed(size / cs, &rot, &[1.0, -2.0, 0.5]));
            labels.push(label);
            sizes.push(size);
        }
    }
    Ok((configs, labels, sizes))
}
