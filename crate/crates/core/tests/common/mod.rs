//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Rotation3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use gplm_core::geometry::{preshape, Configuration, PreShape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn random_config(k: usize, m: usize, r: &mut ChaCha8Rng) -> Configuration {
    Configuration::new(DMatrix::from_fn(k, m, |_, _| normal(r))).unwrap()
}

pub fn random_preshape(k: usize, m: usize, r: &mut ChaCha8Rng) -> PreShape {
    preshape(&random_config(k, m, r)).unwrap().preshape
}

/// `tr(A^T B R)` for the rotation with rotation vector `v`.
fn alignment(a: &DMatrix<f64>, b: &DMatrix<f64>, v: &[f64; 3]) -> f64 {
    let rot = Rotation3::new(Vector3::new(v[0], v[1], v[2]));
    let r = DMatrix::from_fn(3, 3, |i, j| rot[(i, j)]);
    (a.transpose() * b * r).trace()
}

/// Nelder-Mead minimization of `f` from `start` with initial simplex edge `step`.
pub fn nelder_mead<const D: usize>(f: impl Fn(&[f64; D]) -> f64, start: [f64; D], step: f64, iters: usize) -> ([f64; D], f64) {
    let mut simplex: Vec<([f64; D], f64)> = (0..=D)
        .map(|i| {
            let mut p = start;
            if i > 0 {
                p[i - 1] += step;
            }
            (p, f(&p))
        })
        .collect();
    let lerp = |a: &[f64; D], b: &[f64; D], t: f64| {
        let mut out = [0.0; D];
        for d in 0..D {
            out[d] = a[d] + t * (b[d] - a[d]);
        }
        out
    };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[D].1 - simplex[0].1).abs() < 1e-16 {
            break;
        }
        let mut centroid = [0.0; D];
        for (p, _) in &simplex[..D] {
            for d in 0..D {
                centroid[d] += p[d] / D as f64;
            }
        }
        let worst = simplex[D];
        let reflected = lerp(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = lerp(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[D] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[D - 1].1 {
            simplex[D] = (reflected, fr);
        } else {
            let contracted = lerp(&centroid, &worst.0, 0.5);
            let fc = f(&contracted);
            if fc < worst.1 {
                simplex[D] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&best, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Procrustes distance between 3D preshapes by direct search over SO(3):
/// a coarse rotation-vector grid, then Nelder-Mead from the best grid points.
pub fn brute_force_distance(a: &PreShape, b: &PreShape) -> f64 {
    let (za, zb) = (a.matrix(), b.matrix());
    assert_eq!(za.ncols(), 3);
    let steps = 8;
    let mut grid = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                let c = |t: usize| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * t as f64 / steps as f64;
                let v = [c(i), c(j), c(k)];
                if v.iter().map(|x| x * x).sum::<f64>() <= std::f64::consts::PI.powi(2) + 1e-9 {
                    grid.push((v, alignment(za, zb, &v)));
                }
            }
        }
    }
    grid.sort_by(|x, y| y.1.total_cmp(&x.1));
    let objective = |v: &[f64; 3]| -alignment(za, zb, v);
    let mut best = f64::NEG_INFINITY;
    for (start, _) in grid.iter().take(4) {
        let (mut p, _) = nelder_mead(objective, *start, 0.3, 2000);
        // restart shrinks the simplex onto the optimum
        let mut val = 0.0;
        for step in [0.05, 1e-3, 1e-5] {
            let (q, fq) = nelder_mead(objective, p, step, 2000);
            p = q;
            val = -fq;
        }
        best = best.max(val);
    }
    best.clamp(-1.0, 1.0).acos()
}

/// Kernel estimate from one query's distances by the textbook formula in the
/// linear domain: `sum_j K_h(rho_j) theta_j^{-1} t_j / sum_j K_h(rho_j) theta_j^{-1}`
/// with the normalized Gaussian kernel and `theta = (sin rho / rho)^exponent`.
pub fn direct_estimate(distances: &[f64], exponent: f64, h: f64, targets: &[f64]) -> f64 {
    let kernel = |d: f64| (-(d * d) / (2.0 * h * h)).exp() / (h * (2.0 * std::f64::consts::PI).sqrt());
    let theta = |d: f64| if d == 0.0 { 1.0 } else { (d.sin() / d).powf(exponent) };
    let w: Vec<f64> = distances.iter().map(|&d| kernel(d) / theta(d)).collect();
    let total: f64 = w.iter().sum();
    w.iter().zip(targets).map(|(w, t)| w * t).sum::<f64>() / total
}

/// `direct_estimate` at every point of a sample, column by column.
pub fn direct_smoother(distances: &DMatrix<f64>, exponent: f64, h: f64, targets: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(distances.nrows(), targets.ncols(), |i, c| {
        let d: Vec<f64> = distances.row(i).iter().copied().collect();
        let t: Vec<f64> = targets.column(c).iter().copied().collect();
        direct_estimate(&d, exponent, h, &t)
    })
}

/// Maximum-likelihood logistic regression by Newton's method; `design`
/// includes any intercept column.
pub fn newton_logistic(y: &[f64], design: &DMatrix<f64>) -> DVector<f64> {
    let (n, p) = design.shape();
    let mut beta = DVector::zeros(p);
    for _ in 0..100 {
        let eta = design * &beta;
        let mu: Vec<f64> = eta.iter().map(|e| 1.0 / (1.0 + (-e).exp())).collect();
        let grad = design.transpose() * DVector::from_fn(n, |i, _| y[i] - mu[i]);
        let weighted = DMatrix::from_fn(n, p, |i, j| design[(i, j)] * mu[i] * (1.0 - mu[i]));
        let info = design.transpose() * weighted;
        let step = info.cholesky().expect("information is positive definite").solve(&grad);
        beta += &step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    beta
}

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Largest elementwise absolute difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
