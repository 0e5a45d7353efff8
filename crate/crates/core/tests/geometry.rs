mod common;

use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use common::{brute_force_distance, normal, random_config, random_preshape, rng};
use gplm_core::geometry::{
    exp_map, preshape, procrustes_distance, procrustes_mean, tangent_coordinates, volume_density_exponent,
    KendallShapeSpace, ManifoldBackend, PreShape,
};
use gplm_core::synthetic::random_rotation;
use nalgebra::DVector;

const CASES: usize = 128;

#[test]
fn distance_is_similarity_invariant() {
    let mut r = rng(101);
    for case in 0..CASES {
        let k = r.random_range(3..12);
        let m = if case % 4 == 0 { 2 } else { 3 };
        let (a, b) = (random_config(k, m, &mut r), random_config(k, m, &mut r));
        let base = procrustes_distance(&preshape(&a).unwrap().preshape, &preshape(&b).unwrap().preshape).unwrap();
        let move_it = |c: &gplm_core::geometry::Configuration, r: &mut _| {
            let rot = random_rotation(m, r);
            let scale = 10f64.powf(normal(r));
            let shift: Vec<f64> = (0..m).map(|_| 100.0 * normal(r)).collect();
            preshape(&c.transformed(scale, &rot, &shift)).unwrap().preshape
        };
        let (ta, tb) = (move_it(&a, &mut r), move_it(&b, &mut r));
        let moved = procrustes_distance(&ta, &tb).unwrap();
        assert!((moved - base).abs() <= 1e-9, "case {case} k={k} m={m}: {base} vs {moved} {}", procrustes_distance(&ta, &preshape(&a).unwrap().preshape).unwrap());
    }
}

#[test]
fn distance_is_symmetric_and_bounded() {
    let mut r = rng(102);
    for case in 0..CASES {
        let k = r.random_range(3..15);
        let m = r.random_range(1..4);
        let (a, b) = (random_preshape(k, m, &mut r), random_preshape(k, m, &mut r));
        let ab = procrustes_distance(&a, &b).unwrap();
        let ba = procrustes_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() <= 1e-12, "case {case}: {ab} vs {ba}");
        assert!((0.0..=FRAC_PI_2).contains(&ab), "case {case}: {ab}");
        assert_eq!(procrustes_distance(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn distance_matches_brute_force_rotation_search() {
    let mut r = rng(103);
    for case in 0..CASES {
        let k = r.random_range(3..9);
        let (a, b) = (random_preshape(k, 3, &mut r), random_preshape(k, 3, &mut r));
        let fast = procrustes_distance(&a, &b).unwrap();
        let slow = brute_force_distance(&a, &b);
        assert!((fast - slow).abs() <= 1e-6, "case {case} (k={k}): {fast} vs {slow}");
    }
}

#[test]
fn brute_force_agrees_on_reflected_configurations() {
    // mirror images are not rotations of each other in 3D; the search must
    // not find a spurious zero
    let mut r = rng(104);
    for case in 0..CASES {
        let k = r.random_range(4..9);
        let c = random_config(k, 3, &mut r);
        let mut mirror = c.coords().clone();
        mirror.column_mut(0).neg_mut();
        let a = preshape(&c).unwrap().preshape;
        let b = preshape(&gplm_core::geometry::Configuration::new(mirror).unwrap()).unwrap().preshape;
        let fast = procrustes_distance(&a, &b).unwrap();
        assert!((fast - brute_force_distance(&a, &b)).abs() <= 1e-6, "case {case}");
    }
}

#[test]
fn volume_density_lies_in_unit_interval() {
    let mut r = rng(105);
    for case in 0..CASES {
        let k = r.random_range(3..30);
        let m = r.random_range(2..4);
        let space = KendallShapeSpace::new(k, m).unwrap();
        let (a, b) = (random_preshape(k, m, &mut r), random_preshape(k, m, &mut r));
        let theta = space.log_volume_density(&a, &b).unwrap().exp();
        assert!(theta > 0.0 && theta <= 1.0, "case {case}: {theta}");
        assert_eq!(space.log_volume_density(&a, &a).unwrap(), 0.0);
    }
    let space = KendallShapeSpace::new(7, 3).unwrap();
    assert_eq!(space.log_density_at(0.0).exp(), 1.0);
}

#[test]
fn volume_density_exponent_values() {
    assert_eq!(volume_density_exponent(7, 3), 13.0);
    assert_eq!(volume_density_exponent(1423, 3), 4261.0);
    for k in 3..40 {
        let m = 3;
        assert_eq!(volume_density_exponent(k, m), (m * (k - 1)) as f64 - 2.0 - 3.0);
    }
}

fn full_procrustes_objective(mean: &PreShape, shapes: &[PreShape]) -> f64 {
    shapes
        .iter()
        .map(|s| procrustes_distance(mean, s).unwrap().sin().powi(2))
        .sum()
}

#[test]
fn procrustes_mean_minimizes_the_frechet_objective() {
    let mut r = rng(106);
    let template = random_config(8, 3, &mut r);
    let shapes: Vec<PreShape> = (0..15)
        .map(|_| {
            let noisy = template.coords().map(|v| v + 0.08 * normal(&mut r));
            let rot = random_rotation(3, &mut r);
            let c = gplm_core::geometry::Configuration::new(noisy).unwrap();
            preshape(&c.transformed(2.0, &rot, &[0.0; 3])).unwrap().preshape
        })
        .collect();
    let mean = procrustes_mean(&shapes).unwrap();
    let best = full_procrustes_objective(&mean, &shapes);
    for s in &shapes {
        assert!(best <= full_procrustes_objective(s, &shapes));
    }
    let dim = mean.matrix().len();
    for case in 0..CASES {
        // horizontal perturbation of the mean along a random tangent direction
        let raw = DVector::from_fn(dim, |_, _| normal(&mut r));
        let probe = exp_map(&mean, &(raw.normalize() * 1e-3)).unwrap();
        let probe = PreShape::normalize(probe.matrix().clone()).unwrap();
        let coords = tangent_coordinates(&mean, &probe).unwrap();
        let perturbed = exp_map(&mean, &coords).unwrap();
        assert!(
            best <= full_procrustes_objective(&perturbed, &shapes) + 1e-14,
            "case {case}"
        );
    }
}

#[test]
fn tangent_coordinates_preserve_distance_and_invert_exp() {
    let mut r = rng(107);
    for case in 0..CASES {
        let k = r.random_range(4..10);
        let pole = random_preshape(k, 3, &mut r);
        let s = random_preshape(k, 3, &mut r);
        let Ok(v) = tangent_coordinates(&pole, &s) else {
            continue;
        };
        let rho = procrustes_distance(&pole, &s).unwrap();
        assert!((v.norm() - rho).abs() <= 1e-10, "case {case}");
        let back = exp_map(&pole, &v).unwrap();
        assert!(procrustes_distance(&back, &s).unwrap() <= 1e-7, "case {case}");
    }
}
