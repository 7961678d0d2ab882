mod common;

use std::f64::consts::PI;

use common::*;
use ks_selfsim::green::{apply_green, green_matrix, poisson_mode};
use ks_selfsim::stencil::{gradient_energy, laplacian_mode};
use ks_selfsim::{make_grid, Error, ModeField};
use proptest::prelude::*;

#[test]
fn two_node_grid() {
    let g = make_grid(2, 1.0, 0.0).unwrap();
    assert_eq!(g.nodes(), &[0.0, 1.0]);
    assert!((g.weights().iter().sum::<f64>() - PI).abs() < 1e-14);
}

#[test]
fn default_grid_area_and_mu_mass() {
    let g = make_grid(2048, 16.0, 0.0).unwrap();
    assert!((g.weights().iter().sum::<f64>() - 256.0 * PI).abs() < 1e-10);
    let m = g.quad_fn(mu);
    assert!((m - (1.0 - 1.0 / 257.0)).abs() < 1e-6, "{m}");
}

#[test]
fn stretched_grids_keep_invariants() {
    for s in [0.0, 0.3, 1.0] {
        let g = make_grid(512, 12.0, s).unwrap();
        assert!(g.nodes().windows(2).all(|p| p[1] > p[0]));
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let area = g.weights().iter().sum::<f64>();
        assert!((area / (144.0 * PI) - 1.0).abs() < 1e-12, "stretch {s}: {area}");
    }
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(matches!(make_grid(1, 1.0, 0.0), Err(Error::Parameter(_))));
    assert!(matches!(make_grid(64, -1.0, 0.0), Err(Error::Parameter(_))));
    assert!(matches!(make_grid(64, 1.0, 1.5), Err(Error::Parameter(_))));
}

#[test]
fn integrate_examples() {
    let g = make_grid(2048, 16.0, 0.0).unwrap();
    let gauss = ModeField::from_fn(g.clone(), 0, |r| (-0.5 * r * r).exp() / (2.0 * PI)).unwrap();
    assert!((gauss.integrate().unwrap() - 1.0).abs() < 1e-10);
    assert_eq!(ModeField::zeros(g.clone(), 0).integrate().unwrap(), 0.0);
    let m = ModeField::from_fn(g.clone(), 0, mu).unwrap().integrate().unwrap();
    assert!((m - 1.0).abs() < 1.0 / 257.0 + 1e-6);
    let k1 = ModeField::from_fn(g, 1, |r| r * (-r * r).exp()).unwrap();
    assert!(matches!(k1.integrate(), Err(Error::Mode(_))));
}

#[test]
fn poisson_of_gaussian_matches_adaptive_quadrature() {
    let w = |s: f64| (-0.5 * s * s).exp() / (2.0 * PI);
    let r_max = 16.0;
    let g = make_grid(2048, r_max, 0.0).unwrap();
    let u = poisson_mode(&ModeField::from_fn(g.clone(), 0, w).unwrap(), 0).unwrap();
    // u(r) = −[log r ∫₀^r w s ds + ∫_r^R log s w s ds]
    let oracle = |r: f64| {
        let inner = if r > 0.0 { r.ln() * simpson(&|s| w(s) * s, 0.0, r, 1e-14) } else { 0.0 };
        let outer = simpson(&|s| if s > 0.0 { s.ln() * w(s) * s } else { 0.0 }, r, r_max, 1e-14);
        -(inner + outer)
    };
    for i in [0usize, 1, 2, 5, 17, 64, 128, 300, 700, 1500, 2047] {
        let r = g.nodes()[i];
        let e = (u.values()[i] - oracle(r)).abs();
        assert!(e < 1e-8, "node {i} r={r}: {e:e}");
    }
}

#[test]
fn poisson_of_zero_and_mode_mismatch() {
    let g = make_grid(128, 8.0, 0.0).unwrap();
    for k in 0..3 {
        let u = poisson_mode(&ModeField::zeros(g.clone(), k), k).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }
    assert!(poisson_mode(&ModeField::zeros(g, 1), 2).is_err());
}

#[test]
fn laplacian_examples() {
    let g = make_grid(512, 4.0, 0.0).unwrap();
    let h = g.nodes()[1];
    let lap = laplacian_mode(&ModeField::from_fn(g.clone(), 0, |r| r * r).unwrap());
    for &v in &lap.values()[..g.len() - 1] {
        assert!((v + 4.0).abs() < 10.0 * h * h, "{v}");
    }
    let harm = laplacian_mode(&ModeField::from_fn(g.clone(), 2, |r| r * r).unwrap());
    for &v in &harm.values()[..g.len() - 1] {
        assert!(v.abs() < 10.0 * h * h, "{v}");
    }
}

#[test]
fn far_field_is_logarithmic() {
    let g = make_grid(1024, 20.0, 0.0).unwrap();
    let w = ModeField::from_fn(g.clone(), 0, |r| (1.0 + r * r) * (-r * r).exp()).unwrap();
    let mass = w.integrate().unwrap();
    let u = poisson_mode(&w, 0).unwrap();
    let shifted: Vec<f64> = g
        .nodes()
        .iter()
        .zip(u.values())
        .filter(|(r, _)| **r > 10.0)
        .map(|(r, v)| v + mass / (2.0 * PI) * r.ln())
        .collect();
    let spread = shifted.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - shifted.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread < 1e-10, "{spread}");
}

#[test]
fn gradient_energy_examples() {
    let g = make_grid(2048, 16.0, 0.0).unwrap();
    assert!(gradient_energy(&ModeField::from_fn(g.clone(), 0, |_| 3.0).unwrap()) < 1e-20);
    // |∇ log μ|² = 16r²/(1+r²)², whose integral over r < R is
    // 16π[log(1+T) + 1/(1+T) − 1], T = R²; it grows like log R.
    let t: f64 = 256.0;
    let closed = 16.0 * PI * ((1.0 + t).ln() + 1.0 / (1.0 + t) - 1.0);
    let e = gradient_energy(&ModeField::from_fn(g, 0, |r| mu(r).ln()).unwrap());
    assert!((e / closed - 1.0).abs() < 1e-5, "{e} vs {closed}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn green_form_is_symmetric(k in 0usize..4, n in 40usize..160, stretch in 0.0f64..1.0) {
        let g = make_grid(n, 9.0, stretch).unwrap();
        let p = green_matrix(&g, k);
        let w = g.weights();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = w[i] * p[(i, j)];
                let b = w[j] * p[(j, i)];
                worst = worst.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        prop_assert!(worst <= 1e-12 * scale);
    }

    #[test]
    fn dense_and_fast_green_agree(k in 0usize..4, a in -2.0f64..2.0, b in 0.2f64..2.0) {
        let g = make_grid(96, 8.0, 0.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| r.powi(k as i32) * (a + r) * (-b * r * r).exp()).collect();
        let fast = apply_green(&g, &f, k);
        let dense = green_matrix(&g, k) * nalgebra::DVector::from_column_slice(&f);
        for i in 0..g.len() {
            prop_assert!((fast[i] - dense[i]).abs() <= 1e-12 * (1.0 + fast[i].abs()));
        }
    }

    #[test]
    fn gradient_energy_is_nonnegative(k in 0usize..4, c in prop::collection::vec(-3.0f64..3.0, 4)) {
        let g = make_grid(128, 8.0, 0.0).unwrap();
        let u = ModeField::from_fn(g, k, |r| {
            r.powi(k as i32) * (c[0] + c[1] * r + c[2] * (3.0 * r).sin()) * (-(c[3].abs() + 0.1) * r * r).exp()
        })
        .unwrap();
        prop_assert!(gradient_energy(&u) >= 0.0);
    }

    #[test]
    fn mode_fields_vanish_at_origin(k in 1usize..4, a in -2.0f64..2.0) {
        let g = make_grid(256, 8.0, 0.0).unwrap();
        let u = ModeField::from_fn(g.clone(), k, |r| a * r.powi(k as i32) * (-r * r).exp()).unwrap();
        let r1 = g.nodes()[1];
        prop_assert!(u.values()[1].abs() <= 2.0 * a.abs() * r1.powi(k.min(2) as i32));
    }
}
