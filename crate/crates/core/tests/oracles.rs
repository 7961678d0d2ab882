mod common;

use std::f64::consts::PI;

use common::*;
use ks_selfsim::{make_grid, solve_stationary};

#[test]
fn simpson_integrates_gaussian_and_mu() {
    let g = radial_integral(&|r| (-0.5 * r * r).exp() / (2.0 * PI), 40.0, 1e-13);
    assert!((g - 1.0).abs() < 1e-11);
    let t = 256.0;
    let m = radial_integral(&mu, 16.0, 1e-13);
    assert!((m - t / (1.0 + t)).abs() < 1e-11);
}

#[test]
fn full_mu_has_zero_loghls_deficit_in_the_limit() {
    let d = truncated_mu_loghls(1.0, 2000.0);
    assert!(d.abs() < 1e-5, "{d}");
}

#[test]
fn shooting_matches_stationary_solver() {
    let m = 4.0 * PI;
    let a = shooting_central_density(m);
    let g = make_grid(4096, 16.0, 0.0).unwrap();
    let s = solve_stationary(m, g, 1e-12, 500).unwrap();
    let rel = (s.central_density() - a).abs() / a;
    println!("shooting {a} solver {} rel {rel:e}", s.central_density());
    assert!(rel < 1e-6, "{rel}");
}
