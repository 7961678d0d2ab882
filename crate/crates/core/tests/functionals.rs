mod common;

use std::f64::consts::PI;

use common::*;
use ks_selfsim::corpus::Corpus;
use ks_selfsim::functionals::{
    free_energy, g_functional, legendre_gap, loghls_deficit, onofri_deficit, poincare_deficit, scaling_family_energy,
    write_deficits_csv, InequalityId, LinearizedOperator, OnofriMeasure,
};
use ks_selfsim::{make_grid, solve_stationary, Error, ModeField, SpecialModes, StationaryState};

fn solve(m: f64, n: usize, r_max: f64) -> StationaryState {
    solve_stationary(m, make_grid(n, r_max, 0.0).unwrap(), 1e-12, 1000).unwrap()
}

/// Simpson's rule over the shooting mesh for `∫ f(r, n_M, m_M) 2πr dr`.
fn shooting_quad(sh: &Shooting, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let p = &sh.profile;
    let h = p[1].0;
    let n = p.len() - 1;
    let mut s = 0.0;
    for (j, &(r, nm, mm)) in p.iter().enumerate() {
        let c = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        s += c * 2.0 * PI * r * f(r, nm, mm);
    }
    s * h / 3.0
}

#[test]
fn gaussian_free_energy_matches_oracle() {
    let m = 4.0;
    let sh = Shooting::solve(m);
    let gauss = |r: f64| m * (-0.5 * r * r).exp() / (2.0 * PI);
    let gauss_cum = |r: f64| m / (2.0 * PI) * (1.0 - (-0.5 * r * r).exp());
    let f1 = shooting_quad(&sh, |r, nm, _| gauss(r) * (gauss(r) / nm).ln());
    // zero net mass: ∫ f (−Δ)⁻¹f = 2π ∫ (m_f)²/r dr with m_f the cumulated difference
    let f2 = 0.5 * shooting_quad(&sh, |r, _, mm| if r > 0.0 { (gauss_cum(r) - mm).powi(2) / (r * r) } else { 0.0 });
    let s = solve(m, 2048, 16.0);
    let n = ModeField::from_fn(s.grid().clone(), 0, gauss).unwrap();
    let e = free_energy(&n, &s).unwrap();
    assert!(e.f > 0.0);
    assert!((e.f1 - f1).abs() < 1e-6 * f1.abs(), "{} vs {f1}", e.f1);
    assert!((e.f2 - f2).abs() < 1e-6 * f2.abs(), "{} vs {f2}", e.f2);
    assert_eq!(e.f, e.f1 - e.f2);
}

#[test]
fn free_energy_flags_mass_mismatch_and_rejects_negative_density() {
    let s = solve(4.0, 512, 12.0);
    let n = ModeField::from_fn(s.grid().clone(), 0, |r| 5.0 * (-0.5 * r * r).exp() / (2.0 * PI)).unwrap();
    assert!(free_energy(&n, &s).unwrap().mass_mismatch);
    let bad = n.map(|v| v - 0.1).unwrap();
    assert!(matches!(free_energy(&bad, &s), Err(Error::Domain(_))));
}

#[test]
fn free_energy_expansion_is_q1() {
    for m in [PI, 4.0 * PI] {
        let s = solve(m, 1024, 12.0);
        let op = LinearizedOperator::from_state(&s).unwrap();
        let g = s.grid().clone();
        let raw = ModeField::from_fn(g.clone(), 0, |r| (1.0 - 0.3 * r * r) * (-0.2 * r * r).exp()).unwrap();
        // remove the mass so that n_M(1 + εf) keeps mass M
        let shift = g.quad(&raw.values().iter().zip(s.n()).map(|(a, b)| a * b).collect::<Vec<_>>()) / m;
        let f = raw.map(|v| v - shift).unwrap();
        let target = 0.5 * m * op.q1(&f).unwrap();
        let mut devs = Vec::new();
        for eps in [1e-2, 1e-3] {
            let n = ModeField::new(g.clone(), 0, s.n().iter().zip(f.values()).map(|(a, b)| a * (1.0 + eps * b)).collect()).unwrap();
            let ratio = free_energy(&n, &s).unwrap().f / (eps * eps) / target;
            devs.push((ratio - 1.0).abs());
        }
        assert!(devs[1] < 1e-2, "M = {m}: {devs:?}");
        // the deviation shrinks linearly in ε
        assert!(devs[1] < 0.2 * devs[0] + 1e-6, "M = {m}: {devs:?}");
    }
}

#[test]
fn loghls_of_gaussian_matches_oracle() {
    let r_max: f64 = 16.0;
    let g = make_grid(2048, r_max, 0.0).unwrap();
    let gauss = |r: f64| (-0.5 * r * r).exp() / (2.0 * PI);
    let cum = |r: f64| (1.0 - (-0.5 * r * r).exp()) / (2.0 * PI);
    let mass = radial_integral(&gauss, r_max, 1e-14);
    let entropy = radial_integral(&|r| gauss(r) * (gauss(r) / mass).ln(), r_max, 1e-14);
    let inter = -mass * mass / (2.0 * PI) * r_max.ln()
        + 2.0 * PI * simpson(&|r| if r > 0.0 { cum(r).powi(2) / r } else { 0.0 }, 0.0, r_max, 1e-14);
    let oracle = entropy + mass * (1.0 + PI.ln()) - 4.0 * PI / mass * inter;
    let d = loghls_deficit(&ModeField::from_fn(g, 0, gauss).unwrap()).unwrap();
    assert_eq!(d.id, InequalityId::LogHls);
    assert!(d.deficit > 0.0);
    assert!((d.deficit - oracle).abs() < 1e-6, "{} vs {oracle}", d.deficit);
}

#[test]
fn onofri_bump_matches_oracle() {
    let m = 2.0 * PI;
    let sh = Shooting::solve(m);
    let phi = |r: f64| 2.0 * (-r * r).exp();
    // ∫|∇φ|² = ∫ 16 r² e^{−2r²} 2πr dr = 4π
    let energy = 4.0 * PI;
    let moment = shooting_quad(&sh, |r, nm, _| nm / m * phi(r).exp());
    let mean = shooting_quad(&sh, |r, nm, _| nm / m * phi(r));
    let oracle = energy / (2.0 * m) - (moment.ln() - mean);
    let s = solve(m, 2048, 16.0);
    let f = ModeField::from_fn(s.grid().clone(), 0, phi).unwrap();
    let d = onofri_deficit(&[f], OnofriMeasure::Stationary(&s)).unwrap();
    assert!(d.deficit > 0.0);
    assert!((d.deficit - oracle).abs() < 1e-6, "{} vs {oracle}", d.deficit);
}

#[test]
fn onofri_constants_and_mode_sums() {
    let s = solve(PI, 1024, 14.0);
    let g = s.grid().clone();
    for measure in [OnofriMeasure::Stationary(&s), OnofriMeasure::Classical] {
        let c = ModeField::from_fn(g.clone(), 0, |_| -2.5).unwrap();
        assert!(onofri_deficit(&[c], measure).unwrap().deficit.abs() < 1e-12);
    }
    let corpus = Corpus::new(11);
    let radial = corpus.potentials(&g, 2.0, 20).unwrap();
    let k1 = corpus.perturbations(&g, 1, 20).unwrap();
    let k2 = corpus.perturbations(&g, 2, 20).unwrap();
    for ((a, b), c) in radial.iter().zip(&k1).zip(&k2) {
        let sum = [a.field.clone(), b.field.clone(), c.field.clone()];
        for measure in [OnofriMeasure::Stationary(&s), OnofriMeasure::Classical] {
            let d = onofri_deficit(&sum, measure).unwrap();
            assert!(d.deficit >= -1e-8 * d.scale(), "{} {:?}", a.id, d);
        }
    }
}

#[test]
fn q1_of_constant_matches_oracle() {
    let m = 2.0 * PI;
    let s = solve(m, 2048, 16.0);
    let op = LinearizedOperator::from_state(&s).unwrap();
    let one = ModeField::from_fn(s.grid().clone(), 0, |_| 1.0).unwrap();
    // without the shell term, Q₁[1] = 1 − (1/M) ∫ n_M (−Δ)⁻¹n_M
    let oracle = 1.0 - Shooting::solve(m).interaction() / m;
    let value = op.q1(&one).unwrap() + op.shell_constant() * m;
    assert!((value - oracle).abs() < 1e-6, "{value} vs {oracle}");
    assert_eq!(op.q1(&ModeField::zeros(s.grid().clone(), 0)).unwrap(), 0.0);
}

#[test]
fn q2_on_special_modes() {
    let s = solve(2.0 * PI, 1024, 12.0);
    let modes = SpecialModes::compute(&s).unwrap();
    let op = LinearizedOperator::new(&s, &modes);
    let r1 = op.q2(&modes.f1).unwrap() / op.q1(&modes.f1).unwrap();
    assert!((r1 - 1.0).abs() < 2e-2, "{r1}");
    let e = modes.dilation_eigenfunction();
    let r2 = op.q2(&e).unwrap() / op.q1(&e).unwrap();
    assert!((r2 - 2.0).abs() < 4e-2, "{r2}");
    let r3 = op.q2(&modes.f01).unwrap() / op.q1(&modes.f01).unwrap();
    assert!((r3 - 2.0).abs() < 4e-2, "{r3}");
    let norm = op.gram(&modes.f00, &modes.f00).unwrap();
    assert!(op.q2(&modes.f00).unwrap().abs() < 1e-4 * norm);
    let lf = op.apply_l(&modes.f1).unwrap();
    let back = op.apply_l_plus(&modes.f1).unwrap();
    assert!(lf.values().iter().zip(back.values()).all(|(a, b)| *a == -*b));
}

#[test]
fn gap_inequalities_on_sampled_perturbations() {
    let s = solve(4.0, 512, 12.0);
    let op = LinearizedOperator::from_state(&s).unwrap();
    let corpus = Corpus::new(5);
    let f00 = op.kernel().clone();
    for k in 0..4 {
        for p in corpus.perturbations(s.grid(), k, 25).unwrap() {
            let raw = p.field;
            let q_raw = op.q1(&raw).unwrap();
            assert!(q_raw >= -1e-8 * op.gram(&raw, &raw).unwrap(), "{} Q1 = {q_raw:e}", p.id);
            let f = if k == 0 {
                let c = op.gram(&raw, &f00).unwrap() / op.gram(&f00, &f00).unwrap();
                raw.axpby(1.0, &f00, -c).unwrap()
            } else {
                raw
            };
            let (q1, q2) = (op.q1(&f).unwrap(), op.q2(&f).unwrap());
            let factor = if k == 0 { 2.0 } else { 1.0 };
            assert!(q2 >= factor * q1 * (1.0 - 1e-2), "{}: Q2 {q2:e} Q1 {q1:e}", p.id);
        }
    }
}

#[test]
fn poincare_examples() {
    let s = solve(4.0, 1024, 14.0);
    let g = s.grid().clone();
    let c = ModeField::from_fn(g.clone(), 0, |_| 0.7).unwrap();
    assert!(poincare_deficit(&c, &s).unwrap().deficit.abs() < 1e-12);
    let modes = SpecialModes::compute(&s).unwrap();
    assert!(poincare_deficit(&modes.f01, &s).unwrap().deficit >= 0.0);
    let corpus = Corpus::new(3);
    for p in corpus.potentials(&g, 3.0, 100).unwrap() {
        let d = poincare_deficit(&p.field, &s).unwrap();
        assert!(d.deficit >= -1e-8 * d.scale(), "{}: {d:?}", p.id);
    }
    for p in corpus.perturbations(&g, 1, 20).unwrap() {
        let d = poincare_deficit(&p.field, &s).unwrap();
        assert!(d.deficit >= -1e-8 * d.scale(), "{}: {d:?}", p.id);
    }
}

#[test]
fn legendre_gap_at_zero_and_g_at_zero() {
    let m = 5.0;
    let s = solve(m, 1024, 14.0);
    let zero = ModeField::zeros(s.grid().clone(), 0);
    let d = legendre_gap(&zero, &s).unwrap();
    assert!(d.deficit.abs() < 1e-12 && d.lhs.abs() < 1e-12, "{d:?}");
    let g0 = g_functional(&zero, m).unwrap();
    // h⁴ quadrature error of ∫e^{−r²/2} at this resolution
    assert!((g0 + m * (2.0 * PI).ln()).abs() < 1e-8, "{g0}");
}

#[test]
fn scaling_family() {
    let m = 4.0;
    let g = make_grid(1024, 16.0, 0.0).unwrap();
    let n = ModeField::from_fn(g.clone(), 0, |r| m * (-0.5 * r * r).exp() / (2.0 * PI)).unwrap();
    let s = solve_stationary(m, g.clone(), 1e-10, 1000).unwrap();
    let f = scaling_family_energy(&n, &[1.0, 2.0, 4.0]).unwrap();
    assert!((f[0] - free_energy(&n, &s).unwrap().f).abs() < 1e-9);
    assert!(f.iter().all(|&v| v > 0.0), "{f:?}");
    assert!(matches!(scaling_family_energy(&n, &[1000.0]), Err(Error::Resolution(_))));
    let heavy = n.map(|v| v * 10.0 * PI / m).unwrap();
    let e = scaling_family_energy(&heavy, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    assert!(e.windows(2).all(|p| p[1] < p[0]), "{e:?}");
}

#[test]
fn deficits_csv_layout() {
    let g = make_grid(256, 12.0, 0.0).unwrap();
    let n = ModeField::from_fn(g, 0, mu).unwrap();
    let d = loghls_deficit(&n).unwrap().with_input_id("mu");
    let mut buf = Vec::new();
    write_deficits_csv(std::slice::from_ref(&d), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("inequality_id,input_id,lhs,rhs,deficit"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[1], "mu");
    assert_eq!(row[4].parse::<f64>().unwrap(), d.deficit);
}
