//! Independent reference computations for the integration tests. Nothing
//! here calls into the library's discretizations.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // Split first so that narrow features are not missed by the initial sample.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|j| {
            let (x0, x1) = (a + j as f64 * h, a + (j + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            step(f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// `∫₀^R f(r) 2πr dr`.
pub fn radial_integral(f: &dyn Fn(f64) -> f64, r_max: f64, tol: f64) -> f64 {
    simpson(&|r| 2.0 * PI * r * f(r), 0.0, r_max, tol)
}

/// The log-HLS optimizer `1/(π(1+r²)²)`.
pub fn mu(r: f64) -> f64 {
    1.0 / (PI * (1.0 + r * r).powi(2))
}

/// `∫_R^∞ log s · μ(s) s ds` for `T = R²`: the part of the logarithmic
/// potential of `μ` carried by the region outside `R`.
pub fn mu_log_tail(t: f64) -> f64 {
    (t.ln() / (1.0 + t) + ((1.0 + t) / t).ln()) / (4.0 * PI)
}

/// log-HLS deficit of `λ² μ(λ r)` truncated to `r < R`, from closed-form
/// potentials and adaptive quadrature.
pub fn truncated_mu_loghls(lambda: f64, r_max: f64) -> f64 {
    let t = (lambda * r_max).powi(2);
    let mass = t / (1.0 + t);
    let n = |r: f64| lambda * lambda * mu(lambda * r);
    // Potential of the truncated density: full potential of λ²μ(λ·) plus the
    // removed tail of the convolution integral.
    let u = |r: f64| {
        let s = lambda * r;
        ((mu(s)).ln() + PI.ln()) / (8.0 * PI) + mu_log_tail(t) + mass * lambda.ln() / (2.0 * PI)
    };
    let tol = 1e-12;
    let entropy = radial_integral(&|r| n(r) * (n(r) / mass).ln(), r_max, tol);
    let pot = radial_integral(&|r| n(r) * u(r), r_max, tol);
    let interaction = -2.0 * PI * pot;
    entropy + 2.0 / mass * interaction + mass * (1.0 + PI.ln())
}

/// Radial stationary state of mass `mass` by shooting on the cumulated-mass
/// system `m′ = r n`, `n′ = −n (m/r + r)`, `m(r) = ∫₀^r n s ds`.
pub struct Shooting {
    pub central_density: f64,
    /// `(r, n, m)` on a uniform mesh of step `STEP` up to `REACH`.
    pub profile: Vec<(f64, f64, f64)>,
}

const STEP: f64 = 1e-3;
const REACH: f64 = 20.0;

fn integrate_cumulated(a: f64, keep: bool) -> (f64, Vec<(f64, f64, f64)>) {
    let h = STEP;
    let mut y = [0.0f64, a];
    let rhs = |r: f64, y: [f64; 2]| -> [f64; 2] {
        // m/r → 0 at the origin
        let drift = if r > 0.0 { y[0] / r + r } else { 0.0 };
        [r * y[1], -y[1] * drift]
    };
    let steps = (REACH / h).round() as usize;
    let mut out = Vec::new();
    if keep {
        out.reserve(steps + 1);
        out.push((0.0, a, 0.0));
    }
    for j in 0..steps {
        let r = j as f64 * h;
        let k1 = rhs(r, y);
        let k2 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(r + 0.5 * h, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        for i in 0..2 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if keep {
            out.push(((j + 1) as f64 * h, y[1], y[0]));
        }
    }
    (y[0], out)
}

impl Shooting {
    pub fn solve(mass: f64) -> Self {
        let target = mass / (2.0 * PI);
        let (mut lo, mut hi) = (0.0, 1.0);
        while integrate_cumulated(hi, false).0 < target {
            hi *= 2.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if integrate_cumulated(mid, false).0 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        Self {
            central_density: a,
            profile: integrate_cumulated(a, true).1,
        }
    }

    /// `∫ n (−Δ)⁻¹n dx` in the convolution gauge,
    /// `−(M²/2π) log R + 2π ∫₀^R m²/r dr` at `R = REACH`.
    pub fn interaction(&self) -> f64 {
        let p = &self.profile;
        let mass = 2.0 * PI * p.last().unwrap().2;
        // composite Simpson on the uniform mesh; m²/r → 0 at the origin
        let f = |j: usize| if j == 0 { 0.0 } else { p[j].2 * p[j].2 / p[j].0 };
        let n = p.len() - 1;
        let mut s = f(0) + f(n);
        for j in 1..n {
            s += f(j) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        -mass * mass / (2.0 * PI) * REACH.ln() + 2.0 * PI * s * STEP / 3.0
    }
}

pub fn shooting_central_density(mass: f64) -> f64 {
    Shooting::solve(mass).central_density
}

/// One pass/fail line per check.
/// Check ids start with the criterion number, e.g. `"5 kernel direction"`.
pub struct Ledger {
    pub failures: Vec<String>,
    /// `(criterion, checks, failed)`.
    pub criteria: Vec<(u32, usize, usize)>,
}

impl Ledger {
    pub fn new() -> Self {
        Self {
            failures: Vec::new(),
            criteria: Vec::new(),
        }
    }

    pub fn check(&mut self, id: &str, ok: bool, detail: impl AsRef<str>) {
        let tag = if ok { "PASS" } else { "FAIL" };
        println!("[{tag}] {id}: {}", detail.as_ref());
        if !ok {
            self.failures.push(id.to_string());
        }
        let crit: u32 = id.split_whitespace().next().and_then(|t| t.parse().ok()).unwrap_or(0);
        match self.criteria.iter_mut().find(|c| c.0 == crit) {
            Some(c) => {
                c.1 += 1;
                c.2 += usize::from(!ok);
            }
            None => self.criteria.push((crit, 1, usize::from(!ok))),
        }
    }

    /// One line per criterion `1..=count`; a criterion without checks fails.
    pub fn summary(&self, count: u32) -> bool {
        let mut all = true;
        for c in 1..=count {
            let (n, bad) = self.criteria.iter().find(|x| x.0 == c).map_or((0, 0), |x| (x.1, x.2));
            let ok = n > 0 && bad == 0;
            all &= ok;
            let tag = if ok { "PASS" } else { "FAIL" };
            println!("[{tag}] criterion {c}: {}/{n} checks passed", n - bad);
        }
        all
    }
}
