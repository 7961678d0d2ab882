//! Time integration of the radial rescaled system and of the per-mode
//! linearized dynamics, and exponential rate fits.
//!
//! The nonlinear radial equation `∂_t n = ∇·(∇n + x n − n∇c)`, `c = (−Δ)⁻¹n`,
//! is integrated in conservative form on the cells of the grid. With the
//! cumulated mass `m(r) = ∫₀^r n s ds` one has `c′ = −m/r`, so the flux through
//! the circle of radius `r` is local in `(n, m)`:
//!
//! ```text
//! J = 2π r (n′ + r n + n m / r) = 2π [ r n_M (n/n_M)′ + n (m − m_M) ],
//! ∂_t m = J / 2π = m″ − m′/r + r m′ + m m′/r.
//! ```
//!
//! The second form is discretized (cell masses `w_i n_i`, interface values of
//! `m` from partial sums) so that `n_M` is an exact discrete equilibrium. The
//! first term is treated implicitly, the product term explicitly; steps are
//! IMEX Euler with step doubling and Richardson extrapolation.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{angular_factor, ModeField};
use crate::flux::Stiffness;
use crate::functionals::{free_energy, LinearizedOperator};
use crate::grid::RadialGrid;
use crate::io::{fmt_f64, Table};
use crate::CRITICAL_MASS;

/// `m` at the `N + 1` cell interfaces, `m[0] = 0`, `m[N] = M/2π`.
#[derive(Debug, Clone)]
pub struct CumulatedState {
    grid: Arc<RadialGrid>,
    m: Vec<f64>,
    t: f64,
}

impl CumulatedState {
    pub fn from_density(n: &ModeField, t: f64) -> Result<Self> {
        if n.k() != 0 {
            return Err(Error::Mode("cumulated mass needs a radial density".into()));
        }
        Ok(Self {
            grid: n.grid().clone(),
            m: cumulate(n.grid(), n.values()),
            t,
        })
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `2π·m(R_max)`.
    pub fn mass(&self) -> f64 {
        2.0 * PI * self.m[self.m.len() - 1]
    }

    pub fn density(&self) -> ModeField {
        let w = self.grid.weights();
        let vals = (0..w.len()).map(|i| 2.0 * PI * (self.m[i + 1] - self.m[i]) / w[i]).collect();
        ModeField::new(self.grid.clone(), 0, vals).expect("finite density")
    }

    /// Whether `m` is nondecreasing up to `tol·m(R_max)`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        let scale = tol * self.m[self.m.len() - 1].abs();
        self.m.windows(2).all(|p| p[1] >= p[0] - scale)
    }
}

fn cumulate(grid: &RadialGrid, n: &[f64]) -> Vec<f64> {
    let mut m = Vec::with_capacity(n.len() + 1);
    let mut acc = 0.0;
    m.push(0.0);
    for (w, v) in grid.weights().iter().zip(n) {
        acc += w * v;
        m.push(acc / (2.0 * PI));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    Mass,
    FreeEnergy,
    Q1,
    L1Dist,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::Mass => "mass",
            Observable::FreeEnergy => "free_energy",
            Observable::Q1 => "q1",
            Observable::L1Dist => "l1_dist",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest increase of `F₁ − F₂` over one accepted step (nonlinear only).
    pub max_energy_increase: f64,
}

#[derive(Debug, Clone)]
pub struct EvolutionTrace {
    pub k: usize,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub free_energy: Vec<f64>,
    pub q1: Vec<f64>,
    pub l1_dist: Vec<f64>,
    pub stats: StepStats,
    /// Density (nonlinear) or perturbation profile (linearized) at the end.
    pub final_profile: Vec<f64>,
}

impl EvolutionTrace {
    fn new(k: usize) -> Self {
        Self {
            k,
            times: Vec::new(),
            mass: Vec::new(),
            free_energy: Vec::new(),
            q1: Vec::new(),
            l1_dist: Vec::new(),
            stats: StepStats {
                dt_min: f64::INFINITY,
                ..StepStats::default()
            },
            final_profile: Vec::new(),
        }
    }

    pub fn series(&self, obs: Observable) -> &[f64] {
        match obs {
            Observable::Mass => &self.mass,
            Observable::FreeEnergy => &self.free_energy,
            Observable::Q1 => &self.q1,
            Observable::L1Dist => &self.l1_dist,
        }
    }

    /// Writes `trace.csv`: `t,mass,free_energy,q1,l1_dist`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut t = Table::new(["t", "mass", "free_energy", "q1", "l1_dist"]);
        for i in 0..self.times.len() {
            t.push(vec![
                fmt_f64(self.times[i]),
                fmt_f64(self.mass[i]),
                fmt_f64(self.free_energy[i]),
                fmt_f64(self.q1[i]),
                fmt_f64(self.l1_dist[i]),
            ]);
        }
        t.write(out)
    }
}

/// Step-size control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionOptions {
    /// Local error target, relative to the current distance from equilibrium.
    pub tol: f64,
    /// Smallest admissible step.
    pub dt_min: f64,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            dt_min: 1e-12,
        }
    }
}

fn check_times(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Parameter(format!("sampling step must be positive, got {dt}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Parameter(format!("final time must be nonnegative, got {t_end}")));
    }
    Ok((t_end / dt).round() as usize)
}

/// Adaptive driver: `step(u, h)` is one IMEX Euler step, `err(a, b, u)` the
/// error norm of two candidates, `accept(u)` rejects unphysical states and
/// `record(t, u)` is called at every sample time `j·dt`.
fn drive(
    mut u: Vec<f64>,
    t_end: f64,
    dt: f64,
    opts: EvolutionOptions,
    stats: &mut StepStats,
    step: impl Fn(&[f64], f64) -> Vec<f64>,
    err: impl Fn(&[f64], &[f64], &[f64]) -> f64,
    accept: impl Fn(&[f64]) -> bool,
    mut on_step: impl FnMut(&[f64], &[f64]),
    mut record: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    let samples = check_times(t_end, dt)?;
    record(0.0, &u);
    let mut t = 0.0;
    let mut h = dt.min(1e-3);
    for j in 1..=samples {
        let target = j as f64 * dt;
        while t < target - 1e-12 * dt {
            let hh = h.min(target - t);
            let big = step(&u, hh);
            let half = step(&u, 0.5 * hh);
            let small = step(&half, 0.5 * hh);
            let e = err(&big, &small, &u);
            let cand: Vec<f64> = small.iter().zip(&big).map(|(s, b)| 2.0 * s - b).collect();
            if !(e.is_finite()) || !accept(&cand) {
                stats.rejected += 1;
                h = 0.5 * hh;
            } else if e <= opts.tol {
                on_step(&u, &cand);
                u = cand;
                t += hh;
                stats.accepted += 1;
                stats.dt_min = stats.dt_min.min(hh);
                stats.dt_max = stats.dt_max.max(hh);
                let fac = if e > 0.0 { 0.9 * (opts.tol / e).sqrt() } else { 2.0 };
                h = (hh * fac.clamp(0.2, 2.0)).min(dt);
                continue;
            } else {
                stats.rejected += 1;
                h = hh * (0.9 * (opts.tol / e).sqrt()).clamp(0.1, 0.9);
            }
            if h < opts.dt_min {
                return Err(Error::Integration(format!(
                    "step size underflow at t = {t:.6e} (dt = {h:e})"
                )));
            }
        }
        t = target;
        record(t, &u);
    }
    Ok(u)
}

/// Integrates the radial nonlinear equation from `n0` up to `t_end`,
/// sampling every `dt`. `op` supplies `n_M` and `Q₁`. The mass of `n0` must
/// match `M` to `10⁻⁶`; the remaining mismatch is scaled away.
pub fn evolve_nonlinear(n0: &ModeField, op: &LinearizedOperator, t_end: f64, dt: f64) -> Result<EvolutionTrace> {
    evolve_nonlinear_with(n0, op, t_end, dt, EvolutionOptions::default())
}

pub fn evolve_nonlinear_with(
    n0: &ModeField,
    op: &LinearizedOperator,
    t_end: f64,
    dt: f64,
    opts: EvolutionOptions,
) -> Result<EvolutionTrace> {
    let state = op.state();
    let grid = state.grid().clone();
    if n0.k() != 0 {
        return Err(Error::Mode("nonlinear evolution is radial".into()));
    }
    if !n0.grid().same_as(&grid) {
        return Err(Error::Parameter("initial density and stationary state on different grids".into()));
    }
    if let Some(i) = n0.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!("negative initial density at node {i}")));
    }
    let mass0 = grid.quad(n0.values());
    if mass0 >= CRITICAL_MASS {
        return Err(Error::Domain(format!("mass {mass0} ≥ 8π: blow-up regime")));
    }
    if ((mass0 - state.mass()) / state.mass()).abs() > 1e-6 {
        return Err(Error::Parameter(format!(
            "initial mass {mass0} differs from the stationary mass {}",
            state.mass()
        )));
    }
    check_times(t_end, dt)?;
    // remove the quadrature-level mass mismatch so that n_M is the limit
    let n0 = n0.map(|v| v * state.mass() / mass0)?;
    let mass0 = state.mass();
    let nm: Vec<f64> = state.n().iter().map(|v| v.max(1e-300)).collect();
    let w = grid.weights().to_vec();
    let r = grid.nodes().to_vec();
    let nn = r.len();
    let wn: Vec<f64> = w.iter().zip(&nm).map(|(a, b)| a * b).collect();
    let stiff = Stiffness::new(&grid, &nm, 0);
    let m_eq = cumulate(&grid, &nm);

    let explicit = |u: &[f64]| -> Vec<f64> {
        let n: Vec<f64> = u.iter().zip(&nm).map(|(a, b)| a * b).collect();
        let m = cumulate(&grid, &n);
        let mut d = vec![0.0; nn];
        for i in 0..nn - 1 {
            let nf = 0.5 * (n[i] + n[i + 1]);
            let g = 2.0 * PI * nf * (m[i + 1] - m_eq[i + 1]);
            d[i] += g;
            d[i + 1] -= g;
        }
        d
    };
    let step = |u: &[f64], h: f64| -> Vec<f64> {
        let d: Vec<f64> = wn.iter().map(|x| x / h).collect();
        let ex = explicit(u);
        let b: Vec<f64> = (0..nn).map(|i| d[i] * u[i] + ex[i]).collect();
        stiff.solve_shifted(&d, &b)
    };
    let dist = |u: &[f64]| -> f64 { wn.iter().zip(u).map(|(a, x)| a * (x - 1.0).abs()).sum() };
    let err = |a: &[f64], b: &[f64], u: &[f64]| -> f64 {
        let e: f64 = wn.iter().zip(a.iter().zip(b)).map(|(x, (p, q))| x * (p - q).abs()).sum();
        e / (dist(u) + 1e-6 * mass0)
    };
    let accept = |u: &[f64]| -> bool {
        let n: Vec<f64> = u.iter().zip(&nm).map(|(a, b)| a * b).collect();
        let max = n.iter().cloned().fold(0.0f64, f64::max);
        n.iter().all(|&v| v >= -1e-10 * max)
    };
    let density = |u: &[f64]| -> Result<ModeField> {
        let vals = u.iter().zip(&nm).map(|(a, b)| (a * b).max(0.0)).collect();
        ModeField::new(grid.clone(), 0, vals)
    };
    let energy = |u: &[f64]| -> f64 {
        density(u)
            .and_then(|n| free_energy(&n, state))
            .map(|e| e.f)
            .unwrap_or(f64::NAN)
    };

    let mut trace = EvolutionTrace::new(0);
    let mut max_increase = 0.0f64;
    let mut last_energy = f64::NAN;
    let mut failure: Option<Error> = None;
    let u0: Vec<f64> = n0.values().iter().zip(&nm).map(|(a, b)| a / b).collect();
    let mut stats = StepStats {
        dt_min: f64::INFINITY,
        ..StepStats::default()
    };
    let u_end = drive(
        u0,
        t_end,
        dt,
        opts,
        &mut stats,
        step,
        err,
        accept,
        |old, new| {
            if last_energy.is_nan() {
                last_energy = energy(old);
            }
            let e = energy(new);
            max_increase = max_increase.max(e - last_energy);
            last_energy = e;
        },
        |t, u| {
            let n: Vec<f64> = u.iter().zip(&nm).map(|(a, b)| a * b).collect();
            let f = ModeField::new(grid.clone(), 0, u.iter().map(|x| x - 1.0).collect());
            let q1 = f.and_then(|f| op.q1(&f));
            match q1 {
                Ok(q) => trace.q1.push(q),
                Err(e) => {
                    failure.get_or_insert(e);
                    trace.q1.push(f64::NAN);
                }
            }
            trace.times.push(t);
            trace.mass.push(w.iter().zip(&n).map(|(a, b)| a * b).sum());
            trace.free_energy.push(energy(u));
            trace.l1_dist.push(dist(u));
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    stats.max_energy_increase = max_increase;
    trace.stats = stats;
    trace.final_profile = u_end.iter().zip(&nm).map(|(a, b)| a * b).collect();
    Ok(trace)
}

/// Integrates `∂_t f = −L⁺f` on the mode of `f0`. For `k = 0` the `f₀,₀`
/// component is removed from `f0` first, so that `∫ f n_M = 0`; the remainder
/// is then `L²(dμ_M)`-orthogonal to `f₀,₀` up to discretization error.
pub fn evolve_linearized_mode(f0: &ModeField, op: &LinearizedOperator, t_end: f64, dt: f64) -> Result<EvolutionTrace> {
    evolve_linearized_mode_with(f0, op, t_end, dt, EvolutionOptions::default())
}

pub fn evolve_linearized_mode_with(
    f0: &ModeField,
    op: &LinearizedOperator,
    t_end: f64,
    dt: f64,
    opts: EvolutionOptions,
) -> Result<EvolutionTrace> {
    let state = op.state();
    let grid = state.grid().clone();
    if !f0.grid().same_as(&grid) {
        return Err(Error::Parameter("initial data and stationary state on different grids".into()));
    }
    check_times(t_end, dt)?;
    let k = f0.k();
    let mut start = f0.values().to_vec();
    if k > 0 {
        start[0] = 0.0;
    }
    let mut f = ModeField::new(grid.clone(), k, start)?;
    if k == 0 {
        // kernel part along the conserved mass: L⁺ has divergence form, so
        // its range is {∫ f n_M = 0} and f ↦ (∫ f n_M) f₀,₀ is the spectral
        // projector onto the kernel
        let kern = op.kernel();
        let mass_f = grid.quad(&f.values().iter().zip(state.n()).map(|(a, b)| a * b).collect::<Vec<_>>());
        let mass_k = grid.quad(&kern.values().iter().zip(state.n()).map(|(a, b)| a * b).collect::<Vec<_>>());
        f = f.axpby(1.0, kern, -mass_f / mass_k)?;
    }
    let n = state.n();
    let ck = angular_factor(k);
    let wn: Vec<f64> = grid.weights().iter().zip(n).map(|(a, b)| a * b).collect();
    let stiff = Stiffness::new(&grid, n, k);
    let to_field = |v: &[f64]| ModeField::new(grid.clone(), k, v.to_vec());

    let step = |u: &[f64], h: f64| -> Vec<f64> {
        let field = to_field(u).expect("finite profile");
        let hf = op.potential_of(&field);
        let kh = stiff.apply(&hf);
        let d: Vec<f64> = wn.iter().map(|x| x / h).collect();
        let b: Vec<f64> = (0..u.len()).map(|i| d[i] * u[i] + kh[i]).collect();
        stiff.solve_shifted(&d, &b)
    };
    let norm = |v: &[f64]| -> f64 {
        let s = (usize::from(k > 0)..v.len()).map(|i| wn[i] * v[i] * v[i]).sum::<f64>();
        s.sqrt()
    };
    let err = |a: &[f64], b: &[f64], u: &[f64]| -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        norm(&d) / (norm(u) + 1e-300)
    };

    let mut trace = EvolutionTrace::new(k);
    let mut failure: Option<Error> = None;
    let mut stats = StepStats {
        dt_min: f64::INFINITY,
        ..StepStats::default()
    };
    let m = state.mass();
    let u_end = drive(
        f.values().to_vec(),
        t_end,
        dt,
        opts,
        &mut stats,
        step,
        err,
        |u: &[f64]| u.iter().all(|v| v.is_finite()),
        |_, _| {},
        |t, u| {
            let q1 = to_field(u).and_then(|g| op.q1(&g));
            let q = match q1 {
                Ok(q) => q,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            };
            trace.times.push(t);
            trace.q1.push(q);
            trace.free_energy.push(0.5 * m * q);
            trace.mass.push(if k == 0 { wn.iter().zip(u).map(|(a, b)| a * b).sum() } else { 0.0 });
            let l1: f64 = (usize::from(k > 0)..u.len()).map(|i| wn[i] * u[i].abs()).sum();
            trace.l1_dist.push(ck * l1);
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    trace.stats = stats;
    trace.final_profile = u_end;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `−d log(obs)/dt`.
    pub rate: f64,
    pub window: (f64, f64),
    pub r2: f64,
    pub observable: Observable,
    pub samples: usize,
}

/// Default fitting window.
pub const DEFAULT_WINDOW: (f64, f64) = (2.0, 6.0);

/// Least-squares slope of `log(obs)` on the window, using samples above
/// `10⁻¹³`.
pub fn fit_rate(trace: &EvolutionTrace, observable: Observable, window: (f64, f64)) -> Result<RateFit> {
    fit_series(&trace.times, trace.series(observable), observable, window)
}

pub fn fit_series(times: &[f64], values: &[f64], observable: Observable, window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= window.0 && **t <= window.1 && **v > 1e-13)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 5 {
        return Err(Error::Fit(format!(
            "{} usable samples of {observable} in [{}, {}], need 5",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let slope = sty / stt;
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sres: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sres / syy } else { 1.0 };
    Ok(RateFit {
        rate: -slope,
        window,
        r2,
        observable,
        samples: pts.len(),
    })
}

/// Writes `rates.csv`: `observable,rate,window_lo,window_hi,r2`.
pub fn write_rates_csv<W: Write>(fits: &[RateFit], out: W) -> Result<()> {
    let mut t = Table::new(["observable", "rate", "window_lo", "window_hi", "r2"]);
    for f in fits {
        t.push(vec![
            f.observable.as_str().to_string(),
            fmt_f64(f.rate),
            fmt_f64(f.window.0),
            fmt_f64(f.window.1),
            fmt_f64(f.r2),
        ]);
    }
    t.write(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn synthetic_rate() {
        let times: Vec<f64> = (0..101).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let fit = fit_series(&times, &vals, Observable::Q1, DEFAULT_WINDOW).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit_series(&times[..3], &vals[..3], Observable::Q1, (0.0, 1.0)).is_err());
    }

    #[test]
    fn cumulated_round_trip() {
        let g = make_grid(64, 6.0, 0.0).unwrap();
        let n = ModeField::from_fn(g, 0, |r| (-r * r).exp()).unwrap();
        let c = CumulatedState::from_density(&n, 0.0).unwrap();
        assert_eq!(c.m()[0], 0.0);
        assert!(c.is_monotone(0.0));
        assert!((c.mass() - n.integrate().unwrap()).abs() < 1e-14);
        let back = c.density();
        for (a, b) in back.values().iter().zip(n.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
