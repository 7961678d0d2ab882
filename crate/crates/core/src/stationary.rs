//! Stationary states `−Δc_M = n_M = M e^{c_M − r²/2} / ∫e^{c_M − r²/2}` and the
//! distinguished functions of the linearized operator.
//!
//! The potential is kept in the convolution gauge `c_M = (−Δ)⁻¹ n_M`, so the
//! discrete problem is the fixed point `c = P[N(c)]` with `P` from
//! [`crate::green`] and `N(c) = M e^{c − r²/2}/Z(c)`. The reported residual is
//! `‖c − P[N(c)]‖_∞`, the discrete form of `‖−Δc − n‖`.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ModeField;
use crate::green::apply_green;
use crate::grid::RadialGrid;
use crate::io::{fmt_f64, Table};
use crate::stencil::{laplacian_mode, radial_derivative};
use crate::CRITICAL_MASS;

/// Residual below which the damped iteration hands over to Newton.
const NEWTON_SWITCH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub newton_steps: usize,
    pub residual: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct StationaryState {
    mass: f64,
    grid: Arc<RadialGrid>,
    density: ModeField,
    potential: ModeField,
    mu: ModeField,
    log_partition: f64,
    diagnostics: SolverDiagnostics,
}

impl StationaryState {
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    /// `n_M`.
    pub fn density(&self) -> &ModeField {
        &self.density
    }

    /// `c_M`.
    pub fn potential(&self) -> &ModeField {
        &self.potential
    }

    /// `μ_M = n_M / M`.
    pub fn mu(&self) -> &ModeField {
        &self.mu
    }

    /// `Z = ∫ e^{c_M − r²/2} dx`.
    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn diagnostics(&self) -> SolverDiagnostics {
        self.diagnostics
    }

    pub fn n(&self) -> &[f64] {
        self.density.values()
    }

    pub fn c(&self) -> &[f64] {
        self.potential.values()
    }

    /// `n_M(0)`.
    pub fn central_density(&self) -> f64 {
        self.density.values()[0]
    }
}

fn validate_mass(mass: f64) -> Result<()> {
    if !(mass > 0.0 && mass < CRITICAL_MASS) {
        return Err(Error::Domain(format!(
            "mass {mass} outside the subcritical range (0, 8π = {CRITICAL_MASS})"
        )));
    }
    Ok(())
}

/// `(n, log Z)` for a given potential; `∑ w n = M` holds to rounding.
fn density_of(grid: &RadialGrid, mass: f64, c: &[f64]) -> (Vec<f64>, f64) {
    let expo: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(c)
        .map(|(&r, &ci)| ci - 0.5 * r * r)
        .collect();
    let shift = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = expo.iter().map(|x| (x - shift).exp()).collect();
    let z = grid.quad(&e);
    let n = e.iter().map(|v| mass * v / z).collect();
    (n, shift + z.ln())
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn fixed_point_residual(grid: &RadialGrid, mass: f64, c: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let (n, _) = density_of(grid, mass, c);
    let pn = apply_green(grid, &n, 0);
    let f: Vec<f64> = c.iter().zip(&pn).map(|(a, b)| a - b).collect();
    let res = sup_norm(&f);
    (f, n, res)
}

/// Restarted-free GMRES for small well-conditioned systems `A x = b`.
fn gmres(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], rtol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let beta = dot(b, b).sqrt();
    if beta == 0.0 {
        return vec![0.0; n];
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|x| x / beta).collect()];
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    for j in 0..max_iter {
        let mut w = apply(&basis[j]);
        let mut col = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            col[i] = hij;
            for (wk, vk) in w.iter_mut().zip(v) {
                *wk -= hij * vk;
            }
        }
        let hn = dot(&w, &w).sqrt();
        col[j + 1] = hn;
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let d = (col[j] * col[j] + col[j + 1] * col[j + 1]).sqrt();
        let (c, s) = (col[j] / d, col[j + 1] / d);
        cs.push(c);
        sn.push(s);
        col[j] = d;
        col[j + 1] = 0.0;
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        let converged = g[j + 1].abs() <= rtol * beta || hn == 0.0;
        if !converged {
            basis.push(w.iter().map(|x| x / hn).collect());
        }
        if converged || j + 1 == max_iter {
            let m = j + 1;
            let mut y = vec![0.0; m];
            for i in (0..m).rev() {
                let mut acc = g[i];
                for l in i + 1..m {
                    acc -= h[l][i] * y[l];
                }
                y[i] = acc / h[i][i];
            }
            let mut x = vec![0.0; n];
            for (yi, v) in y.iter().zip(&basis) {
                for (xk, vk) in x.iter_mut().zip(v) {
                    *xk += yi * vk;
                }
            }
            return x;
        }
    }
    unreachable!()
}

/// Solves the stationary equation from the initial guess `c ≡ 0`.
pub fn solve_stationary(
    mass: f64,
    grid: Arc<RadialGrid>,
    tol: f64,
    max_iter: usize,
) -> Result<StationaryState> {
    solve_stationary_from(mass, grid, tol, max_iter, None)
}

/// Damped fixed point `c ← (1−θ)c + θ P[N(c)]` with Newton-GMRES once the
/// residual is below `1e-3`. `θ` starts at ½, is halved when a step increases
/// the residual and restored after a successful step.
pub fn solve_stationary_from(
    mass: f64,
    grid: Arc<RadialGrid>,
    tol: f64,
    max_iter: usize,
    initial: Option<&[f64]>,
) -> Result<StationaryState> {
    validate_mass(mass)?;
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let n_nodes = grid.len();
    let mut c = match initial {
        Some(c0) if c0.len() == n_nodes => c0.to_vec(),
        Some(c0) => {
            return Err(Error::Parameter(format!(
                "initial guess has {} values for {n_nodes} nodes",
                c0.len()
            )))
        }
        None => vec![0.0; n_nodes],
    };
    let (mut f, mut n, mut res) = fixed_point_residual(&grid, mass, &c);
    let mut theta = 0.5;
    let mut newton_steps = 0;
    let mut iterations = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::Convergence {
                iterations,
                residual: res,
            });
        }
        iterations += 1;
        if res < NEWTON_SWITCH {
            let w = grid.weights();
            let jac = |v: &[f64]| -> Vec<f64> {
                let avg: f64 = w.iter().zip(&n).zip(v).map(|((a, b), c)| a * b * c).sum::<f64>() / mass;
                let dn: Vec<f64> = n.iter().zip(v).map(|(ni, vi)| ni * (vi - avg)).collect();
                let pdn = apply_green(&grid, &dn, 0);
                v.iter().zip(&pdn).map(|(a, b)| a - b).collect()
            };
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let delta = gmres(jac, &rhs, 1e-14, 80);
            let trial: Vec<f64> = c.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let (ft, nt, rt) = fixed_point_residual(&grid, mass, &trial);
            if rt < res {
                c = trial;
                f = ft;
                n = nt;
                res = rt;
                newton_steps += 1;
                continue;
            }
            if newton_steps > 0 && rt <= 10.0 * res && res < 1e3 * tol {
                // Rounding floor reached.
                break;
            }
        }
        let pn: Vec<f64> = c.iter().zip(&f).map(|(a, b)| a - b).collect();
        let trial: Vec<f64> = c
            .iter()
            .zip(&pn)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        let (ft, nt, rt) = fixed_point_residual(&grid, mass, &trial);
        if rt < res || theta < 1e-4 {
            c = trial;
            f = ft;
            n = nt;
            res = rt;
            theta = 0.5;
        } else {
            theta *= 0.5;
        }
    }
    if res > tol {
        return Err(Error::Convergence {
            iterations,
            residual: res,
        });
    }
    let (n, log_z) = density_of(&grid, mass, &c);
    let density = ModeField::new(grid.clone(), 0, n)?;
    let mu = density.map(|v| v / mass)?;
    let potential = ModeField::new(grid.clone(), 0, c)?;
    Ok(StationaryState {
        mass,
        grid,
        density,
        potential,
        mu,
        log_partition: log_z,
        diagnostics: SolverDiagnostics {
            iterations,
            newton_steps,
            residual: res,
            tol,
        },
    })
}

fn aux_tolerance(state: &StationaryState) -> f64 {
    state.diagnostics.tol.min(1e-12)
}

/// `f₀,₀ = ∂_M log n_M` by a centered difference of two auxiliary solves.
pub fn zero_mode(state: &StationaryState, dm: f64) -> Result<ModeField> {
    let m = state.mass;
    let bound = m.min(CRITICAL_MASS - m) / 10.0;
    if !(dm > 0.0 && dm < bound) {
        return Err(Error::Parameter(format!(
            "dM = {dm} must lie in (0, min(M, 8π − M)/10 = {bound})"
        )));
    }
    let tol = aux_tolerance(state);
    let iters = 500;
    let plus = solve_stationary_from(m + dm, state.grid.clone(), tol, iters, Some(state.c()))?;
    let minus = solve_stationary_from(m - dm, state.grid.clone(), tol, iters, Some(state.c()))?;
    let values = plus
        .n()
        .iter()
        .zip(minus.n())
        .map(|(a, b)| (a.max(1e-300).ln() - b.max(1e-300).ln()) / (2.0 * dm))
        .collect();
    ModeField::new(state.grid.clone(), 0, values)
}

/// `‖−Δf − n_M f‖_{L²(dx)} / ‖n_M f‖_{L²(dx)}`.
pub fn zero_mode_residual(state: &StationaryState, f00: &ModeField) -> f64 {
    let lap = laplacian_mode(f00);
    let nf: Vec<f64> = f00.values().iter().zip(state.n()).map(|(a, b)| a * b).collect();
    let diff: Vec<f64> = lap.values().iter().zip(&nf).map(|(a, b)| a - b).collect();
    let g = &state.grid;
    let num = g.quad(&diff.iter().map(|x| x * x).collect::<Vec<_>>());
    let den = g.quad(&nf.iter().map(|x| x * x).collect::<Vec<_>>());
    (num / den).sqrt()
}

/// `f₀,₁ = x·∇log n_M = r(c_M′ − r)`.
pub fn dilation_mode(state: &StationaryState) -> ModeField {
    let dc = radial_derivative(&state.potential);
    let values = state
        .grid
        .nodes()
        .iter()
        .zip(&dc)
        .map(|(&r, &d)| r * (d - r))
        .collect();
    ModeField::new(state.grid.clone(), 0, values).expect("finite dilation mode")
}

/// Profile of `∂_{x₁} log n_M = (c_M′ − r) cos θ`, mode `k = 1`.
pub fn translation_mode(state: &StationaryState) -> ModeField {
    let dc = radial_derivative(&state.potential);
    let mut values: Vec<f64> = state
        .grid
        .nodes()
        .iter()
        .zip(&dc)
        .map(|(&r, &d)| d - r)
        .collect();
    values[0] = 0.0;
    ModeField::new(state.grid.clone(), 1, values).expect("finite translation mode")
}

/// `f₀,₀`, `f₀,₁` and `f₁` for one stationary state.
#[derive(Debug, Clone)]
pub struct SpecialModes {
    pub f00: ModeField,
    pub f01: ModeField,
    pub f1: ModeField,
    /// Mass step used for `f₀,₀`.
    pub dm: f64,
    /// `∫ f₀,₀ n_M dx`, ideally 1.
    pub f00_mass: f64,
    pub f00_residual: f64,
}

impl SpecialModes {
    /// Default mass step `10⁻³·min(M, 8π − M)`, i.e. `M·10⁻³` up to `4π`.
    pub fn compute(state: &StationaryState) -> Result<Self> {
        Self::compute_with_step(state, 1e-3 * state.mass.min(CRITICAL_MASS - state.mass))
    }

    pub fn compute_with_step(state: &StationaryState, dm: f64) -> Result<Self> {
        let f00 = zero_mode(state, dm)?;
        let f00_mass = state.grid.quad(
            &f00.values().iter().zip(state.n()).map(|(a, b)| a * b).collect::<Vec<_>>(),
        );
        let f00_residual = zero_mode_residual(state, &f00);
        Ok(Self {
            f01: dilation_mode(state),
            f1: translation_mode(state),
            f00,
            dm,
            f00_mass,
            f00_residual,
        })
    }

    /// `2 + f₀,₁ = ∂_s log(e^{2s} n_M(e^s x))|_{s=0}`, the mass-preserving
    /// dilation direction. It is the eigenfunction of `L⁺` for eigenvalue 2;
    /// `f₀,₁` alone differs from it by a constant.
    pub fn dilation_eigenfunction(&self) -> ModeField {
        self.f01.map(|v| v + 2.0).expect("finite")
    }

    /// Writes `stationary.csv` with header `r,n_M,c_M,f00,f01,f1`.
    pub fn write_csv<W: Write>(&self, state: &StationaryState, out: W) -> Result<()> {
        let mut t = Table::new(["r", "n_M", "c_M", "f00", "f01", "f1"]);
        for i in 0..state.grid.len() {
            t.push(vec![
                fmt_f64(state.grid.nodes()[i]),
                fmt_f64(state.n()[i]),
                fmt_f64(state.c()[i]),
                fmt_f64(self.f00.values()[i]),
                fmt_f64(self.f01.values()[i]),
                fmt_f64(self.f1.values()[i]),
            ]);
        }
        t.write(out)
    }
}

/// Gaussian `M e^{−r²/2} / 2π`, the small-mass limit of `n_M`.
pub fn gaussian_profile(mass: f64, r: f64) -> f64 {
    mass * (-0.5 * r * r).exp() / (2.0 * PI)
}
