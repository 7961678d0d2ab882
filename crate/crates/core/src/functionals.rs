//! Free energy, the logarithmic HLS / Onofri / Poincaré deficits, the dual
//! functionals and the quadratic forms of the linearization at `n_M`.
//!
//! Conventions:
//!
//! * `F = F₁ − F₂` with `F₁[n] = ∫ n log(n/n_M)` and
//!   `F₂[n] = ½∫(n − n_M)(−Δ)⁻¹(n − n_M)`, so `F[n_M] = 0`.
//! * `F₁*[φ] = M log ∫e^φ dμ_M` and `F₂*[φ] = ½∫|∇φ|² + ∫φ n_M` are the exact
//!   Legendre transforms on densities of mass `M`; `F₂* − F₁*` is `M` times the
//!   Onofri deficit.
//! * `L⁺ = −L` (decay-positive): `∂_t f = −L⁺f`, with `L⁺ f₁ = f₁` and
//!   `L⁺(2 + f₀,₁) = 2(2 + f₀,₁)`.
//! * For profiles on mode `k ≥ 1` every integral carries the angular factor
//!   `c_k = ½` of the real `cos kθ` convention.
//!
//! The quadratic form of the linearization is
//!
//! ```text
//! Q₁[f] = (c_k/M)·[ ∫ f² n_M − ∫ f n_M h_f − C·(∫ f n_M)² ],   h_f = (−Δ)⁻¹(f n_M),
//! ```
//!
//! where `C` (radial mode only) is the constant value of `f₀,₀ − h_{f₀,₀}`.
//! On mass-preserving perturbations (`∫ f n_M = 0`) the last term vanishes and
//! `F[n_M(1 + εf)] = (M/2) Q₁[f] ε² + O(ε³)`; the `C` term makes `f₀,₀` the
//! exact kernel on the full space.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::field::{angular_factor, ModeField};
use crate::flux::{Stiffness, DENSITY_FLOOR};
use crate::green::apply_green;
use crate::io::{fmt_f64, Table};
use crate::stationary::{solve_stationary, SpecialModes, StationaryState};
use crate::stencil::{gradient_energy, radial_derivative};
use crate::CRITICAL_MASS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InequalityId {
    /// `F₁[n] ≥ F₂[n]`.
    FreeEnergy,
    /// Logarithmic HLS inequality.
    LogHls,
    /// Onofri inequality for `dμ_M` with constant `1/2M`.
    Onofri,
    /// Euclidean Onofri inequality for `dμ` with constant `1/16π`.
    OnofriClassical,
    /// `∫|∇ψ|² ≥ ∫|ψ − ψ̄|² n_M`.
    Poincare,
    /// `F₁*[φ] ≤ F₂*[φ]`.
    Legendre,
    /// `Q₂[f] ≥ Q₁[f]`.
    SpectralGap,
}

impl InequalityId {
    pub fn as_str(self) -> &'static str {
        match self {
            InequalityId::FreeEnergy => "free_energy",
            InequalityId::LogHls => "log_hls",
            InequalityId::Onofri => "onofri",
            InequalityId::OnofriClassical => "onofri_classical",
            InequalityId::Poincare => "poincare",
            InequalityId::Legendre => "legendre",
            InequalityId::SpectralGap => "spectral_gap",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated inequality `lhs ≤ rhs`; `deficit = rhs − lhs`.
#[derive(Debug, Clone)]
pub struct DeficitReport {
    pub id: InequalityId,
    pub input_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub deficit: f64,
    /// Named side quantities (mass, Fenchel residuals, ...).
    pub diagnostics: Vec<(&'static str, f64)>,
}

impl DeficitReport {
    pub fn new(id: InequalityId, input_id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            id,
            input_id: input_id.into(),
            lhs,
            rhs,
            deficit: rhs - lhs,
            diagnostics: Vec::new(),
        }
    }

    pub fn with(mut self, name: &'static str, value: f64) -> Self {
        self.diagnostics.push((name, value));
        self
    }

    pub fn diagnostic(&self, name: &str) -> Option<f64> {
        self.diagnostics.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    /// Magnitude used for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.lhs.abs().max(self.rhs.abs()).max(1.0)
    }

    pub fn with_input_id(mut self, id: impl Into<String>) -> Self {
        self.input_id = id.into();
        self
    }
}

/// Writes `deficits.csv`: `inequality_id,input_id,lhs,rhs,deficit`.
pub fn write_deficits_csv<W: Write>(reports: &[DeficitReport], out: W) -> Result<()> {
    let mut t = Table::new(["inequality_id", "input_id", "lhs", "rhs", "deficit"]);
    for r in reports {
        t.push(vec![
            r.id.as_str().to_string(),
            r.input_id.clone(),
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.deficit),
        ]);
    }
    t.write(out)
}

fn require_radial(f: &ModeField, what: &str) -> Result<()> {
    if f.k() != 0 {
        return Err(Error::Mode(format!("{what} needs a radial (k = 0) field, got k = {}", f.k())));
    }
    Ok(())
}

fn require_grid(f: &ModeField, state: &StationaryState) -> Result<()> {
    if !f.grid().same_as(state.grid()) {
        return Err(Error::Parameter("field and stationary state live on different grids".into()));
    }
    Ok(())
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.max(1e-300).ln()
    }
}

/// `log ∑ exp(a_i)`.
fn log_sum_exp(a: impl IntoIterator<Item = f64>) -> f64 {
    let a: Vec<f64> = a.into_iter().collect();
    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + a.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub f1: f64,
    pub f2: f64,
    /// `F₁ − F₂`.
    pub f: f64,
    /// Additive-constant convention.
    pub k_used: &'static str,
    pub mass: f64,
    /// `|∫n − M| / M > 10⁻⁶`: `F₁ ≥ F₂` is not asserted.
    pub mass_mismatch: bool,
}

/// `F₁`, `F₂` and `F = F₁ − F₂` of a radial density against `n_M`.
pub fn free_energy(n: &ModeField, state: &StationaryState) -> Result<EnergyBreakdown> {
    require_radial(n, "free_energy")?;
    require_grid(n, state)?;
    if let Some(i) = n.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!("negative density at node {i}")));
    }
    let grid = state.grid();
    let nm = state.n();
    let f1: f64 = n
        .values()
        .iter()
        .zip(nm)
        .zip(grid.weights())
        .map(|((&a, &b), &w)| w * (xlogy(a, a) - xlogy(a, b)))
        .sum();
    let diff: Vec<f64> = n.values().iter().zip(nm).map(|(a, b)| a - b).collect();
    let pot = apply_green(grid, &diff, 0);
    let f2 = 0.5 * grid.weights().iter().zip(&diff).zip(&pot).map(|((w, a), b)| w * a * b).sum::<f64>();
    let mass = grid.quad(n.values());
    Ok(EnergyBreakdown {
        f1,
        f2,
        f: f1 - f2,
        k_used: "F[n_M] = 0",
        mass,
        mass_mismatch: ((mass - state.mass()) / state.mass()).abs() > 1e-6,
    })
}

/// `F₁[n] ≥ F₂[n]` as a deficit report.
pub fn free_energy_deficit(n: &ModeField, state: &StationaryState) -> Result<DeficitReport> {
    let e = free_energy(n, state)?;
    Ok(DeficitReport::new(InequalityId::FreeEnergy, "", e.f2, e.f1)
        .with("mass", e.mass)
        .with("mass_mismatch", if e.mass_mismatch { 1.0 } else { 0.0 }))
}

/// Pieces of the logarithmic HLS functional of a radial density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogHlsTerms {
    pub mass: f64,
    /// `∫ n log n`.
    pub entropy: f64,
    /// `∫ n (−Δ)⁻¹n = −(1/2π)∬ n(x) n(y) log|x − y|`.
    pub interaction: f64,
}

impl LogHlsTerms {
    /// `∫ n log(n/M) + M(1 + log π)`.
    pub fn rhs(&self) -> f64 {
        self.entropy - self.mass * self.mass.ln() + self.mass * (1.0 + PI.ln())
    }

    /// `−(2/M)∬ n n log|x−y| = (4π/M) ∫ n (−Δ)⁻¹n`.
    pub fn lhs(&self) -> f64 {
        4.0 * PI / self.mass * self.interaction
    }

    pub fn report(&self) -> DeficitReport {
        DeficitReport::new(InequalityId::LogHls, "", self.lhs(), self.rhs()).with("mass", self.mass)
    }
}

pub fn loghls_terms(n: &ModeField) -> Result<LogHlsTerms> {
    require_radial(n, "loghls_deficit")?;
    let grid = n.grid();
    let mass = grid.quad(n.values());
    if !(mass > 0.0) {
        return Err(Error::Domain(format!("log-HLS needs positive mass, got {mass}")));
    }
    if let Some(i) = n.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!("negative density at node {i}")));
    }
    let entropy = grid.quad(&n.values().iter().map(|&v| xlogy(v, v)).collect::<Vec<_>>());
    let pot = apply_green(grid, n.values(), 0);
    let interaction = grid.weights().iter().zip(n.values()).zip(&pot).map(|((w, a), b)| w * a * b).sum();
    Ok(LogHlsTerms {
        mass,
        entropy,
        interaction,
    })
}

/// `∫n log(n/M) + (2/M)∬ n(x)n(y) log|x−y| + M(1 + log π) ≥ 0`.
pub fn loghls_deficit(n: &ModeField) -> Result<DeficitReport> {
    Ok(loghls_terms(n)?.report())
}

/// Reference measure of an Onofri inequality.
#[derive(Debug, Clone, Copy)]
pub enum OnofriMeasure<'a> {
    /// `dμ_M = n_M dx / M`, constant `1/2M`.
    Stationary(&'a StationaryState),
    /// `dμ = dx / π(1+|x|²)²`, constant `1/16π`; the tail beyond `R_max` is
    /// added analytically with `φ` frozen at its boundary value.
    Classical,
}

/// Quadrature points in `θ` for non-radial exponential moments.
const THETA_POINTS: usize = 128;

/// `log ∫ e^φ ρ dx` and `∫ φ ρ dx` for `φ = ∑_k φ_k(r) cos kθ`.
fn exp_moments(phi: &[ModeField], rho: &[f64]) -> (f64, f64) {
    let grid = phi[0].grid();
    let w = grid.weights();
    let radial: Vec<f64> = phi
        .iter()
        .filter(|p| p.k() == 0)
        .fold(vec![0.0; grid.len()], |mut acc, p| {
            for (a, v) in acc.iter_mut().zip(p.values()) {
                *a += v;
            }
            acc
        });
    let mean: f64 = w.iter().zip(rho).zip(&radial).map(|((a, b), c)| a * b * c).sum();
    let nonradial: Vec<&ModeField> = phi.iter().filter(|p| p.k() > 0).collect();
    let log_terms = |theta: f64| -> Vec<f64> {
        (0..grid.len())
            .filter(|&i| w[i] * rho[i] > 0.0)
            .map(|i| {
                let mut v = radial[i];
                for p in &nonradial {
                    v += p.values()[i] * (p.k() as f64 * theta).cos();
                }
                v + (w[i] * rho[i]).ln()
            })
            .collect()
    };
    let lse = if nonradial.is_empty() {
        log_sum_exp(log_terms(0.0))
    } else {
        // ⟨·⟩_θ by the trapezoid rule, exponentially accurate for periodic data
        let per: Vec<f64> = (0..THETA_POINTS)
            .map(|j| log_sum_exp(log_terms(2.0 * PI * j as f64 / THETA_POINTS as f64)))
            .collect();
        log_sum_exp(per) - (THETA_POINTS as f64).ln()
    };
    (lse, mean)
}

fn check_modes(phi: &[ModeField]) -> Result<()> {
    let first = phi
        .first()
        .ok_or_else(|| Error::Parameter("empty mode sum".into()))?;
    for p in phi {
        if !p.grid().same_as(first.grid()) {
            return Err(Error::Parameter("mode sum on mixed grids".into()));
        }
    }
    Ok(())
}

/// `(1/2M)∫|∇φ|² − [log ∫e^φ dμ_M − ∫φ dμ_M] ≥ 0`, or the Euclidean version
/// with `dμ` and `1/16π`. `phi` lists the modes of `∑_k φ_k(r) cos kθ`.
pub fn onofri_deficit(phi: &[ModeField], measure: OnofriMeasure<'_>) -> Result<DeficitReport> {
    check_modes(phi)?;
    let grid = phi[0].grid().clone();
    let energy: f64 = phi.iter().map(gradient_energy).sum();
    match measure {
        OnofriMeasure::Stationary(state) => {
            require_grid(&phi[0], state)?;
            let (lse, mean) = exp_moments(phi, state.mu().values());
            let lhs = lse - mean;
            let rhs = energy / (2.0 * state.mass());
            Ok(DeficitReport::new(InequalityId::Onofri, "", lhs, rhs).with("grad_energy", energy))
        }
        OnofriMeasure::Classical => {
            let mu: Vec<f64> = grid.nodes().iter().map(|r| 1.0 / (PI * (1.0 + r * r).powi(2))).collect();
            let (lse, mean) = exp_moments(phi, &mu);
            // complement of the discrete mass: the analytic tail 1/(1+R²) plus
            // the quadrature error, so constants stay exact
            let tail = 1.0 - grid.quad(&mu);
            let edge: f64 = phi.iter().filter(|p| p.k() == 0).map(|p| *p.values().last().unwrap()).sum();
            let total = log_sum_exp([lse, edge + tail.ln()]);
            let lhs = total - (mean + edge * tail);
            let rhs = energy / (16.0 * PI);
            Ok(DeficitReport::new(InequalityId::OnofriClassical, "", lhs, rhs).with("grad_energy", energy))
        }
    }
}

/// `∫|∇ψ|² − ∫|ψ − ψ̄|² n_M ≥ 0` with `ψ̄ = ∫ψ dμ_M` (zero for `k ≥ 1`).
pub fn poincare_deficit(psi: &ModeField, state: &StationaryState) -> Result<DeficitReport> {
    require_grid(psi, state)?;
    let grid = state.grid();
    let n = state.n();
    let mean = if psi.k() == 0 {
        grid.weights().iter().zip(n).zip(psi.values()).map(|((w, a), b)| w * a * b).sum::<f64>()
            / state.mass()
    } else {
        0.0
    };
    let var: f64 = (0..grid.len())
        .filter(|&i| psi.k() == 0 || i > 0)
        .map(|i| grid.weights()[i] * n[i] * (psi.values()[i] - mean).powi(2))
        .sum::<f64>()
        * angular_factor(psi.k());
    let rhs = gradient_energy(psi);
    Ok(DeficitReport::new(InequalityId::Poincare, "", var, rhs).with("mean", mean))
}

/// `F₁*[φ] = M log ∫e^φ dμ_M`.
pub fn f1_star(phi: &ModeField, state: &StationaryState) -> f64 {
    let (lse, _) = exp_moments(std::slice::from_ref(phi), state.mu().values());
    state.mass() * lse
}

/// `F₂*[φ] = ½∫|∇φ|² + ∫φ n_M`.
pub fn f2_star(phi: &ModeField, state: &StationaryState) -> f64 {
    0.5 * gradient_energy(phi) + state.grid().quad(&mul(phi.values(), state.n()))
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// The density `M e^φ μ_M / ∫e^φ dμ_M` attaining the supremum in `F₁*[φ]`.
pub fn f1_optimizer(phi: &ModeField, state: &StationaryState) -> Result<ModeField> {
    let grid = state.grid();
    let mu = state.mu().values();
    let (lse, _) = exp_moments(std::slice::from_ref(phi), mu);
    let vals = phi
        .values()
        .iter()
        .zip(mu)
        .map(|(p, m)| if *m > 0.0 { state.mass() * m * (p - lse).exp() } else { 0.0 })
        .collect();
    ModeField::new(grid.clone(), 0, vals)
}

/// `F₂*[φ] − F₁*[φ] ≥ 0` with Fenchel diagnostics:
/// `fenchel_f1 = |∫φn* − F₁[n*] − F₁*[φ]|` at the optimizer `n*`.
pub fn legendre_gap(phi: &ModeField, state: &StationaryState) -> Result<DeficitReport> {
    require_radial(phi, "legendre_gap")?;
    require_grid(phi, state)?;
    let s1 = f1_star(phi, state);
    let s2 = f2_star(phi, state);
    let opt = f1_optimizer(phi, state)?;
    let e = free_energy(&opt, state)?;
    let pairing = state.grid().quad(&mul(phi.values(), opt.values()));
    let fenchel = (pairing - e.f1 - s1).abs();
    Ok(DeficitReport::new(InequalityId::Legendre, "", s1, s2)
        .with("fenchel_f1", fenchel)
        .with("fenchel_scale", pairing.abs().max(e.f1.abs()).max(s1.abs()).max(1.0)))
}

/// `|∫φn − F₂[n] − F₂*[φ]|` at `φ = (−Δ)⁻¹(n − n_M)`, the optimality relation
/// of `F₂*`, together with `φ`.
pub fn f2_fenchel_residual(n: &ModeField, state: &StationaryState) -> Result<(f64, ModeField)> {
    require_radial(n, "f2_fenchel_residual")?;
    require_grid(n, state)?;
    let grid = state.grid();
    let diff: Vec<f64> = n.values().iter().zip(state.n()).map(|(a, b)| a - b).collect();
    let phi = ModeField::new(grid.clone(), 0, apply_green(grid, &diff, 0))?;
    let f2 = 0.5 * grid.quad(&mul(&diff, phi.values()));
    let pairing = grid.quad(&mul(phi.values(), n.values()));
    Ok(((pairing - f2 - f2_star(&phi, state)).abs(), phi))
}

/// `G[c] = ½∫n c − M log ∫e^{c − r²/2}` with `n = −Δc`.
///
/// The quadratic term is evaluated after one integration by parts,
/// `∫(−Δc)c = ∫|∇c|² − 2πR c(R) c′(R)`, which needs only first derivatives.
pub fn g_functional(c: &ModeField, mass: f64) -> Result<f64> {
    require_radial(c, "g_functional")?;
    let grid = c.grid();
    let last = grid.len() - 1;
    let dc = radial_derivative(c);
    let boundary = 2.0 * PI * grid.r_max() * c.values()[last] * dc[last];
    let quad = 0.5 * (gradient_energy(c) - boundary);
    let w = grid.weights();
    let lse = log_sum_exp(
        (0..grid.len()).map(|i| w[i].ln() + c.values()[i] - 0.5 * grid.nodes()[i].powi(2)),
    );
    Ok(quad - mass * lse)
}

/// Quadratic forms and the linearized operator at one stationary state.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    state: StationaryState,
    f00: ModeField,
    shell: f64,
}

impl LinearizedOperator {
    pub fn new(state: &StationaryState, modes: &SpecialModes) -> Self {
        let grid = state.grid();
        let n = state.n();
        let h = apply_green(grid, &mul(modes.f00.values(), n), 0);
        let resid: Vec<f64> = modes.f00.values().iter().zip(&h).map(|(a, b)| a - b).collect();
        let shell = grid.quad(&mul(&resid, n)) / state.mass();
        Self {
            state: state.clone(),
            f00: modes.f00.clone(),
            shell,
        }
    }

    /// Builds the special modes with the default mass step.
    pub fn from_state(state: &StationaryState) -> Result<Self> {
        Ok(Self::new(state, &SpecialModes::compute(state)?))
    }

    pub fn state(&self) -> &StationaryState {
        &self.state
    }

    pub fn kernel(&self) -> &ModeField {
        &self.f00
    }

    /// The constant `C = f₀,₀ − (−Δ)⁻¹(f₀,₀ n_M)` (μ_M-average).
    pub fn shell_constant(&self) -> f64 {
        self.shell
    }

    fn profile(&self, f: &ModeField) -> Vec<f64> {
        let mut v = f.values().to_vec();
        if f.k() > 0 {
            v[0] = 0.0;
        }
        v
    }

    /// `h_f = (−Δ)⁻¹(f n_M)` on the mode of `f`.
    pub fn potential_of(&self, f: &ModeField) -> Vec<f64> {
        let v = self.profile(f);
        apply_green(self.state.grid(), &mul(&v, self.state.n()), f.k())
    }

    /// `⟨f, g⟩_{L²(dμ_M)}` including the angular factor.
    pub fn gram(&self, f: &ModeField, g: &ModeField) -> Result<f64> {
        self.check(f)?;
        f.check_compatible(g)?;
        let (a, b) = (self.profile(f), self.profile(g));
        let s = self.state.grid().quad(&mul(&mul(&a, &b), self.state.n()));
        Ok(angular_factor(f.k()) * s / self.state.mass())
    }

    fn check(&self, f: &ModeField) -> Result<()> {
        require_grid(f, &self.state)
    }

    /// Symmetric bilinear form polarizing `Q₁`.
    pub fn bilinear(&self, f: &ModeField, g: &ModeField) -> Result<f64> {
        self.check(f)?;
        f.check_compatible(g)?;
        let grid = self.state.grid();
        let n = self.state.n();
        let (a, b) = (self.profile(f), self.profile(g));
        let hb = self.potential_of(g);
        let wn: Vec<f64> = grid.weights().iter().zip(n).map(|(w, x)| w * x).collect();
        let mut s = 0.0;
        for i in 0..a.len() {
            s += wn[i] * a[i] * (b[i] - hb[i]);
        }
        if f.k() == 0 {
            let ma: f64 = wn.iter().zip(&a).map(|(x, y)| x * y).sum();
            let mb: f64 = wn.iter().zip(&b).map(|(x, y)| x * y).sum();
            s -= self.shell * ma * mb;
        }
        Ok(angular_factor(f.k()) * s / self.state.mass())
    }

    pub fn q1(&self, f: &ModeField) -> Result<f64> {
        self.bilinear(f, f)
    }

    /// `L⁺f = −(1/n_M) ∇·[n_M ∇(f − h_f)]`. Nodes with `n_M ≤ 10⁻²⁸⁰` are
    /// returned as 0, as is node 0 for `k ≥ 1`.
    pub fn apply_l_plus(&self, f: &ModeField) -> Result<ModeField> {
        self.check(f)?;
        let grid = self.state.grid();
        let n = self.state.n();
        let v = self.profile(f);
        let h = self.potential_of(f);
        let diff: Vec<f64> = v.iter().zip(&h).map(|(a, b)| a - b).collect();
        let k = Stiffness::new(grid, n, f.k()).apply(&diff);
        let out = (0..grid.len())
            .map(|i| {
                let wn = grid.weights()[i] * n[i];
                if n[i] <= DENSITY_FLOOR || (f.k() > 0 && i == 0) {
                    0.0
                } else {
                    k[i] / wn
                }
            })
            .collect();
        ModeField::new(grid.clone(), f.k(), out)
    }

    /// `L f = (1/n_M)∇·[n_M ∇(f − g c)]`, the operator with `∂_t f = L f`.
    pub fn apply_l(&self, f: &ModeField) -> Result<ModeField> {
        self.apply_l_plus(f)?.map(|v| -v)
    }

    /// `Q₂[f] = B(f, L⁺f)`.
    pub fn q2(&self, f: &ModeField) -> Result<f64> {
        let lf = self.apply_l_plus(f)?;
        self.bilinear(f, &lf)
    }
}

/// `λ ↦ F[n_λ]`, `n_λ(x) = λ² n(λx)`. Subcritical masses are measured by
/// `F₁ − F₂` against `n_M`; for `M ≥ 8π` the raw form
/// `∫n log n + ½∫|x|²n − ½∫n(−Δ)⁻¹n` is used.
pub fn scaling_family_energy(n: &ModeField, lambdas: &[f64]) -> Result<Vec<f64>> {
    require_radial(n, "scaling_family_energy")?;
    if let Some(i) = n.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!("negative density at node {i}")));
    }
    let grid = n.grid();
    let mass = grid.quad(n.values());
    let r99 = {
        let mut acc = 0.0;
        let mut r = grid.r_max();
        for (i, (&w, &v)) in grid.weights().iter().zip(n.values()).enumerate() {
            acc += w * v;
            if acc >= 0.99 * mass {
                r = grid.nodes()[i];
                break;
            }
        }
        r
    };
    let min_step = (0..grid.len() - 1).map(|i| grid.local_step(i)).fold(f64::INFINITY, f64::min);
    let max_step = (0..grid.len()).map(|i| grid.local_step(i)).fold(0.0f64, f64::max);
    let state = if mass < CRITICAL_MASS {
        Some(solve_stationary(mass, grid.clone(), 1e-10, 1000)?)
    } else {
        None
    };
    let mut out = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        if !(lam > 0.0) {
            return Err(Error::Parameter(format!("scaling factor must be positive, got {lam}")));
        }
        let width = r99 / lam;
        if width < 16.0 * max_step.max(min_step) || width > grid.r_max() {
            return Err(Error::Resolution(format!(
                "λ = {lam}: rescaled profile width {width:.3e} is not resolved on [0, {}]",
                grid.r_max()
            )));
        }
        let vals = grid
            .nodes()
            .iter()
            .map(|&r| {
                let s = lam * r;
                grid.interpolate(n.values(), s).map_or(0.0, |v| (lam * lam * v).max(0.0))
            })
            .collect();
        let nl = ModeField::new(grid.clone(), 0, vals)?;
        let value = match &state {
            Some(st) => free_energy(&nl, st)?.f,
            None => {
                let t = loghls_terms(&nl)?;
                let second: f64 = grid
                    .weights()
                    .iter()
                    .zip(grid.nodes())
                    .zip(nl.values())
                    .map(|((w, r), v)| 0.5 * w * r * r * v)
                    .sum::<f64>();
                t.entropy + second - 0.5 * t.interaction
            }
        };
        out.push(value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn state(m: f64) -> StationaryState {
        let g = make_grid(1024, 14.0, 0.0).unwrap();
        solve_stationary(m, g, 1e-12, 300).unwrap()
    }

    #[test]
    fn free_energy_vanishes_at_minimizer() {
        let s = state(4.0);
        let e = free_energy(s.density(), &s).unwrap();
        assert!(e.f1.abs() < 1e-14 && e.f2.abs() < 1e-14);
        assert!(!e.mass_mismatch);
    }

    #[test]
    fn gaussian_has_positive_free_energy() {
        let s = state(4.0);
        let n = ModeField::from_fn(s.grid().clone(), 0, |r| 4.0 * (-0.5 * r * r).exp() / (2.0 * PI)).unwrap();
        let e = free_energy(&n, &s).unwrap();
        assert!(e.f > 0.0, "{e:?}");
    }

    #[test]
    fn negative_density_rejected() {
        let s = state(1.0);
        let n = s.density().map(|v| v - 1e-3).unwrap();
        assert!(matches!(free_energy(&n, &s), Err(Error::Domain(_))));
    }

    #[test]
    fn onofri_vanishes_on_constants() {
        let s = state(PI);
        let c = ModeField::from_fn(s.grid().clone(), 0, |_| 2.5).unwrap();
        let d = onofri_deficit(std::slice::from_ref(&c), OnofriMeasure::Stationary(&s)).unwrap();
        assert!(d.deficit.abs() < 1e-13, "{}", d.deficit);
        let d = onofri_deficit(&[c], OnofriMeasure::Classical).unwrap();
        assert!(d.deficit.abs() < 1e-13, "{}", d.deficit);
    }

    #[test]
    fn linearized_operator_kernel_and_symmetry() {
        let s = state(2.0 * PI);
        let op = LinearizedOperator::from_state(&s).unwrap();
        let f00 = op.kernel().clone();
        let norm = op.gram(&f00, &f00).unwrap();
        assert!(op.q1(&f00).unwrap().abs() < 1e-6 * norm);
        let g = s.grid().clone();
        let a = ModeField::from_fn(g.clone(), 0, |r| (-(r - 1.0).powi(2)).exp()).unwrap();
        let b = ModeField::from_fn(g, 0, |r| r * r * (-0.3 * r * r).exp()).unwrap();
        let ab = op.bilinear(&a, &b).unwrap();
        let ba = op.bilinear(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12 * ab.abs().max(1.0));
    }
}
