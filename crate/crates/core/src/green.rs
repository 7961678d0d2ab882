//! Inverse of `−Δ` on a single angular mode, by Newton's theorem.
//!
//! For `−Δ(u e^{ikθ}) = w e^{ikθ}` on ℝ² the decaying / logarithmic-gauge
//! solutions are
//!
//! ```text
//! k = 0:  u(r) = −[ log r ∫₀^r w s ds + ∫_r^∞ log s · w s ds ]
//! k ≥ 1:  u(r) = (1/2k)[ r^{−k} ∫₀^r s^{k+1} w ds + r^k ∫_r^∞ s^{1−k} w ds ]
//! ```
//!
//! i.e. `u(r) = ∫ G_k(r, s) w(s) s ds` with `G_0 = −log max(r, s)` and
//! `G_k = (min/max)^k / 2k`. The `k = 0` choice is the convolution gauge
//! `u = −(1/2π) log|·| ∗ w`.
//!
//! The discrete operator is nodal quadrature with the grid weights plus the
//! Euler-Maclaurin correction for the kink of `G_k` on the diagonal, which is
//! `−(h_i²/12)·w_i` for every `k` plus higher-order terms that matter only
//! within a few steps of the origin. Row `r = 0` of the radial mode carries the
//! integrable `log s` singularity and is evaluated after subtracting
//! `w(0)·χ(s)`, with `χ(s) = (1 − s²/a²)³₊` integrated in closed form.
//! With `W = diag(weights)` the product `W·P` is exactly symmetric, so the
//! discrete form `(u, w) ↦ ∫ u (−Δ)⁻¹ w` is symmetric.
//!
//! The field is extended by zero beyond `R_max`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::ModeField;
use crate::grid::RadialGrid;

fn chi_radius(grid: &RadialGrid) -> f64 {
    grid.r_max().min(2.0)
}

/// `∫₀^a (−log s)(1 − s²/a²)³ s ds`.
fn chi_log_moment(a: f64) -> f64 {
    -(a * a / 2.0) * (a.ln() / 4.0 - 25.0 / 96.0)
}

fn chi(s: f64, a: f64) -> f64 {
    if s < a {
        let t = 1.0 - s * s / (a * a);
        t * t * t
    } else {
        0.0
    }
}

/// Euler-Maclaurin kink correction coefficient at node `i > 0` on mode `k`.
///
/// The first-derivative jump of `G_k(r_i, s)·s·w(s)` at `s = r_i` is `w` for
/// every `k`, giving `−h²/12`. For `k ≥ 1` the third-derivative jump adds
/// `h⁴(k² − 1)/(720 r²)`. For `k = 0` the integrand beyond the kink is
/// `−w s log s`, whose Euler-Maclaurin series does not converge when `r_i`
/// is a few steps from the origin, so the whole remainder is taken from
/// [`log_kink_remainder`].
fn kink(grid: &RadialGrid, i: usize, k: usize) -> f64 {
    let h = grid.local_step(i);
    let h2 = h * h;
    let r = grid.nodes()[i];
    if k == 0 {
        -h2 / 12.0 + h2 * log_kink_remainder((r / h).round().max(1.0) as usize)
    } else {
        let kk = (k * k) as f64;
        -h2 / 12.0 + h2 * h2 * (kk - 1.0) / (720.0 * r * r)
    }
}

/// Nodes with a tabulated remainder; beyond, the `1/i²` term suffices.
const REMAINDER_TABLE: usize = 256;

/// For `F(t) = t log t` on the unit grid, the part of the trapezoid error on
/// `[i, ∞)` owed to the left end, minus its leading Euler-Maclaurin term
/// `−(log i + 1)/12`.
fn log_kink_remainder(i: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if i > REMAINDER_TABLE {
        return -1.0 / (720.0 * (i * i) as f64);
    }
    let table = TABLE.get_or_init(|| {
        let f = |t: f64| t * t.ln();
        // left-end error of [t, ∞): −Σ B_{2m}/(2m)! F^{(2m−1)}(t)
        let asymptotic = |t: f64| -(t.ln() + 1.0) / 12.0 - 1.0 / (720.0 * t * t) + 1.0 / (5040.0 * t.powi(4));
        let (x, w) = gauss_legendre_16();
        let far = 4096usize;
        let mut q = asymptotic(far as f64);
        let mut out = vec![0.0; REMAINDER_TABLE + 1];
        for j in (1..far).rev() {
            let a = j as f64;
            let exact: f64 = x.iter().zip(&w).map(|(xi, wi)| 0.5 * wi * f(a + 0.5 * (xi + 1.0))).sum();
            q += 0.5 * (f(a) + f(a + 1.0)) - exact;
            if j <= REMAINDER_TABLE {
                out[j] = q + (a.ln() + 1.0) / 12.0;
            }
        }
        out
    });
    table[i]
}

fn gauss_legendre_16() -> ([f64; 16], [f64; 16]) {
    let half = [
        (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
        (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
        (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
        (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
        (0.755_404_408_355_003, 0.124_628_971_255_533_9),
        (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
        (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
        (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
    ];
    let mut x = [0.0; 16];
    let mut w = [0.0; 16];
    for (j, &(xj, wj)) in half.iter().enumerate() {
        x[2 * j] = xj;
        x[2 * j + 1] = -xj;
        w[2 * j] = wj;
        w[2 * j + 1] = wj;
    }
    (x, w)
}

/// Applies `(−Δ)⁻¹` on mode `k` to the profile `w`, in `O(N)`.
pub fn poisson_mode(w: &ModeField, k: usize) -> Result<ModeField> {
    if w.k() != k {
        return Err(Error::Mode(format!("field has mode {} but k = {k} requested", w.k())));
    }
    let grid = w.grid();
    let values = apply_green(grid, w.values(), k);
    ModeField::new(grid.clone(), k, values)
}

/// `(−Δ)⁻¹` on mode `k` applied to raw nodal values.
pub fn apply_green(grid: &RadialGrid, f: &[f64], k: usize) -> Vec<f64> {
    let n = grid.len();
    let r = grid.nodes();
    let wh: Vec<f64> = grid.weights().iter().map(|w| w / (2.0 * PI)).collect();
    let g: Vec<f64> = wh.iter().zip(f).map(|(a, b)| a * b).collect();
    let mut u = vec![0.0; n];
    if k == 0 {
        // suffix[i] = Σ_{j>i} (−log r_j) g_j
        let mut suffix = vec![0.0; n];
        for i in (0..n - 1).rev() {
            suffix[i] = suffix[i + 1] - r[i + 1].ln() * g[i + 1];
        }
        let mut prefix = 0.0;
        for i in 1..n {
            prefix += g[i - 1];
            let s = prefix + g[i];
            u[i] = -r[i].ln() * s + suffix[i] + kink(grid, i, k) * f[i];
        }
        let a = chi_radius(grid);
        let mut acc = f[0] * chi_log_moment(a);
        for j in 1..n {
            acc -= r[j].ln() * wh[j] * (f[j] - f[0] * chi(r[j], a));
        }
        u[0] = acc;
    } else {
        let kf = k as i32;
        let inv2k = 1.0 / (2.0 * k as f64);
        let mut suffix = vec![0.0; n];
        for i in (1..n - 1).rev() {
            suffix[i] = suffix[i + 1] + r[i + 1].powi(-kf) * g[i + 1];
        }
        let mut prefix = 0.0;
        for i in 1..n {
            prefix += r[i].powi(kf) * g[i];
            u[i] = inv2k * (r[i].powi(-kf) * prefix + r[i].powi(kf) * suffix[i])
                + kink(grid, i, k) * f[i];
        }
    }
    u
}

/// Dense matrix `P` with `(P f)_i` equal to [`apply_green`]`(f)_i`.
pub fn green_matrix(grid: &RadialGrid, k: usize) -> DMatrix<f64> {
    let n = grid.len();
    let r = grid.nodes();
    let wh: Vec<f64> = grid.weights().iter().map(|w| w / (2.0 * PI)).collect();
    let mut p = DMatrix::zeros(n, n);
    if k == 0 {
        for j in 0..n {
            for i in 1..n {
                p[(i, j)] = -r[i.max(j)].ln() * wh[j];
            }
        }
        let a = chi_radius(grid);
        let mut diag = chi_log_moment(a);
        for j in 1..n {
            p[(0, j)] = -r[j].ln() * wh[j];
            diag += r[j].ln() * wh[j] * chi(r[j], a);
        }
        p[(0, 0)] = diag;
    } else {
        let kf = k as i32;
        let inv2k = 1.0 / (2.0 * k as f64);
        for j in 1..n {
            for i in 1..n {
                let (lo, hi) = if r[i] < r[j] { (r[i], r[j]) } else { (r[j], r[i]) };
                p[(i, j)] = inv2k * (lo / hi).powi(kf) * wh[j];
            }
        }
    }
    for i in 1..n {
        p[(i, i)] += kink(grid, i, k);
    }
    p
}
