//! Dense quadratic-form matrices per angular mode and the generalized
//! eigenproblems behind the kernel, gap and `κ` statements.
//!
//! In the nodal basis (nodes `1..N` for `k ≥ 1`, where profiles vanish at the
//! origin) with `W N = diag(w_i n_M(r_i))`:
//!
//! ```text
//! Gram = c_k·WN / M
//! Q1m  = c_k·WN·A / M,        A = I − P·N − C·1·(WN·1)ᵀ   (C only for k = 0)
//! L⁺   = (WN)⁻¹·K·A
//! Q2m  = sym(Q1m·L⁺)          (= c_k·AᵀKA / M up to rounding)
//! ```
//!
//! with `P` the dense Green matrix and `K` the flux stiffness of `n_M`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::field::{angular_factor, ModeField};
use crate::flux::{Stiffness, DENSITY_FLOOR};
use crate::functionals::LinearizedOperator;
use crate::green::green_matrix;
use crate::io::{fmt_f64, Table};
use crate::stationary::StationaryState;

/// Largest grid for which dense matrices are built.
pub const MAX_DENSE_NODES: usize = 8192;

/// Number of eigenvectors kept in a [`SpectralResult`].
const KEPT_VECTORS: usize = 12;

#[derive(Debug, Clone)]
pub struct QuadFormMatrices {
    pub k: usize,
    /// First node of the basis (1 for `k ≥ 1`).
    pub offset: usize,
    pub gram: DMatrix<f64>,
    pub q1m: DMatrix<f64>,
    pub q2m: DMatrix<f64>,
    /// `L⁺` restricted to the basis.
    pub l_plus: DMatrix<f64>,
    /// `‖X − Xᵀ‖_F / ‖X‖_F` of `Q1m` before symmetrization.
    pub asym_q1: f64,
    /// Same for the raw pairing `Q1m·L⁺`.
    pub asym_q2: f64,
    /// Trace of the Gram-scaled `Q1m`, the scale for definiteness checks.
    pub trace_scale: f64,
}

impl QuadFormMatrices {
    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// Nodal values restricted to the basis.
    pub fn coefficients(&self, f: &ModeField) -> DVector<f64> {
        DVector::from_column_slice(&f.values()[self.offset..])
    }

    /// `vᵀ X v`.
    pub fn form(x: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
        v.dot(&(x * v))
    }
}

fn asymmetry(x: &DMatrix<f64>) -> f64 {
    let d = x - x.transpose();
    d.norm() / x.norm().max(f64::MIN_POSITIVE)
}

fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Assembles Gram, `Q₁`, `L⁺` and `Q₂` for mode `k`.
pub fn assemble_mode(k: usize, op: &LinearizedOperator) -> Result<QuadFormMatrices> {
    let state = op.state();
    let grid = state.grid();
    let n_nodes = grid.len();
    if n_nodes > MAX_DENSE_NODES {
        return Err(Error::Parameter(format!(
            "dense assembly limited to {MAX_DENSE_NODES} nodes, grid has {n_nodes}"
        )));
    }
    let offset = usize::from(k > 0);
    let dim = n_nodes - offset;
    let m = state.mass();
    let ck = angular_factor(k);
    let n = state.n();
    let wn: Vec<f64> = grid.weights().iter().zip(n).map(|(w, x)| w * x).collect();

    let p = green_matrix(grid, k);
    let shell = if k == 0 { op.shell_constant() } else { 0.0 };
    // A restricted to basis columns, all rows.
    let a = DMatrix::from_fn(n_nodes, dim, |i, jj| {
        let j = jj + offset;
        let mut v = -p[(i, j)] * n[j] - shell * wn[j];
        if i == j {
            v += 1.0;
        }
        v
    });

    let gram = DMatrix::from_fn(dim, dim, |i, j| if i == j { ck * wn[i + offset] / m } else { 0.0 });
    let q1_raw = DMatrix::from_fn(dim, dim, |i, j| ck * wn[i + offset] * a[(i + offset, j)] / m);
    let asym_q1 = asymmetry(&q1_raw);
    let q1m = symmetrize(&q1_raw);

    let stiff = Stiffness::new(grid, n, k);
    let mut l_plus = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let col: Vec<f64> = a.column(j).iter().copied().collect();
        let kc = stiff.apply(&col);
        for i in 0..dim {
            let node = i + offset;
            if n[node] > DENSITY_FLOOR {
                l_plus[(i, j)] = kc[node] / wn[node];
            }
        }
    }
    let pairing = &q1m * &l_plus;
    let asym_q2 = asymmetry(&pairing);
    let q2m = symmetrize(&pairing);
    let trace_scale = (0..dim).map(|i| q1m[(i, i)] / gram[(i, i)]).sum::<f64>().abs();
    Ok(QuadFormMatrices {
        k,
        offset,
        gram,
        q1m,
        q2m,
        l_plus,
        asym_q1,
        asym_q2,
        trace_scale,
    })
}

#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub k: usize,
    /// Generalized eigenvalues of `(Q2m, Q1m)` on the admissible subspace,
    /// ascending.
    pub eigenvalues: Vec<f64>,
    /// Nodal eigenvectors (basis rows) for the lowest eigenvalues,
    /// `Q₁`-orthonormal.
    pub eigenvectors: DMatrix<f64>,
    /// Numerical kernel of `Q1m` (radial mode).
    pub kernel_vector: Option<ModeField>,
    /// Gram-angle between the kernel vector and `f₀,₀`, radians.
    pub kernel_angle: Option<f64>,
    /// Smallest eigenvalue of the Gram-scaled `Q1m` on the full basis.
    pub q1_min_eigenvalue: f64,
    /// Smallest eigenvalue of the Gram-scaled `Q1m` on the admissible subspace.
    pub q1_restricted_min: f64,
    /// `κ_k = 1 / q1_restricted_min`.
    pub kappa: f64,
}

impl SpectralResult {
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Householder reflector `H = I − 2vvᵀ` with `H u = ±‖u‖ e₁`.
fn householder(u: &DVector<f64>) -> DVector<f64> {
    let mut v = u.clone();
    let alpha = u.norm() * if u[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += alpha;
    let nv = v.norm();
    v / nv
}

/// `H X H` for symmetric `X` and reflector `v`.
fn reflect(x: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let xv = x * v;
    let vxv = v.dot(&xv);
    let w = &xv - v * vxv;
    x - (v * w.transpose() + &w * v.transpose()) * 2.0
}

/// Solves `Q2m v = λ Q1m v` on the `Q₁`-definite subspace; for `k = 0` the
/// Gram-orthogonal complement of `f₀,₀`.
pub fn eigen_gap(mats: &QuadFormMatrices, op: &LinearizedOperator) -> Result<SpectralResult> {
    let dim = mats.dim();
    let s: DVector<f64> = DVector::from_fn(dim, |i, _| 1.0 / mats.gram[(i, i)].sqrt());
    let sdiag = DMatrix::from_diagonal(&s);
    let q1s = &sdiag * &mats.q1m * &sdiag;
    let q2s = &sdiag * &mats.q2m * &sdiag;

    let mut kernel_vector = None;
    let mut kernel_angle = None;
    let (q1r, q2r, back, q1_min) = if mats.k == 0 {
        let eig = SymmetricEigen::new(q1s.clone());
        let imin = eig.eigenvalues.imin();
        let q1_min = eig.eigenvalues[imin];
        let kv = eig.eigenvectors.column(imin).component_mul(&s);
        let f00 = mats.coefficients(op.kernel());
        let g = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&mats.gram * b));
        let cos = g(&kv, &f00).abs() / (g(&kv, &kv) * g(&f00, &f00)).sqrt();
        kernel_angle = Some(cos.min(1.0).acos());
        let grid = op.state().grid().clone();
        kernel_vector = Some(ModeField::new(grid, 0, kv.iter().copied().collect())?);

        let u = f00.component_div(&s);
        let v = householder(&u);
        let q1h = reflect(&q1s, &v);
        let q2h = reflect(&q2s, &v);
        let q1r = q1h.view((1, 1), (dim - 1, dim - 1)).into_owned();
        let q2r = q2h.view((1, 1), (dim - 1, dim - 1)).into_owned();
        // columns map restricted coordinates back to nodal values
        let mut h = DMatrix::<f64>::identity(dim, dim);
        h -= &v * v.transpose() * 2.0;
        let back = &sdiag * h.columns(1, dim - 1);
        (q1r, q2r, back, q1_min)
    } else {
        let q1_min = q1s.symmetric_eigenvalues().min();
        (q1s, q2s, sdiag.clone(), q1_min)
    };

    let restricted_min = q1r.symmetric_eigenvalues().min();
    let tol = 1e-8 * mats.trace_scale.max(1.0);
    if restricted_min < -tol {
        return Err(Error::Discretization(format!(
            "Q1 indefinite on the admissible subspace of mode {}: min eigenvalue {restricted_min:e}",
            mats.k
        )));
    }
    let chol = q1r.clone().cholesky().ok_or_else(|| {
        Error::Discretization(format!(
            "Q1 not positive definite on the admissible subspace of mode {} (min eigenvalue {restricted_min:e})",
            mats.k
        ))
    })?;
    let l = chol.l();
    let linv_q2 = l
        .solve_lower_triangular(&q2r)
        .ok_or_else(|| Error::Discretization("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_q2.transpose())
        .ok_or_else(|| Error::Discretization("singular Cholesky factor".into()))?;
    let c = symmetrize(&c);
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let keep = KEPT_VECTORS.min(order.len());
    let lt = l.transpose();
    let mut eigenvectors = DMatrix::zeros(dim, keep);
    for (slot, &i) in order.iter().take(keep).enumerate() {
        let y = eig.eigenvectors.column(i).into_owned();
        let z = lt
            .solve_upper_triangular(&y)
            .ok_or_else(|| Error::Discretization("singular Cholesky factor".into()))?;
        eigenvectors.set_column(slot, &(&back * z));
    }
    Ok(SpectralResult {
        k: mats.k,
        eigenvalues,
        eigenvectors,
        kernel_vector,
        kernel_angle,
        q1_min_eigenvalue: q1_min,
        q1_restricted_min: restricted_min,
        kappa: 1.0 / restricted_min,
    })
}

/// Assembles and solves modes `0..=k_max`.
pub fn mode_spectra(op: &LinearizedOperator, k_max: usize) -> Result<Vec<SpectralResult>> {
    (0..=k_max)
        .map(|k| assemble_mode(k, op).and_then(|m| eigen_gap(&m, op)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    /// `(k, κ_k)`.
    pub per_mode: Vec<(usize, f64)>,
    /// `max_k κ_k`.
    pub kappa: f64,
    pub nodes: usize,
}

/// `κ = max_k κ_k` over the given spectra.
pub fn estimate_kappa(spectra: &[SpectralResult], nodes: usize) -> KappaReport {
    let per_mode: Vec<(usize, f64)> = spectra.iter().map(|s| (s.k, s.kappa)).collect();
    let kappa = per_mode.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    KappaReport {
        per_mode,
        kappa,
        nodes,
    }
}

/// `‖L⁺f − λf‖_{L²(dμ_M)} / ‖f‖_{L²(dμ_M)}`, matrix-free.
pub fn eigen_residual(op: &LinearizedOperator, candidate: &ModeField, lambda: f64) -> Result<f64> {
    let lf = op.apply_l_plus(candidate)?;
    let diff = lf.axpby(1.0, candidate, -lambda)?;
    Ok((op.gram(&diff, &diff)? / op.gram(candidate, candidate)?).sqrt())
}

/// Lowest eigenvalues of the radial linearization in cumulated form,
///
/// ```text
/// −[ r n_M (F′/(r n_M))′ + n_M F ] = λ F,   F(0) = F(R*) = 0,
/// ```
///
/// where `F` is the cumulated perturbation `∫₀^r g s ds` and `R*` the radius
/// where `n_M` has dropped by `10⁻³⁰`. Mass-preserving perturbations only, so
/// the kernel `f₀,₀` does not appear.
pub fn cumulated_spectrum(state: &StationaryState, count: usize) -> Result<Vec<f64>> {
    let grid = state.grid();
    let r = grid.nodes();
    let n = state.n();
    let cut = n[0] * 1e-30;
    let last = (1..grid.len()).take_while(|&i| n[i] > cut).last().unwrap_or(0);
    if last < 4 {
        return Err(Error::Resolution("too few nodes for the cumulated problem".into()));
    }
    // unknowns at nodes 1..last−1
    let dim = last - 1;
    let p_face = |i: usize| {
        let rf = 0.5 * (r[i] + r[i + 1]);
        let nf = (n[i] * n[i + 1]).sqrt();
        1.0 / (rf * nf * (r[i + 1] - r[i]))
    };
    let mut a = DMatrix::zeros(dim, dim);
    let mut mass = DVector::zeros(dim);
    for row in 0..dim {
        let i = row + 1;
        let delta = 0.5 * (r[i + 1] - r[i - 1]);
        let (pl, pr) = (p_face(i - 1), p_face(i));
        a[(row, row)] = pl + pr - delta / r[i];
        if row + 1 < dim {
            a[(row, row + 1)] = -pr;
            a[(row + 1, row)] = -pr;
        }
        mass[row] = delta / (r[i] * n[i]);
    }
    let s = mass.map(|v| 1.0 / v.sqrt());
    let scaled = DMatrix::from_fn(dim, dim, |i, j| a[(i, j)] * s[i] * s[j]);
    let mut ev: Vec<f64> = scaled.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(count);
    Ok(ev)
}

/// Writes `spectrum.csv`: `k,index,lambda` for the lowest `per_mode` values.
pub fn write_spectrum_csv<W: Write>(spectra: &[SpectralResult], per_mode: usize, out: W) -> Result<()> {
    let mut t = Table::new(["k", "index", "lambda"]);
    for s in spectra {
        for (i, l) in s.eigenvalues.iter().take(per_mode).enumerate() {
            t.push(vec![s.k.to_string(), i.to_string(), fmt_f64(*l)]);
        }
    }
    t.write(out)
}

/// Writes `kappa.csv`: `k,kappa,N`.
pub fn write_kappa_csv<W: Write>(reports: &[KappaReport], out: W) -> Result<()> {
    let mut t = Table::new(["k", "kappa", "N"]);
    for rep in reports {
        for (k, kappa) in &rep.per_mode {
            t.push(vec![k.to_string(), fmt_f64(*kappa), rep.nodes.to_string()]);
        }
    }
    t.write(out)
}
