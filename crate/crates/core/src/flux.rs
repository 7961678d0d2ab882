//! Two-point flux discretization of `f ↦ −∇·(n_M ∇f)` on one angular mode.
//!
//! Face `i+½` between nodes `i` and `i+1` carries the coefficient
//! `a = 2π r_f n_f / (r_{i+1} − r_i)` with `r_f` the midpoint and
//! `n_f = √(n_i n_{i+1})`. The matrix is symmetric, tridiagonal, annihilates
//! constants for `k = 0` and satisfies `uᵀKu ≈ ∫ n_M |∇(u cos kθ)|² / c_k`.
//! For `k ≥ 1` the diagonal gains `k² w_i n_i / r_i²` and node 0 is pinned
//! to zero.

use std::f64::consts::PI;

#[cfg(test)]
use nalgebra::DMatrix;

use crate::grid::RadialGrid;

/// Densities below this are treated as vacuum when dividing by `n_M`.
pub(crate) const DENSITY_FLOOR: f64 = 1e-280;

#[derive(Debug, Clone)]
pub(crate) struct Stiffness {
    k: usize,
    /// `a_{i+½}`, length `N − 1`.
    face: Vec<f64>,
    diag: Vec<f64>,
}

impl Stiffness {
    pub fn new(grid: &RadialGrid, density: &[f64], k: usize) -> Self {
        let r = grid.nodes();
        let n = grid.len();
        let face: Vec<f64> = (0..n - 1)
            .map(|i| {
                let rf = 0.5 * (r[i] + r[i + 1]);
                let nf = (density[i].max(0.0) * density[i + 1].max(0.0)).sqrt();
                2.0 * PI * rf * nf / (r[i + 1] - r[i])
            })
            .collect();
        let mut diag = vec![0.0; n];
        for i in 0..n - 1 {
            diag[i] += face[i];
            diag[i + 1] += face[i];
        }
        if k > 0 {
            let kk = (k * k) as f64;
            let w = grid.weights();
            for i in 1..n {
                diag[i] += kk * w[i] * density[i] / (r[i] * r[i]);
            }
            diag[0] = 0.0;
        }
        Self { k, face, diag }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    fn pinned(&self) -> bool {
        self.k > 0
    }

    /// `K u`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out: Vec<f64> = self.diag.iter().zip(u).map(|(d, x)| d * x).collect();
        for i in 0..n - 1 {
            if self.pinned() && i == 0 {
                continue;
            }
            out[i] -= self.face[i] * u[i + 1];
            out[i + 1] -= self.face[i] * u[i];
        }
        if self.pinned() {
            out[0] = 0.0;
        }
        out
    }

    #[cfg(test)]
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        let start = usize::from(self.pinned());
        for i in start..n - 1 {
            m[(i, i + 1)] = -self.face[i];
            m[(i + 1, i)] = -self.face[i];
        }
        m
    }

    /// Solves `(diag(d) + K) x = b` by the Thomas algorithm. For pinned modes
    /// `x_0 = 0`.
    pub fn solve_shifted(&self, d: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.len();
        let start = usize::from(self.pinned());
        let mut x = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut prev_c = 0.0;
        let mut prev_y = 0.0;
        for i in start..n {
            let lower = if i > start { -self.face[i - 1] } else { 0.0 };
            let upper = if i + 1 < n { -self.face[i] } else { 0.0 };
            let denom = d[i] + self.diag[i] - lower * prev_c;
            c[i] = upper / denom;
            y[i] = (b[i] - lower * prev_y) / denom;
            prev_c = c[i];
            prev_y = y[i];
        }
        for i in (start..n).rev() {
            x[i] = y[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn setup(k: usize) -> (std::sync::Arc<RadialGrid>, Vec<f64>, Stiffness) {
        let g = make_grid(40, 5.0, 0.2).unwrap();
        let n: Vec<f64> = g.nodes().iter().map(|r| (-0.5 * r * r).exp()).collect();
        let s = Stiffness::new(&g, &n, k);
        (g, n, s)
    }

    #[test]
    fn constants_in_kernel_for_radial_mode() {
        let (_, _, s) = setup(0);
        let out = s.apply(&vec![1.0; s.len()]);
        assert!(out.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn dense_matches_apply_and_solver_inverts() {
        for k in 0..3 {
            let (g, _, s) = setup(k);
            let mut u: Vec<f64> = g.nodes().iter().map(|r| r.sin() + 0.3).collect();
            if k > 0 {
                u[0] = 0.0;
            }
            let m = s.dense();
            let mu = &m * nalgebra::DVector::from_column_slice(&u);
            let au = s.apply(&u);
            for i in 0..u.len() {
                assert!((mu[i] - au[i]).abs() < 1e-12);
            }
            let d: Vec<f64> = g.weights().to_vec();
            let b: Vec<f64> = au.iter().zip(&d).zip(&u).map(|((a, w), x)| a + w * x).collect();
            let x = s.solve_shifted(&d, &b);
            for i in 0..u.len() {
                assert!((x[i] - u[i]).abs() < 1e-10, "k={k} i={i}: {} {}", x[i], u[i]);
            }
        }
    }
}
