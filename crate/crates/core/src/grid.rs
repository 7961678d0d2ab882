//! Radial grids and quadrature for integrals over ℝ² of radial integrands.
//!
//! Nodes are the image of a uniform grid `x_i = i/(N−1)` on `[0, 1]` under the
//! odd map `r(x) = R·x·(a + b x²)` with `a = 1 − s/2`, `b = s/2`, where `s` is
//! the stretch parameter (`s = 0` gives a uniform grid, larger `s` clusters
//! nodes near the origin). The origin is always a node.
//!
//! Weights approximate `∫₀^R f(r) 2πr dr`. They are composite trapezoid
//! weights in the variable `x` with the first Euler-Maclaurin end corrections,
//! so the rule is fourth order for integrands that are smooth and decay at
//! `R`, exact for constants, and every weight is strictly positive.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    r_max: f64,
    stretch: f64,
    /// Uniform spacing of the reference variable `x`.
    dx: f64,
    /// `dr/dx` at each node.
    jac: Vec<f64>,
    /// `d²r/dx²` at each node.
    jac2: Vec<f64>,
}

/// Builds a radial grid with `n` nodes on `[0, r_max]`.
///
/// `stretch` must lie in `[0, 1]`.
pub fn make_grid(n: usize, r_max: f64, stretch: f64) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(n, r_max, stretch).map(Arc::new)
}

impl RadialGrid {
    pub fn new(n: usize, r_max: f64, stretch: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("grid needs at least 2 nodes, got {n}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::Parameter(format!("R_max must be positive, got {r_max}")));
        }
        if !(0.0..=1.0).contains(&stretch) {
            return Err(Error::Parameter(format!("stretch must lie in [0, 1], got {stretch}")));
        }
        let a = 1.0 - 0.5 * stretch;
        let b = 0.5 * stretch;
        let dx = 1.0 / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut jac = Vec::with_capacity(n);
        let mut jac2 = Vec::with_capacity(n);
        for i in 0..n {
            let x = i as f64 * dx;
            nodes.push(r_max * x * (a + b * x * x));
            jac.push(r_max * (a + 3.0 * b * x * x));
            jac2.push(r_max * 6.0 * b * x);
        }
        // Exact endpoints, no rounding drift.
        nodes[0] = 0.0;
        nodes[n - 1] = r_max;

        let mut weights: Vec<f64> = (0..n)
            .map(|i| dx * 2.0 * PI * nodes[i] * jac[i])
            .collect();
        weights[0] *= 0.5;
        weights[n - 1] *= 0.5;
        // Euler-Maclaurin corrections: at the origin the integrand
        // 2π f r r' has x-derivative 2π f(0) r'(0)²; at R the f'(R) part is
        // dropped because every integrand used here decays there.
        let c = dx * dx / 12.0 * 2.0 * PI;
        weights[0] += c * jac[0] * jac[0];
        weights[n - 1] -= c * (jac[n - 1] * jac[n - 1] + r_max * jac2[n - 1]);
        // Next order: (r r')''' is 24R²ab at 0 and R²(108b² + 24b(a + 3b)) at 1;
        // with these the rule is exact for constants on every grid.
        let c4 = dx.powi(4) / 720.0 * 2.0 * PI * r_max * r_max;
        weights[0] -= c4 * 24.0 * a * b;
        weights[n - 1] += c4 * (108.0 * b * b + 24.0 * b * (a + 3.0 * b));

        Ok(Self {
            nodes,
            weights,
            r_max,
            stretch,
            dx,
            jac,
            jac2,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn stretch(&self) -> f64 {
        self.stretch
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn jacobian(&self) -> &[f64] {
        &self.jac
    }

    pub fn jacobian2(&self) -> &[f64] {
        &self.jac2
    }

    /// Local node spacing `r'(x_i)·dx`.
    pub fn local_step(&self, i: usize) -> f64 {
        self.jac[i] * self.dx
    }

    /// Whether two grids describe the same discretization.
    pub fn same_as(&self, other: &RadialGrid) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.r_max == other.r_max
            && self.stretch == other.stretch
    }

    /// `∑ w_i f_i`.
    pub fn quad(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `∑ w_i f(r_i)`.
    pub fn quad_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&r, w)| w * f(r))
            .sum()
    }

    /// Index `i` with `r_i ≤ r < r_{i+1}` (clamped to the last interval).
    pub fn locate(&self, r: f64) -> usize {
        let n = self.nodes.len();
        match self
            .nodes
            .binary_search_by(|probe| probe.partial_cmp(&r).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Four-point Lagrange interpolation of nodal `values` at radius `r`.
    ///
    /// Returns `None` outside `[0, R_max]`. The left end uses the even
    /// reflection `u(−r) = u(r)`, appropriate for radial profiles.
    pub fn interpolate(&self, values: &[f64], r: f64) -> Option<f64> {
        if !(0.0..=self.r_max).contains(&r) {
            return None;
        }
        let n = self.nodes.len();
        if n < 4 {
            let i = self.locate(r);
            let t = (r - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i]);
            return Some(values[i] * (1.0 - t) + values[i + 1] * t);
        }
        let i = self.locate(r) as isize;
        let start = (i - 1).min(n as isize - 4);
        let mut xs = [0.0; 4];
        let mut ys = [0.0; 4];
        for (slot, j) in (start..start + 4).enumerate() {
            if j < 0 {
                xs[slot] = -self.nodes[(-j) as usize];
                ys[slot] = values[(-j) as usize];
            } else {
                xs[slot] = self.nodes[j as usize];
                ys[slot] = values[j as usize];
            }
        }
        let mut acc = 0.0;
        for a in 0..4 {
            let mut l = 1.0;
            for b in 0..4 {
                if a != b {
                    l *= (r - xs[b]) / (xs[a] - xs[b]);
                }
            }
            acc += l * ys[a];
        }
        Some(acc)
    }

    /// Writes the grid as CSV with columns `r,weight`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["r", "weight"])?;
        for (r, w) in self.nodes.iter().zip(&self.weights) {
            wtr.write_record([crate::io::fmt_f64(*r), crate::io::fmt_f64(*w)])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
