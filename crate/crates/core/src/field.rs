//! Profiles attached to an angular Fourier mode.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// The function `x ↦ values(|x|)·cos(kθ)` sampled at the grid nodes.
///
/// Angular integrals use the real convention: `∫₀^{2π} cos²(kθ) dθ` is `2π`
/// for `k = 0` and `π` for `k ≥ 1`, see [`angular_factor`].
#[derive(Debug, Clone)]
pub struct ModeField {
    grid: Arc<RadialGrid>,
    k: usize,
    values: Vec<f64>,
}

/// Ratio `∫cos²(kθ)dθ / 2π`: 1 for the radial mode, ½ otherwise.
pub fn angular_factor(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        0.5
    }
}

impl ModeField {
    pub fn new(grid: Arc<RadialGrid>, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "profile has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, k, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid>, k: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, k, values)
    }

    pub fn zeros(grid: Arc<RadialGrid>, k: usize) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, k, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), self.k, values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn map_r(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| f(r, v))
            .collect();
        self.with_values(values)
    }

    /// `a·self + b·other`, same grid and mode required.
    pub fn axpby(&self, a: f64, other: &ModeField, b: f64) -> Result<Self> {
        self.check_compatible(other)?;
        self.with_values(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
    }

    /// Pointwise product with a radial weight; keeps this field's mode.
    pub fn times(&self, radial: &[f64]) -> Result<Self> {
        if radial.len() != self.values.len() {
            return Err(Error::Parameter("length mismatch".into()));
        }
        self.with_values(self.values.iter().zip(radial).map(|(a, b)| a * b).collect())
    }

    pub fn check_compatible(&self, other: &ModeField) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Parameter("fields live on different grids".into()));
        }
        if self.k != other.k {
            return Err(Error::Mode(format!("mode {} vs mode {}", self.k, other.k)));
        }
        Ok(())
    }

    /// `∫_{ℝ²} field dx` for a radial field.
    pub fn integrate(&self) -> Result<f64> {
        if self.k != 0 {
            return Err(Error::Mode(format!(
                "mode k = {} has zero angular average; only radial fields can be integrated",
                self.k
            )));
        }
        Ok(self.grid.quad(&self.values))
    }

    /// `∫_{ℝ²} (u cos kθ)(v cos kθ) ρ dx` for a radial weight `ρ`.
    pub fn weighted_inner(&self, other: &ModeField, rho: &[f64]) -> f64 {
        let c = angular_factor(self.k);
        c * self
            .grid
            .weights()
            .iter()
            .zip(&self.values)
            .zip(&other.values)
            .zip(rho)
            .map(|(((w, a), b), p)| w * a * b * p)
            .sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
