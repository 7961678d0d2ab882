//! Seeded families of test functions for property sampling.
//!
//! Each family draws from its own ChaCha stream derived from the corpus seed
//! and a family tag, so a family's members do not depend on which other
//! families were drawn before.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::field::ModeField;
use crate::grid::RadialGrid;

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub field: ModeField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Corpus {
    seed: u64,
}

fn family_rng(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag)
}

/// Ring of radius `c` and width about `s`, written in `r²` so that it is a
/// smooth function on ℝ² (no cone at the origin).
fn ring(r: f64, c: f64, s: f64) -> f64 {
    let sigma = s * (c + s);
    (-(r * r - c * c).powi(2) / (2.0 * sigma * sigma)).exp()
}

impl Corpus {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Nonnegative radial densities of the given mass: sums of one to three
    /// rings times `1 + q r²`.
    pub fn densities(&self, grid: &Arc<RadialGrid>, mass: f64, count: usize) -> Result<Vec<Sample>> {
        let mut rng = family_rng(self.seed, 1);
        (0..count)
            .map(|i| {
                let parts: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(1..=3))
                    .map(|_| {
                        (
                            rng.gen_range(0.2..1.0),
                            rng.gen_range(0.0..2.5),
                            rng.gen_range(0.5..1.5),
                            rng.gen_range(0.0..0.5),
                        )
                    })
                    .collect();
                let raw = ModeField::from_fn(grid.clone(), 0, |r| {
                    parts
                        .iter()
                        .map(|&(amp, c, s, q)| amp * (1.0 + q * r * r) * ring(r, c, s))
                        .sum()
                })?;
                let total = grid.quad(raw.values());
                Ok(Sample {
                    id: format!("density-{i}"),
                    field: raw.map(|v| v * mass / total)?,
                })
            })
            .collect()
    }

    /// Smooth radial potentials decaying well inside the grid, with
    /// sup-norm up to `amplitude`.
    pub fn potentials(&self, grid: &Arc<RadialGrid>, amplitude: f64, count: usize) -> Result<Vec<Sample>> {
        let mut rng = family_rng(self.seed, 2);
        (0..count)
            .map(|i| {
                let a = rng.gen_range(-amplitude..amplitude);
                let field = if i % 2 == 0 {
                    let c = rng.gen_range(0.0..3.0);
                    let s = rng.gen_range(0.6..2.0);
                    ModeField::from_fn(grid.clone(), 0, |r| a * ring(r, c, s))?
                } else {
                    let b = rng.gen_range(-1.0..1.0);
                    let s = rng.gen_range(0.8..2.5);
                    ModeField::from_fn(grid.clone(), 0, |r| {
                        let x = r / s;
                        a * (1.0 + b * x * x) * (-x * x).exp() / (1.0 + b.abs())
                    })?
                };
                Ok(Sample {
                    id: format!("potential-{i}"),
                    field,
                })
            })
            .collect()
    }

    /// Profiles `r^k (a₀ + a₁r + a₂r²) e^{−βr²}` on mode `k`.
    pub fn perturbations(&self, grid: &Arc<RadialGrid>, k: usize, count: usize) -> Result<Vec<Sample>> {
        let mut rng = family_rng(self.seed, 3 + k as u64);
        (0..count)
            .map(|i| {
                let a: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)];
                let beta = rng.gen_range(0.1..0.5);
                let field = ModeField::from_fn(grid.clone(), k, |r| {
                    r.powi(k as i32) * (a[0] + a[1] * r + a[2] * r * r) * (-beta * r * r).exp()
                })?;
                Ok(Sample {
                    id: format!("perturbation-k{k}-{i}"),
                    field,
                })
            })
            .collect()
    }
}
