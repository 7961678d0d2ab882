//! Finite-difference derivatives of mode profiles, the mode-k Laplacian and
//! the Dirichlet energy.
//!
//! Stencils are built on the uniform reference variable `x` (Fornberg
//! weights) and mapped to `r` by the chain rule. At the origin the profile of
//! mode `k` is continued by parity, `u(−r) = (−1)^k u(r)`, which encodes the
//! regularity conditions `u′(0) = 0` (k = 0) and `u(0) = 0` (k ≥ 1). At `R_max`
//! the stencils become one-sided with one extra point so the order is kept.

use std::collections::HashMap;

use crate::field::{angular_factor, ModeField};
use crate::grid::RadialGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FdOrder {
    Second,
    Fourth,
    Sixth,
}

impl FdOrder {
    fn points(self) -> usize {
        match self {
            FdOrder::Second => 2,
            FdOrder::Fourth => 4,
            FdOrder::Sixth => 6,
        }
    }
}

/// First and second `r`-derivatives at every node.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Fornberg's algorithm: weights of derivatives `0..=m` at `z` on `xs`.
fn fornberg(z: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

/// Derivatives of nodal `values` with parity continuation at the origin.
pub fn derivatives(grid: &RadialGrid, values: &[f64], parity: f64, order: FdOrder) -> Derivatives {
    let n = grid.len();
    let mut first = vec![0.0; n];
    let mut second = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let d = (values[1] - values[0]) / grid.nodes()[1];
            first = vec![d, d];
        }
        return Derivatives { first, second };
    }
    let p = order.points().min(n - 2).max(2) & !1;
    let half = (p / 2) as isize;
    let dx = grid.dx();
    let mut cache: HashMap<isize, (Vec<f64>, Vec<f64>)> = HashMap::new();

    for i in 0..n as isize {
        // window start relative to i
        let (start, len) = if i + half < n as isize {
            (-half, p + 1)
        } else {
            let len = p + 2;
            (n as isize - 1 - (len as isize - 1) - i, len)
        };
        let (w1, w2) = cache.entry(start * 1000 + len as isize).or_insert_with(|| {
            let xs: Vec<f64> = (0..len).map(|s| (start + s as isize) as f64).collect();
            let c = fornberg(0.0, &xs, 2);
            (
                c.iter().map(|row| row[1] / dx).collect(),
                c.iter().map(|row| row[2] / (dx * dx)).collect(),
            )
        });
        let mut ux = 0.0;
        let mut uxx = 0.0;
        for s in 0..len {
            let j = i + start + s as isize;
            let v = if j < 0 { parity * values[(-j) as usize] } else { values[j as usize] };
            ux += w1[s] * v;
            uxx += w2[s] * v;
        }
        let iu = i as usize;
        let jac = grid.jacobian()[iu];
        let ur = ux / jac;
        first[iu] = ur;
        second[iu] = (uxx - grid.jacobian2()[iu] * ur) / (jac * jac);
    }
    Derivatives { first, second }
}

fn parity(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `−[u″ + u′/r − k²u/r²]` with second-order differences.
///
/// At `r = 0` the radial mode uses `−Δu(0) = −2u″(0)` and modes `k ≥ 1`
/// return 0. The last node uses a one-sided closure.
pub fn laplacian_mode(u: &ModeField) -> ModeField {
    laplacian_mode_with(u, FdOrder::Second)
}

pub fn laplacian_mode_with(u: &ModeField, order: FdOrder) -> ModeField {
    let grid = u.grid();
    let k = u.k();
    let d = derivatives(grid, u.values(), parity(k), order);
    let kk = (k * k) as f64;
    let values = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            if i == 0 {
                if k == 0 {
                    -2.0 * d.second[0]
                } else {
                    0.0
                }
            } else {
                -(d.second[i] + d.first[i] / r - kk * u.values()[i] / (r * r))
            }
        })
        .collect();
    ModeField::new(grid.clone(), k, values).expect("finite Laplacian of a finite field")
}

/// `r`-derivative of a mode profile with sixth-order stencils.
pub fn radial_derivative(u: &ModeField) -> Vec<f64> {
    derivatives(u.grid(), u.values(), parity(u.k()), FdOrder::Sixth).first
}

/// `∫_{ℝ²} |∇(u cos kθ)|² dx`, i.e. `2π·c_k ∫ (u′² + k²u²/r²) r dr` with
/// `c_0 = 1`, `c_k = ½` otherwise.
pub fn gradient_energy(u: &ModeField) -> f64 {
    let grid = u.grid();
    let k = u.k();
    let du = radial_derivative(u);
    let kk = (k * k) as f64;
    let mut acc = 0.0;
    for (i, (&r, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
        let ang = if k == 0 {
            0.0
        } else if i == 0 {
            if k == 1 {
                du[0] * du[0]
            } else {
                0.0
            }
        } else {
            let q = u.values()[i] / r;
            kk * q * q
        };
        acc += w * (du[i] * du[i] + ang);
    }
    angular_factor(k) * acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn fornberg_central_second_derivative() {
        let c = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert!((c[0][2] - 1.0).abs() < 1e-14);
        assert!((c[1][2] + 2.0).abs() < 1e-14);
        assert!((c[2][1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn laplacian_of_r_squared() {
        let g = make_grid(200, 5.0, 0.0).unwrap();
        let u = ModeField::from_fn(g, 0, |r| r * r).unwrap();
        let l = laplacian_mode(&u);
        for v in l.values() {
            assert!((v + 4.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn harmonic_mode_has_zero_laplacian() {
        let g = make_grid(400, 3.0, 0.4).unwrap();
        let u = ModeField::from_fn(g, 2, |r| r * r).unwrap();
        let l = laplacian_mode(&u);
        let scale = 9.0;
        for v in &l.values()[1..l.values().len() - 1] {
            assert!(v.abs() < 1e-3 * scale, "{v}");
        }
    }

    #[test]
    fn sixth_order_is_sharper() {
        let g = make_grid(257, 8.0, 0.0).unwrap();
        let u = ModeField::from_fn(g, 0, |r| (-0.5 * r * r).exp()).unwrap();
        let exact = |r: f64| -(r * r - 2.0) * (-0.5 * r * r).exp();
        let err = |o| {
            let l = laplacian_mode_with(&u, o);
            l.grid()
                .nodes()
                .iter()
                .zip(l.values())
                .map(|(&r, v)| (v - exact(r)).abs())
                .fold(0.0f64, f64::max)
        };
        let e2 = err(FdOrder::Second);
        let e6 = err(FdOrder::Sixth);
        assert!(e6 < 1e-3 * e2, "{e2} {e6}");
    }

    #[test]
    fn gradient_energy_of_constant_vanishes() {
        let g = make_grid(128, 6.0, 0.0).unwrap();
        let u = ModeField::from_fn(g, 0, |_| 3.5).unwrap();
        assert!(gradient_energy(&u).abs() < 1e-20);
    }

    #[test]
    fn gradient_energy_gaussian() {
        // ∫|∇e^{−r²/2}|² dx = 2π ∫ r³ e^{−r²} dr = π
        let g = make_grid(1024, 12.0, 0.0).unwrap();
        let u = ModeField::from_fn(g, 0, |r| (-0.5 * r * r).exp()).unwrap();
        let e = gradient_energy(&u);
        assert!((e - std::f64::consts::PI).abs() < 1e-8, "{e}");
    }
}
