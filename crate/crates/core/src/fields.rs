use serde::{Deserialize, Serialize};

use crate::data::SpaceTimeGrid;
use crate::error::{Error, Result};

/// `(ρ, p, u, b)` sampled at the cell centres of a space-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFields {
    pub grid: SpaceTimeGrid,
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub u: Vec<[f64; 2]>,
    pub b: Vec<f64>,
}

impl SolutionFields {
    pub fn new(grid: SpaceTimeGrid, rho: Vec<f64>, p: Vec<f64>, u: Vec<[f64; 2]>, b: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if rho.len() != n || p.len() != n || u.len() != n || b.len() != n {
            return Err(Error::GridMismatch(format!(
                "field lengths ({}, {}, {}, {}) do not match grid size {n}",
                rho.len(),
                p.len(),
                u.len(),
                b.len()
            )));
        }
        if let Some(i) = rho.iter().zip(&p).position(|(r, q)| !(*r > 0.0) || !(*q > 0.0)) {
            return Err(Error::InvalidData(format!(
                "density and pressure must be positive (cell {i}: ρ = {}, p = {})",
                rho[i], p[i]
            )));
        }
        Ok(Self { grid, rho, p, u, b })
    }

    /// Samples closed-form fields at every cell centre.
    pub fn from_fn<F>(grid: SpaceTimeGrid, f: F) -> Result<Self>
    where
        F: Fn(f64, f64, f64) -> (f64, f64, [f64; 2], f64),
    {
        let n = grid.len();
        let (mut rho, mut p, mut u, mut b) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for it in 0..grid.nt {
            for ix in 0..grid.nx {
                for iy in 0..grid.ny {
                    let [t, x, y] = grid.center(it, ix, iy);
                    let (r, q, v, bb) = f(t, x, y);
                    rho.push(r);
                    p.push(q);
                    u.push(v);
                    b.push(bb);
                }
            }
        }
        Self::new(grid, rho, p, u, b)
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(&self.p).chain(&self.b).all(|v| v.is_finite())
            && self.u.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }

    /// Time-slice view of a scalar at `it`.
    pub fn slice<'a>(&self, values: &'a [f64], it: usize) -> &'a [f64] {
        let n = self.grid.nx * self.grid.ny;
        &values[it * n..(it + 1) * n]
    }
}
