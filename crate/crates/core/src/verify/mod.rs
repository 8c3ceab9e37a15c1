//! Quadrature of the weak-form identities against suites of smooth
//! compactly supported test functions.

mod quadrature;
mod report;
mod residual;
mod testfn;

pub use quadrature::{gauss_legendre, Quadrature};
pub use report::{distinctness, verify, IdentityResult, ResidualReport, Tolerances, DEFAULT_TOLERANCE};
pub use residual::{residual, residuals, Closure, Identity};
pub use testfn::{make_test_suite, poly_bump, TestFunction, TestKind};

use crate::convint::SubsolutionField;
use crate::data::SpaceTimeGrid;
use crate::fields::SolutionFields;

/// Pointwise values entering the integrands. `relaxed` holds `(U₁₁, U₁₂)` of
/// a subsolution and is zero for sampled solution fields.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointState {
    pub rho: f64,
    pub p: f64,
    pub u: [f64; 2],
    pub b: f64,
    pub relaxed: [f64; 2],
}

/// Anything that can be sampled on `[0, T] × Ω` together with its initial data.
pub trait FieldSource: Sync {
    fn grid(&self) -> &SpaceTimeGrid;

    /// State at `p = (t, x, y)` with `t ∈ [0, T]`, `(x, y) ∈ Ω`.
    fn sample(&self, p: [f64; 3]) -> PointState;

    /// Initial data at `(x, y) ∈ Ω`.
    fn initial(&self, x: f64, y: f64) -> PointState;

    /// Set when the fields are known not to satisfy the quadratic identities.
    fn subsolution_only(&self) -> bool {
        false
    }
}

/// Cell of `grid` containing `p`, with points on the far faces assigned to
/// the last cell.
pub(crate) fn locate(grid: &SpaceTimeGrid, p: [f64; 3]) -> (usize, usize, usize) {
    let o = grid.origin();
    let h = grid.spacing();
    let n = [grid.nt, grid.nx, grid.ny];
    let i = [0, 1, 2].map(|a| ((p[a] - o[a]) / h[a]).floor().clamp(0.0, (n[a] - 1) as f64) as usize);
    (i[0], i[1], i[2])
}

/// Cell values held constant over each cell; the initial data are the first
/// time slice.
impl FieldSource for SolutionFields {
    fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    fn sample(&self, p: [f64; 3]) -> PointState {
        let (it, ix, iy) = locate(&self.grid, p);
        let i = self.grid.index(it, ix, iy);
        PointState { rho: self.rho[i], p: self.p[i], u: self.u[i], b: self.b[i], relaxed: [0.0; 2] }
    }

    fn initial(&self, x: f64, y: f64) -> PointState {
        self.sample([0.0, x, y])
    }
}

/// The subsolution seen as a momentum field of density `ρ` with no pressure
/// or magnetic field; `relaxed` carries its `U`.
impl FieldSource for SubsolutionField {
    fn grid(&self) -> &SpaceTimeGrid {
        SubsolutionField::grid(self)
    }

    fn sample(&self, p: [f64; 3]) -> PointState {
        let z = self.evaluate(p);
        let rho = self.rho();
        PointState { rho, p: 1.0, u: [z.m[0] / rho, z.m[1] / rho], b: 0.0, relaxed: z.u }
    }

    fn initial(&self, x: f64, y: f64) -> PointState {
        self.sample([0.0, x, y])
    }

    fn subsolution_only(&self) -> bool {
        true
    }
}
