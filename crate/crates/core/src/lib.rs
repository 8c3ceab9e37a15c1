//! Construction and weak-form certification of non-unique, entropy-conserving
//! weak solutions of two-dimensional ideal compressible MHD.

pub mod assembly;
pub mod convint;
pub mod data;
pub mod eos;
pub mod error;
pub mod fields;
pub mod reduction;
pub mod state;
pub mod verify;

pub use data::{compute_c_constants, Piece, PiecewiseConstantData, Rect, SpaceTimeGrid};
pub use eos::{EnergyMode, EquationOfState, PotentialForm};
pub use error::{Error, Result};
pub use fields::SolutionFields;
pub use assembly::{build_solution, choose_lambda, isentropic_view, AssembledSolution, Budget};
pub use reduction::{lift_2d_to_3d, residual_equivalence_check, Lifted3DFields};
pub use verify::{make_test_suite, verify, Identity, Quadrature, ResidualReport, TestFunction};
