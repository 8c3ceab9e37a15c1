//! Numerical convex integration for `div m = 0`, `∂t m + div U = 0` with the
//! pointwise target `½|m|²/ρ = C`.

mod engine;
mod relaxed;
mod wave;

pub use engine::{iterate, iterate_on, Diagnostics, EngineConfig, IterationOutput, SubsolutionField};
pub use relaxed::{
    admissible_segment, admissible_segment_with, candidate_directions, cone_defect, exit_time, relaxed_gap,
    segment_length_bound, symmetric_half_length, ConeDirection, Segment, SubsolutionState, SEGMENT_KAPPA,
};
pub use wave::{Bump1D, CellBox, Envelope, Profile, WavePerturbation};
