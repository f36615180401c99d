//! Matrix iterations: AMP and its Onsager-free ablation, the general
//! two-function recursion, full edge message passing, and the symmetric
//! (TAP) iteration.

mod amp;
mod general;
mod message;
mod symmetric;

pub use amp::{amp_step, ist_step, onsager_residual, run_iterations, AmpState, Variant};
pub use general::{general_step, mapping_check, GeneralHistory, GeneralState};
pub use message::{mp_step, mp_vs_amp_deviation, MessageState, DEFAULT_EDGE_CAP};
pub use symmetric::{
    default_initial_vector, sample_symmetric_matrix, symmetric_step, SymmetricState,
};
