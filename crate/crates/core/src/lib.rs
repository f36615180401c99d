//! Approximate message passing for compressed sensing, its state-evolution
//! predictions, and Monte Carlo checks that the two agree at finite size.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

pub mod denoiser;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod quadrature;
pub mod recursion;
pub mod rng;
pub mod scalar;
pub mod state_evolution;

pub use denoiser::{Denoiser, DenoiserSchedule, GeneralPair, ParamPolicy};
pub use error::{Error, Result};
pub use harness::{emit_report, parse_config, run_ensemble, EnsembleReport, ExperimentConfig};
pub use model::{NoiseSpec, Prior};
pub use observables::Observable;
pub use quadrature::{Integrator, QuadratureConfig};
pub use recursion::Variant;
pub use rng::{Purpose, StreamKey};
pub use scalar::Real;

pub type DenseMatrixF64 = linalg::DenseMatrix<f64>;
pub type SensingMatrixF64 = model::SensingMatrix<f64>;
pub type ProblemInstanceF64 = model::ProblemInstance<f64>;
pub type PriorF64 = model::Prior<f64>;
pub type DenoiserF64 = denoiser::Denoiser<f64>;
pub type AmpStateF64 = recursion::AmpState<f64>;
pub type GeneralStateF64 = recursion::GeneralState<f64>;
pub type SymmetricStateF64 = recursion::SymmetricState<f64>;
pub type SeTrajectoryF64 = state_evolution::SeTrajectory<f64>;
pub type IntegratorF64 = quadrature::Integrator<f64>;
