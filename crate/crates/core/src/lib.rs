//! Continuous-discrete nonlinear state estimation with the hybrid
//! extended/cubature Kalman filter.
//!
//! The time update integrates the extended-Kalman moment equations: the mean
//! with an adaptive nested implicit Runge–Kutta pair under global error
//! control, the covariance with the implicit mid-point rule on the same mesh.
//! The measurement update is the third-degree spherical-radial cubature
//! rule. Both halves are available on dense covariances and on SVD spectral
//! factors `P = Q D Q^T`, the latter keeping the covariance symmetric and
//! positive semi-definite under roundoff.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cubature;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod nirk;
pub mod propagation;
pub mod scalar;
pub mod truth;

pub use error::{FilterError, Result};
pub use filter::{equivalence_probe, run_filter, FilterKind, FilterTrace, FilterVariant, StepStatus};
pub use linalg::{PreArray, SpectralFactors};
pub use model::{ContinuousDiscreteModel, CoordinatedTurn, Cstr, LinearModel, MeasurementCase, ModelStatistics, VanDerPol};
pub use propagation::{Covariance, GaussianBelief, Representation};
pub use scalar::Scalar;
pub use truth::{simulate_truth, SamplingSchedule, TruthRecord};

pub type SpectralFactors64 = SpectralFactors<f64>;
pub type GaussianBelief64 = GaussianBelief<f64>;
pub type TruthRecord64 = TruthRecord<f64>;
pub type FilterTrace64 = FilterTrace<f64>;
pub type FilterVariant64 = FilterVariant<f64>;
pub type CoordinatedTurn64 = CoordinatedTurn<f64>;
pub type Cstr64 = Cstr<f64>;
pub type VanDerPol64 = VanDerPol<f64>;
