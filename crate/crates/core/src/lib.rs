//! Deadline-aware capacity provisioning.
//!
//! Work released per slot may be deferred up to its deadline. The crate
//! computes the offline optimum of the provisioning program, runs the VFW
//! (uniform deadline) and GCP (per-job deadlines) online algorithms, and
//! accounts operating, switching and energy costs.
//!
//! The numeric core is generic over [`Scalar`] (`f64` or `f32`); the aliases
//! below fix it to `f64`.

pub mod cost;
pub mod error;
pub mod estimation;
pub mod gcp;
pub mod harness;
pub mod lp;
pub mod offline;
pub mod prep;
pub mod scalar;
pub mod vfw;
pub mod window;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CostParams = offline::CostParams<f64>;
pub type CapacitySchedule = offline::CapacitySchedule<f64>;
pub type CostReport = cost::CostReport<f64>;
pub type WorkloadCurve = workload::WorkloadCurve<f64>;
pub type DeadlineDecomposedLoad = workload::DeadlineDecomposedLoad<f64>;
pub type EstimationParams = estimation::EstimationParams<f64>;
pub type LpProblem = lp::LpProblem<f64>;
pub type LpSolution = lp::LpSolution<f64>;
