//! Throughput/AoI capacity region analysis for slotted wireless networks with
//! unreliable channels.
//!
//! Each device's delivery process is summarised by its mean and temporal
//! variance. On top of that description the crate provides:
//!
//! * [`region`]: the AoI approximation, the policy-invariant system variance,
//!   and outer/inner bound predicates;
//! * [`policies`]: the variance-weighted deficit (VWD) scheduler together with
//!   Max-Weight and uniform random baselines;
//! * [`simulator`]: a reproducible slotted simulator with per-device metrics;
//! * [`solvers`]: optimisation over the inner bound for AoI minimisation,
//!   soft-constrained cost, proportional fairness and admission control;
//! * [`analysis`]: batch-means variance and inverse Gaussian CDF comparison;
//! * [`experiments`]: scenario builders and sweep runners.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision to `f64`.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod model;
pub mod policies;
pub mod region;
pub mod scalar;
pub mod simulator;
pub mod solvers;

pub use error::{Error, Result};
pub use model::{
    validate_config, GapHistogram, NetworkConfig, ProjectedStats, SecondOrderPoint, SimState, TargetPairs,
    TraceMetrics,
};
pub use policies::{PolicyKind, PolicySpec};
pub use region::{CheckOptions, RegionCheckReport};
pub use scalar::Scalar;
pub use simulator::{EnsembleMetrics, SlotResult, TraceOptions};
pub use solvers::{AdmissionResult, Penalty, SolverOptions, SolverResult};

pub type NetworkConfig64 = NetworkConfig<f64>;
pub type SecondOrderPoint64 = SecondOrderPoint<f64>;
pub type TargetPairs64 = TargetPairs<f64>;
pub type TraceMetrics64 = TraceMetrics<f64>;
pub type EnsembleMetrics64 = EnsembleMetrics<f64>;
pub type PolicySpec64 = PolicySpec<f64>;
pub type RegionCheckReport64 = RegionCheckReport<f64>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type SolverResult64 = SolverResult<f64>;
pub type AdmissionResult64 = AdmissionResult<f64>;

pub type NetworkConfig32 = NetworkConfig<f32>;
pub type SecondOrderPoint32 = SecondOrderPoint<f32>;
