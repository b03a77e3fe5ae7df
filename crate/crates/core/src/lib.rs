//! Delayed-aggregation, error-feedback Top-k distributed SGD.
//!
//! * [`compressor`]: Top-k sparsification with per-worker error feedback.
//! * [`timing`]: exact compute/transmit/arrive recurrence and its closed form.
//! * [`planner`]: convergence factors and the DeCo `(tau, delta)` search.
//! * [`network`]: bandwidth/latency traces (CSV, generator, step-hold lookup).
//! * [`trainer`]: synthetic tasks and the simulated-clock training loop.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix the
//! two instantiations used in practice.

pub mod compressor;
pub mod error;
pub mod network;
pub mod planner;
pub mod scalar;
pub mod timing;
pub mod trainer;
pub mod vector;

pub use compressor::{ef_compress, top_k, CompressionRatio, ErrorState, SparseUpdate};
pub use error::{Error, Result};
pub use network::{NetworkSample, NetworkTrace};
pub use planner::{deco_plan, ConvergenceRegime, Plan};
pub use scalar::Scalar;
pub use timing::{simulate_pipeline, t_avg_closed_form, PipelineSchedule, TimingParams};
pub use trainer::{train_run, AlgoVariant, RunConfig, Task, TaskSpec};
pub use vector::Vector;

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type Vector64 = Vector<f64>;
pub type VectorExact = Vector<Exact>;
pub type Ratio64 = CompressionRatio<f64>;
pub type RatioExact = CompressionRatio<Exact>;
pub type TimingParams64 = TimingParams<f64>;
pub type TimingParamsExact = TimingParams<Exact>;
pub type Plan64 = Plan<f64>;
pub type PlanExact = Plan<Exact>;
