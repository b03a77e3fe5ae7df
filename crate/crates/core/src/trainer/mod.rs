//! Synthetic tasks and the simulated-clock training loop.

pub mod delay;
pub mod rng;
pub mod run;
pub mod state;
pub mod task;
pub mod variant;

pub use run::{train_run, PlanEvent, RunConfig, RunOutput, RunRecord, StepsizeAdvisory, RUN_CSV_HEADER};
pub use state::{NvsSnapshot, StepParams, TrainerState};
pub use task::{Task, TaskKind, TaskSpec};
pub use variant::AlgoVariant;
