//! GRPO simulator.

pub mod experiment;
pub mod grpo;
pub mod metrics;
pub mod policy;
pub mod task;

pub use experiment::{k_sweep, run_experiment, run_seed, ExperimentResult, MeanStd, RunSummary, SeedRun, SimConfig, SweepRow};
pub use grpo::{group_advantages, grpo_step, GroupSample, GrpoConfig};
pub use metrics::{detect_collapse, CollapseEvent, CollapseKind, CollapseThresholds, DiversityMode, StepMetrics};
pub use policy::{softmax, SimPolicy};
pub use task::{generate_task, Candidate, SyntheticTask, TaskQuery, TaskSpec};
