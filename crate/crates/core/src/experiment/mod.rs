//! Desk-scale experiment driver: synthetic data, partitioning,
//! configuration, the round loop, cost accounting and self-checks.

pub mod accounting;
pub mod config;
pub mod dataset;
pub mod partition;
pub mod runner;
pub mod verify;

pub use accounting::{communication_accounting, UplinkCost, UplinkScheme};
pub use config::{DataConfig, ExperimentConfig, Method, RunConfig};
pub use dataset::{simplex_means, synthesize, DatasetSpec};
pub use partition::{dirichlet_proportions, partition, Assignment, PartitionMode};
pub use runner::{generate_knowledge, run_experiment, run_trial, write_outputs, ExperimentResult, TrialOutcome, TrialSetup};
pub use verify::{bloch_ball_optimum, random_round, run_verify, unit_sphere_grid_optimum, Check, RandomRound};
