//! Multi-selector training over balanced client clusters (FedBiscuit).

mod grouping;
mod run;

pub use grouping::{compute_validation_losses, displacement_sound, greedy_cluster_balanced, group_clients, ClusterAssignment};
pub use run::{run_fedbiscuit, run_fedbiscuit_with, warmup, AssignmentRecord, BiscuitConfig, BiscuitOutcome};
