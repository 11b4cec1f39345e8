//! Single-selector federated training (FedBis).

mod aggregate;
mod config;
mod train;

pub use aggregate::{aggregate_clusterwise, aggregate_fedbis, aggregate_normalized};
pub use config::{Aggregation, FlConfig};
pub use train::{local_train, run_fedbis, run_fedbis_with, sample_clients, FedBisOutcome, LocalOutcome, RoundLog, Traffic};

pub(crate) use train::{check_client_ids, train_jobs};
