//! Preference data: representation, symmetrization, partitioning and the
//! synthetic world with its oracle reward.

mod io;
mod partition;
mod prep;
mod types;
mod world;

pub use io::{load_pairs, read_pairs_jsonl, write_pairs_jsonl};
pub use partition::{mean_domain_tv, partition_by_worker, partition_dirichlet};
pub use prep::{assemble_clients, split_train_val, symmetrize};
pub use types::{ClientDataset, RawPreferencePair, SymmetrizeMode, SymmetrizedExample};
pub use world::{generate_synthetic_world, LabelModel, RewardOracle, SyntheticWorldSpec, World, WorldParams};
