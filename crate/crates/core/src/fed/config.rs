use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::OptimizerSpec;

/// How the server combines the locally trained selectors of one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `(M/A) * sum_{m in A} p_m phi_m`, verbatim.
    #[default]
    Scaled,
    /// `sum p_m phi_m / sum p_m` over the sampled clients.
    Normalized,
    /// `(1 - sum p_m) phi + sum p_m phi_m`: keeps the unsampled mass on the
    /// current global selector.
    Anchored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlConfig {
    /// `A`: clients sampled per round.
    pub clients_per_round: usize,
    /// `K`: local optimizer steps per round.
    pub local_iters: usize,
    /// `R`: communication rounds.
    pub rounds: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            clients_per_round: 5,
            local_iters: 30,
            rounds: 500,
            batch_size: 16,
            optimizer: OptimizerSpec::adamw(1e-3),
            aggregation: Aggregation::Scaled,
            seed: 0,
        }
    }
}

impl FlConfig {
    /// Checks the config against a federation of `clients` clients.
    pub fn validate(&self, clients: usize) -> Result<()> {
        if clients == 0 {
            return Err(Error::config("clients", "federation is empty"));
        }
        if self.clients_per_round == 0 || self.clients_per_round > clients {
            return Err(Error::config(
                "clients_per_round",
                format!("must lie in [1, {clients}], got {}", self.clients_per_round),
            ));
        }
        if self.local_iters == 0 {
            return Err(Error::config("local_iters", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        self.optimizer.validate("optimizer")
    }
}
