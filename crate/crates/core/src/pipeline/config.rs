use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biscuit::BiscuitConfig;
use crate::data::{SymmetrizeMode, WorldParams};
use crate::error::{Error, Result};
use crate::eval::{SelectionMode, DEFAULT_HACKING_MARGIN};
use crate::fed::{Aggregation, FlConfig};
use crate::models::{OptimizerSpec, SelectorArch};
use crate::rlft::DpoConfig;

/// Where client data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// A synthetic world with latent clusters and an oracle reward.
    World(WorldParams),
    /// Comparisons read from a JSON-lines file.
    Ingest(IngestSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub partition: PartitionSpec,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub symmetrize: SymmetrizeMode,
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSpec {
    /// One client per `worker` field.
    Worker,
    /// Per-domain Dirichlet proportions over a fixed number of clients.
    Dirichlet { clients: usize, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fedbis,
    Fedbiscuit,
    /// One client holding the union of all client data.
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorSettings {
    pub hidden: Vec<usize>,
}

impl Default for SelectorSettings {
    fn default() -> Self {
        Self { hidden: vec![16] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlftSettings {
    /// Server-side instructions used to build the generated dataset.
    pub instructions: usize,
    /// Completions drawn per instruction.
    pub completions: usize,
    /// Standard deviation of the starting policy's parameters.
    pub policy_scale: f64,
    pub dpo: DpoConfig,
}

impl Default for RlftSettings {
    fn default() -> Self {
        Self {
            instructions: 200,
            completions: 4,
            policy_scale: 0.5,
            dpo: DpoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Held-out instructions for win rate and best-of-n.
    pub instructions: usize,
    /// Candidates per instruction for best-of-n.
    pub candidates: usize,
    pub selection: SelectionMode,
    /// Rate the selectors every this many rounds during training (0: off).
    pub track_every: usize,
    pub hacking_margin: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            instructions: 200,
            candidates: 4,
            selection: SelectionMode::Knockout,
            track_every: 0,
            hacking_margin: DEFAULT_HACKING_MARGIN,
        }
    }
}

/// Everything one experiment needs. `seed`, `source` and `algorithm` are
/// required; other sections fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: DataSource,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub selector: SelectorSettings,
    /// Federated settings; the FedBiscuit fields are ignored by the other
    /// algorithms.
    #[serde(default)]
    pub training: BiscuitConfig,
    #[serde(default)]
    pub rlft: RlftSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Worker threads (0: one per core). Never affects results.
    #[serde(default)]
    pub threads: usize,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 2] = ["summarization-like", "qa-like"];

impl ExperimentConfig {
    /// Paper-shaped federations with toy models.
    pub fn preset(name: &str) -> Result<Self> {
        let (clients, fl, regroup_period) = match name {
            "summarization-like" => (53, (5, 30, 500), 50),
            "qa-like" => (300, (10, 10, 200), 100),
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (expected one of {})", PRESETS.join(", ")),
                ))
            }
        };
        let (clients_per_round, local_iters, rounds) = fl;
        Ok(Self {
            seed: 0,
            source: DataSource::World(WorldParams {
                clusters: 3,
                clients,
                pairs_per_client: 100,
                val_fraction: 0.25,
                orthogonal: true,
                ..WorldParams::default()
            }),
            algorithm: Algorithm::Fedbiscuit,
            selector: SelectorSettings::default(),
            training: BiscuitConfig {
                fl: FlConfig {
                    clients_per_round,
                    local_iters,
                    rounds,
                    batch_size: 16,
                    optimizer: OptimizerSpec::adamw(0.01),
                    aggregation: Aggregation::Scaled,
                    seed: 0,
                },
                selectors: 3,
                warmup_rounds: 50,
                regroup_period,
            },
            rlft: RlftSettings {
                dpo: DpoConfig {
                    optimizer: OptimizerSpec::rmsprop(0.01),
                    steps: 300,
                    ..DpoConfig::default()
                },
                ..RlftSettings::default()
            },
            eval: EvalSettings::default(),
            threads: 0,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::config(json_field(&e.to_string()), e.to_string()))?;
        Ok(config.resolved())
    }

    /// Copies the root seed into every nested seed.
    pub fn resolved(mut self) -> Self {
        self.training.fl.seed = self.seed;
        if let DataSource::World(w) = &mut self.source {
            w.seed = self.seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.source, DataSource::World(_)) {
            self.arch().validate()?;
        } else if self.selector.hidden.contains(&0) {
            return Err(Error::config("selector.hidden", "hidden widths must be positive"));
        }
        self.training.fl.optimizer.validate("training.fl.optimizer")?;
        if self.training.selectors == 0 {
            return Err(Error::config("training.selectors", "must be at least 1"));
        }
        if self.training.regroup_period == 0 {
            return Err(Error::config("training.regroup_period", "must be at least 1"));
        }
        if let DataSource::World(w) = &self.source {
            w.materialize()?;
            if self.rlft.completions < 2 {
                return Err(Error::config("rlft.completions", "need at least 2 completions to form a pair"));
            }
            if self.rlft.instructions == 0 {
                return Err(Error::config("rlft.instructions", "must be at least 1"));
            }
            if !(self.rlft.policy_scale >= 0.0 && self.rlft.policy_scale.is_finite()) {
                return Err(Error::config("rlft.policy_scale", "must be finite and non-negative"));
            }
            self.rlft.dpo.validate()?;
            if self.eval.instructions == 0 {
                return Err(Error::config("eval.instructions", "must be at least 1"));
            }
            if self.eval.candidates < 2 {
                return Err(Error::config("eval.candidates", "best-of-n needs at least 2 candidates"));
            }
        }
        if let DataSource::Ingest(spec) = &self.source {
            if let PartitionSpec::Dirichlet { clients, alpha } = spec.partition {
                if clients == 0 {
                    return Err(Error::config("source.partition.clients", "must be at least 1"));
                }
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config("source.partition.alpha", "must be positive and finite"));
                }
            }
        }
        if !(self.eval.hacking_margin >= 0.0) {
            return Err(Error::config("eval.hacking_margin", "must be non-negative"));
        }
        Ok(())
    }

    pub fn arch(&self) -> SelectorArch {
        let (d_x, d_y) = match &self.source {
            DataSource::World(w) => (w.d_x, w.d_y),
            // filled in from the data once it is read
            DataSource::Ingest(_) => (0, 0),
        };
        SelectorArch::new(d_x, d_y, self.selector.hidden.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the config with the thread count cleared.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.threads = 0;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }
}

/// Pulls the field name out of a serde message such as "missing field `algorithm`".
fn json_field(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_owned)
        .unwrap_or_else(|| "config".to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(back, c);
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn missing_field_is_named() {
        let text = r#"{"seed": 1, "source": {"kind": "world"}}"#;
        match ExperimentConfig::from_json(text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "algorithm"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn digest_ignores_threads_and_seed_propagates() {
        let mut c = ExperimentConfig::preset("qa-like").unwrap();
        c.seed = 9;
        let c = c.resolved();
        assert_eq!(c.training.fl.seed, 9);
        let mut d = c.clone();
        d.threads = 7;
        assert_eq!(c.digest(), d.digest());
        d.seed = 10;
        assert_ne!(c.digest(), d.resolved().digest());
    }
}
