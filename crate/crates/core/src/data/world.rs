//! Synthetic preference worlds with latent labeler clusters.
//!
//! Every client belongs to one latent cluster `u`; its comparisons are
//! labeled by the cluster reward `r_u(x, y) = w_u . psi(x, y)`. The latent
//! assignment is returned for evaluation only.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{assemble_clients, symmetrize, ClientDataset, RawPreferencePair, SymmetrizeMode, SymmetrizedExample};
use crate::error::{Error, Result};
use crate::models::policy::{bilinear_score, feature_dim};
use crate::models::Vocabulary;
use crate::rng::{Rng, Streams};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelModel {
    /// The higher-reward completion is always preferred.
    #[default]
    Deterministic,
    /// `P(a > b) = sigmoid((r(a) - r(b)) / temperature)`.
    BradleyTerry { temperature: f64 },
}

/// Fully materialized world description: vocabulary, rewards, sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub vocab: Vocabulary,
    /// One reward weight vector per latent cluster, each of `feature_dim(d_x, d_y)`.
    pub cluster_weights: Vec<Vec<f64>>,
    /// Number of clients in each latent cluster.
    pub cluster_sizes: Vec<usize>,
    pub pairs_per_client: usize,
    /// Clean comparisons per client kept aside for evaluation.
    #[serde(default)]
    pub test_pairs_per_client: usize,
    #[serde(default)]
    pub labels: LabelModel,
    /// Probability of flipping a training label after labeling.
    #[serde(default)]
    pub label_noise: f64,
    pub val_fraction: f64,
    #[serde(default)]
    pub symmetrize: SymmetrizeMode,
    pub seed: u64,
}

/// Compact knobs from which a [`SyntheticWorldSpec`] is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub clusters: usize,
    /// Total clients, dealt to clusters as evenly as possible (earlier
    /// clusters take the remainder).
    pub clients: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub vocab_size: usize,
    pub pairs_per_client: usize,
    pub test_pairs_per_client: usize,
    /// Scale of the completion-only part of each reward.
    pub reward_scale: f64,
    /// Scale of the prompt-completion interaction part.
    pub bilinear_scale: f64,
    /// Weight of a reward component shared by all clusters, in `[0, 1]`.
    pub shared: f64,
    /// Orthogonalize the cluster-specific reward components and give them
    /// a common norm, so clusters are equally far apart.
    pub orthogonal: bool,
    pub labels: LabelModel,
    pub label_noise: f64,
    pub val_fraction: f64,
    pub symmetrize: SymmetrizeMode,
    pub seed: u64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            clusters: 3,
            clients: 30,
            d_x: 3,
            d_y: 4,
            vocab_size: 32,
            pairs_per_client: 60,
            test_pairs_per_client: 20,
            reward_scale: 1.0,
            bilinear_scale: 0.3,
            shared: 0.0,
            orthogonal: false,
            labels: LabelModel::Deterministic,
            label_noise: 0.0,
            val_fraction: 0.1,
            symmetrize: SymmetrizeMode::Both,
            seed: 0,
        }
    }
}

impl WorldParams {
    pub fn materialize(&self) -> Result<SyntheticWorldSpec> {
        if self.clusters == 0 {
            return Err(Error::config("world.clusters", "need at least one latent cluster"));
        }
        if self.clients < self.clusters {
            return Err(Error::config("world.clients", "need at least one client per cluster"));
        }
        if self.vocab_size < 2 {
            return Err(Error::config("world.vocab_size", "need at least two completions"));
        }
        if !(0.0..=1.0).contains(&self.shared) {
            return Err(Error::config("world.shared", "must lie in [0, 1]"));
        }
        let streams = Streams::new(self.seed).child("world-spec");
        let mut rng = streams.rng("vocab");
        let items = (0..self.vocab_size).map(|_| gaussian(self.d_y, &mut rng)).collect();
        let vocab = Vocabulary::new(items)?;

        let mut rng = streams.rng("rewards");
        let dim = feature_dim(self.d_x, self.d_y);
        let draw = |rng: &mut Rng| -> Vec<f64> {
            let mut w = gaussian(dim, rng);
            for (k, v) in w.iter_mut().enumerate() {
                *v *= if k < self.d_y { self.reward_scale } else { self.bilinear_scale };
            }
            w
        };
        let common = draw(&mut rng);
        let mut own: Vec<Vec<f64>> = (0..self.clusters).map(|_| draw(&mut rng)).collect();
        if self.orthogonal {
            if self.clusters > dim {
                return Err(Error::config("world.orthogonal", "more clusters than reward dimensions"));
            }
            let norm = own.iter().map(|w| dot(w, w).sqrt()).sum::<f64>() / self.clusters as f64;
            for u in 0..own.len() {
                for v in 0..u {
                    let (done, rest) = own.split_at_mut(u);
                    let proj = dot(&rest[0], &done[v]) / dot(&done[v], &done[v]);
                    rest[0].iter_mut().zip(&done[v]).for_each(|(a, b)| *a -= proj * b);
                }
                let n = dot(&own[u], &own[u]).sqrt();
                own[u].iter_mut().for_each(|a| *a *= norm / n);
            }
        }
        let cluster_weights = own
            .iter()
            .map(|own| {
                own.iter()
                    .zip(&common)
                    .map(|(o, c)| (1.0 - self.shared) * o + self.shared * c)
                    .collect()
            })
            .collect();

        Ok(SyntheticWorldSpec {
            d_x: self.d_x,
            d_y: self.d_y,
            vocab,
            cluster_weights,
            cluster_sizes: (0..self.clusters)
                .map(|u| self.clients / self.clusters + usize::from(u < self.clients % self.clusters))
                .collect(),
            pairs_per_client: self.pairs_per_client,
            test_pairs_per_client: self.test_pairs_per_client,
            labels: self.labels,
            label_noise: self.label_noise,
            val_fraction: self.val_fraction,
            symmetrize: self.symmetrize,
            seed: self.seed,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Ground-truth reward, standing in for a human or LLM judge.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardOracle {
    pub d_x: usize,
    pub vocab: Arc<Vocabulary>,
    pub weights: Vec<Vec<f64>>,
    /// Population share of each cluster.
    pub cluster_mass: Vec<f64>,
}

impl RewardOracle {
    pub fn new(d_x: usize, vocab: Arc<Vocabulary>, weights: Vec<Vec<f64>>, cluster_mass: Vec<f64>) -> Result<Self> {
        let dim = feature_dim(d_x, vocab.d_y);
        for w in &weights {
            if w.len() != dim {
                return Err(Error::Shape {
                    what: "reward weights",
                    expected: dim,
                    got: w.len(),
                });
            }
            if !w.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("reward weights"));
            }
        }
        if weights.len() != cluster_mass.len() || weights.is_empty() {
            return Err(Error::Invalid("one mass per reward cluster required".into()));
        }
        Ok(Self {
            d_x,
            vocab,
            weights,
            cluster_mass,
        })
    }

    pub fn clusters(&self) -> usize {
        self.weights.len()
    }

    /// `r_u(x, y)` for a completion feature vector; with `cluster = None`,
    /// the population-weighted mean reward.
    pub fn reward(&self, x: &[f64], y: &[f64], cluster: Option<usize>) -> Result<f64> {
        if x.len() != self.d_x {
            return Err(Error::Shape {
                what: "prompt x",
                expected: self.d_x,
                got: x.len(),
            });
        }
        if y.len() != self.vocab.d_y {
            return Err(Error::Shape {
                what: "completion y",
                expected: self.vocab.d_y,
                got: y.len(),
            });
        }
        match cluster {
            Some(u) => {
                let w = self.weights.get(u).ok_or(Error::UnknownCluster {
                    cluster: u,
                    count: self.weights.len(),
                })?;
                Ok(bilinear_score(w, x, y))
            }
            None => Ok(self
                .weights
                .iter()
                .zip(&self.cluster_mass)
                .map(|(w, m)| m * bilinear_score(w, x, y))
                .sum()),
        }
    }

    pub fn reward_id(&self, x: &[f64], y: usize, cluster: Option<usize>) -> Result<f64> {
        let feats = self.vocab.get(y)?;
        self.reward(x, feats, cluster)
    }

    /// Completion with the highest reward (lowest id on ties).
    pub fn best_completion(&self, x: &[f64], cluster: Option<usize>) -> Result<usize> {
        let r = (0..self.vocab.len())
            .map(|y| self.reward_id(x, y, cluster))
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::models::policy::argmax(&r))
    }
}

/// A generated federation plus the hidden ground truth.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: SyntheticWorldSpec,
    pub vocab: Arc<Vocabulary>,
    pub oracle: RewardOracle,
    pub clients: Vec<ClientDataset>,
    /// Raw comparisons per client, in client order.
    pub client_pairs: Vec<Vec<RawPreferencePair>>,
    /// Latent cluster of each client. Evaluation only.
    pub latent: Vec<usize>,
    /// Clean held-out comparisons, symmetrized, pooled over clients.
    pub test: Vec<SymmetrizedExample>,
}

impl World {
    /// Fresh prompts from the world's prompt distribution.
    pub fn prompts(&self, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| gaussian(self.spec.d_x, rng)).collect()
    }
}

/// Draws clients, comparisons and labels from a spec.
pub fn generate_synthetic_world(spec: &SyntheticWorldSpec) -> Result<World> {
    if spec.cluster_weights.is_empty() {
        return Err(Error::config("cluster_weights", "need at least one latent cluster"));
    }
    if spec.cluster_sizes.len() != spec.cluster_weights.len() {
        return Err(Error::config("cluster_sizes", "one size per latent cluster"));
    }
    if spec.vocab.len() < 2 {
        return Err(Error::config("vocab", "need at least two completions"));
    }
    if spec.vocab.d_y != spec.d_y {
        return Err(Error::config("vocab", "item dimension differs from d_y"));
    }
    if !(0.0..=0.5).contains(&spec.label_noise) {
        return Err(Error::config("label_noise", "must lie in [0, 0.5]"));
    }
    if let LabelModel::BradleyTerry { temperature } = spec.labels {
        if !(temperature > 0.0) {
            return Err(Error::config("labels.temperature", "must be positive"));
        }
    }
    let total_clients: usize = spec.cluster_sizes.iter().sum();
    if total_clients == 0 {
        return Err(Error::config("cluster_sizes", "no clients"));
    }
    let vocab = Arc::new(spec.vocab.clone());
    let mass = spec
        .cluster_sizes
        .iter()
        .map(|s| *s as f64 / total_clients as f64)
        .collect();
    let oracle = RewardOracle::new(spec.d_x, Arc::clone(&vocab), spec.cluster_weights.clone(), mass)?;

    let streams = Streams::new(spec.seed).child("world");
    let mut latent: Vec<usize> = spec
        .cluster_sizes
        .iter()
        .enumerate()
        .flat_map(|(u, n)| std::iter::repeat_n(u, *n))
        .collect();
    latent.shuffle(&mut streams.rng("latent"));

    let mut client_pairs = Vec::with_capacity(total_clients);
    let mut test = Vec::new();
    for (m, &u) in latent.iter().enumerate() {
        let mut rng = streams.rng(format!("pairs/{m}"));
        let pairs = (0..spec.pairs_per_client)
            .map(|k| draw_pair(spec, &oracle, m, u, k, true, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        client_pairs.push(pairs);

        let mut rng = streams.rng(format!("test/{m}"));
        let held_out = (0..spec.test_pairs_per_client)
            .map(|k| draw_pair(spec, &oracle, m, u, k, false, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let offset = test.len() / 2;
        test.extend(symmetrize(&held_out, SymmetrizeMode::Both, &mut rng).into_iter().map(|mut e| {
            e.source += offset;
            e
        }));
    }

    let (clients, skipped) = assemble_clients(&client_pairs, spec.symmetrize, spec.val_fraction, &streams.child("split"));
    if !skipped.is_empty() {
        return Err(Error::config(
            "pairs_per_client",
            format!("too few pairs to split {} client(s)", skipped.len()),
        ));
    }

    Ok(World {
        spec: spec.clone(),
        vocab,
        oracle,
        clients,
        client_pairs,
        latent,
        test,
    })
}

fn draw_pair(
    spec: &SyntheticWorldSpec,
    oracle: &RewardOracle,
    client: usize,
    cluster: usize,
    k: usize,
    noisy: bool,
    rng: &mut Rng,
) -> Result<RawPreferencePair> {
    let x = gaussian(spec.d_x, rng);
    let a = rng.random_range(0..spec.vocab.len());
    let mut b = rng.random_range(0..spec.vocab.len() - 1);
    if b >= a {
        b += 1;
    }
    let ra = oracle.reward_id(&x, a, Some(cluster))?;
    let rb = oracle.reward_id(&x, b, Some(cluster))?;
    let mut a_wins = match spec.labels {
        // held-out references are always the clean ordering
        LabelModel::BradleyTerry { temperature } if noisy => {
            let p = 1.0 / (1.0 + (-(ra - rb) / temperature).exp());
            rng.random::<f64>() < p
        }
        _ => ra > rb || (ra == rb && a < b),
    };
    if noisy && spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
        a_wins = !a_wins;
    }
    let (w, l) = if a_wins { (a, b) } else { (b, a) };
    Ok(RawPreferencePair {
        chosen: spec.vocab.items[w].clone(),
        rejected: spec.vocab.items[l].clone(),
        prompt: x,
        worker: Some(format!("w{client}")),
        domain: None,
        prompt_id: format!("c{client}-p{k}"),
    })
}
