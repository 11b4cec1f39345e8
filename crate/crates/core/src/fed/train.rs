//! FedBis rounds: sample, broadcast, train locally for `K` steps, aggregate.

use rand::seq::index;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, SymmetrizedExample};
use crate::error::{Error, Result};
use crate::fed::{aggregate_clusterwise, aggregate_fedbis, aggregate_normalized, Aggregation, FlConfig};
use crate::models::{Optimizer, OptimizerSpec, ParamVector, SelectorModel};
use crate::rng::{Rng, Streams};

/// Uniform size-`sampled` subset of `0..total` without replacement, sorted.
pub fn sample_clients(total: usize, sampled: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if sampled > total {
        return Err(Error::config(
            "clients_per_round",
            format!("cannot sample {sampled} of {total} clients"),
        ));
    }
    let mut ids = index::sample(rng, total, sampled).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: ParamVector,
    /// Mean CE of the returned parameters on the client's train split.
    pub loss: f64,
}

/// `K` optimizer steps on one client's train split, starting from `global`.
///
/// Batches are drawn uniformly with replacement; a client holding no more
/// than `batch_size` examples uses its whole split every step. A client with
/// an empty split yields [`Error::EmptyClient`], which callers treat as a skip.
pub fn local_train(
    global: &SelectorModel,
    client: &ClientDataset,
    local_iters: usize,
    batch_size: usize,
    optimizer: OptimizerSpec,
    rng: &mut Rng,
) -> Result<LocalOutcome> {
    if client.train.is_empty() {
        return Err(Error::EmptyClient(client.id));
    }
    let mut model = global.clone();
    let mut opt = Optimizer::new(optimizer, model.params.dim());
    let mut batch: Vec<SymmetrizedExample> = Vec::with_capacity(batch_size);
    for _ in 0..local_iters {
        let grad = if client.train.len() <= batch_size {
            model.ce_grad(&client.train)?
        } else {
            batch.clear();
            for _ in 0..batch_size {
                batch.push(client.train[rng.random_range(0..client.train.len())].clone());
            }
            model.ce_grad(&batch)?
        };
        opt.step(&mut model.params, &grad)?;
    }
    let loss = model.ce_loss(&client.train)?;
    Ok(LocalOutcome {
        params: model.params,
        loss,
    })
}

/// Trains every `(client, selector)` job of a round, in parallel, returning
/// results in job order. Each job draws from its own stream.
pub(crate) fn train_jobs(
    jobs: &[(usize, &SelectorModel)],
    clients: &[ClientDataset],
    config: &FlConfig,
    streams: &Streams,
    round: usize,
) -> Result<Vec<(usize, Option<LocalOutcome>)>> {
    jobs.par_iter()
        .map(|(m, selector)| {
            let mut rng = streams.rng(format!("round/{round}/client/{m}"));
            match local_train(
                selector,
                &clients[*m],
                config.local_iters,
                config.batch_size,
                config.optimizer,
                &mut rng,
            ) {
                Ok(out) => Ok((*m, Some(out))),
                Err(Error::EmptyClient(_)) => Ok((*m, None)),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Per-round record. Byte counters are cumulative over the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// Round index within the run, warm-up included.
    pub round: usize,
    /// `fedbis`, `warmup/<u>` or `clustered`.
    pub phase: String,
    pub sampled: Vec<usize>,
    /// Selector each sampled client trained, parallel to `sampled`.
    pub routed: Vec<usize>,
    /// Final local train loss per sampled client (`None` when skipped).
    pub local_losses: Vec<Option<f64>>,
    /// SHA-256 of each selector after aggregation.
    pub checksums: Vec<String>,
    pub broadcast_bytes: u64,
    pub upload_bytes: u64,
    pub regroup_bytes: u64,
}

impl RoundLog {
    pub fn total_bytes(&self) -> u64 {
        self.broadcast_bytes + self.upload_bytes + self.regroup_bytes
    }
}

/// Cumulative transfer counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub broadcast: u64,
    pub upload: u64,
    pub regroup: u64,
}

#[derive(Debug, Clone)]
pub struct FedBisOutcome {
    pub selector: SelectorModel,
    pub logs: Vec<RoundLog>,
    pub traffic: Traffic,
}

/// Runs FedBis from `init` with the config's seed.
pub fn run_fedbis(config: &FlConfig, clients: &[ClientDataset], init: &SelectorModel) -> Result<FedBisOutcome> {
    let streams = Streams::new(config.seed);
    run_fedbis_with(config, clients, init, &streams, "fedbis", 0, Traffic::default(), &mut |_, _| {})
}

/// FedBis with explicit random streams, phase tag, round offset and an
/// observer called after every aggregation with the round log and selector.
#[allow(clippy::too_many_arguments)]
pub fn run_fedbis_with(
    config: &FlConfig,
    clients: &[ClientDataset],
    init: &SelectorModel,
    streams: &Streams,
    phase: &str,
    round_offset: usize,
    traffic: Traffic,
    observer: &mut dyn FnMut(&RoundLog, &SelectorModel),
) -> Result<FedBisOutcome> {
    config.validate(clients.len())?;
    check_client_ids(clients)?;
    let weights: Vec<f64> = clients.iter().map(|c| c.weight).collect();
    let total = clients.len();
    let size = init.params.wire_bytes();
    let mut selector = init.clone();
    let mut traffic = traffic;
    let mut logs = Vec::with_capacity(config.rounds);

    for r in 0..config.rounds {
        let sampled = sample_clients(total, config.clients_per_round, &mut streams.rng(format!("round/{r}/sample")))?;
        traffic.broadcast += size * sampled.len() as u64;
        let jobs: Vec<(usize, &SelectorModel)> = sampled.iter().map(|m| (*m, &selector)).collect();
        let results = train_jobs(&jobs, clients, config, streams, r)?;

        let losses = results.iter().map(|(_, o)| o.as_ref().map(|o| o.loss)).collect();
        let locals: Vec<(usize, ParamVector)> = results
            .into_iter()
            .filter_map(|(m, o)| o.map(|o| (m, o.params)))
            .collect();
        traffic.upload += size * locals.len() as u64;

        if !locals.is_empty() {
            let next = match config.aggregation {
                Aggregation::Scaled => aggregate_fedbis(&locals, &weights, total, config.clients_per_round)?,
                Aggregation::Normalized => aggregate_normalized(&locals, &weights)?,
                Aggregation::Anchored => aggregate_clusterwise(&selector.params, &locals, &weights)?,
            };
            if !next.is_finite() {
                return Err(Error::NonFinite("aggregation"));
            }
            selector.params = next;
        }

        let log = RoundLog {
            round: round_offset + r,
            phase: phase.to_owned(),
            routed: vec![0; sampled.len()],
            sampled,
            local_losses: losses,
            checksums: vec![selector.params.checksum()],
            broadcast_bytes: traffic.broadcast,
            upload_bytes: traffic.upload,
            regroup_bytes: traffic.regroup,
        };
        observer(&log, &selector);
        logs.push(log);
    }
    Ok(FedBisOutcome {
        selector,
        logs,
        traffic,
    })
}

pub(crate) fn check_client_ids(clients: &[ClientDataset]) -> Result<()> {
    for (i, c) in clients.iter().enumerate() {
        if c.id != i {
            return Err(Error::Invalid(format!("client at position {i} has id {}", c.id)));
        }
    }
    Ok(())
}
