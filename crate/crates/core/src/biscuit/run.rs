use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biscuit::{compute_validation_losses, group_clients, ClusterAssignment};
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::fed::{aggregate_clusterwise, check_client_ids, run_fedbis_with, sample_clients, train_jobs, FlConfig, RoundLog, Traffic};
use crate::models::{ParamVector, SelectorModel};
use crate::rng::Streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiscuitConfig {
    /// Shared federated settings. `fl.rounds` counts the clustered rounds
    /// that follow warm-up.
    pub fl: FlConfig,
    /// `U`: number of selectors.
    pub selectors: usize,
    /// `R_pre`: warm-up rounds per selector.
    pub warmup_rounds: usize,
    /// `tau`: rounds between regroupings.
    pub regroup_period: usize,
}

impl Default for BiscuitConfig {
    fn default() -> Self {
        Self {
            fl: FlConfig::default(),
            selectors: 3,
            warmup_rounds: 50,
            regroup_period: 50,
        }
    }
}

impl BiscuitConfig {
    pub fn validate(&self, clients: usize) -> Result<()> {
        self.fl.validate(clients)?;
        if self.selectors == 0 {
            return Err(Error::config("selectors", "must be at least 1"));
        }
        if self.regroup_period == 0 {
            return Err(Error::config("regroup_period", "must be at least 1"));
        }
        if clients < self.selectors {
            return Err(Error::InfeasibleBalance {
                clients,
                selectors: self.selectors,
            });
        }
        Ok(())
    }

    /// Rounds spent in warm-up across all selectors.
    pub fn warmup_total(&self) -> usize {
        self.selectors * self.warmup_rounds
    }

    /// Rounds of clustered training after warm-up.
    pub fn clustered_rounds(&self) -> usize {
        self.fl.rounds
    }

    /// Warm-up plus clustered rounds. Round logs are numbered on this scale.
    pub fn total_rounds(&self) -> usize {
        self.warmup_total() + self.fl.rounds
    }

    /// Whether clustered round `r` opens with a regrouping. Regrouping runs
    /// when `tau | r` and a full period of `tau` rounds follows, so a run of
    /// `R` clustered rounds regroups exactly `floor(R / tau)` times.
    pub fn regroups_at(&self, r: usize) -> bool {
        r % self.regroup_period == 0 && r + self.regroup_period <= self.clustered_rounds()
    }
}

/// One regrouping event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    /// Clustered-phase round at which the grouping took effect.
    pub round: usize,
    /// Same round counted over the whole run, warm-up included.
    pub global_round: usize,
    pub assignment: ClusterAssignment,
    /// SHA-256 of the loss matrix (row-major, missing rows as NaN).
    pub loss_digest: String,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct BiscuitOutcome {
    pub selectors: Vec<SelectorModel>,
    pub logs: Vec<RoundLog>,
    pub history: Vec<AssignmentRecord>,
    pub traffic: Traffic,
}

/// Sequential warm-up: selector `u` runs `R_pre` FedBis rounds from `init`.
pub fn warmup(
    config: &BiscuitConfig,
    clients: &[ClientDataset],
    init: &SelectorModel,
    streams: &Streams,
    observer: &mut dyn FnMut(&RoundLog, &[SelectorModel]),
) -> Result<(Vec<SelectorModel>, Vec<RoundLog>, Traffic)> {
    let mut selectors = vec![init.clone(); config.selectors];
    let mut logs = Vec::new();
    let mut traffic = Traffic::default();
    if config.warmup_rounds == 0 {
        return Ok((selectors, logs, traffic));
    }
    let fl = FlConfig {
        rounds: config.warmup_rounds,
        ..config.fl.clone()
    };
    for u in 0..config.selectors {
        let out = {
            let snapshot = selectors.clone();
            let mut forward = |log: &RoundLog, s: &SelectorModel| {
                let mut all = snapshot.clone();
                all[u] = s.clone();
                observer(log, &all);
            };
            run_fedbis_with(
                &fl,
                clients,
                init,
                &streams.child("warmup").child(u),
                &format!("warmup/{u}"),
                u * config.warmup_rounds,
                traffic,
                &mut forward,
            )?
        };
        selectors[u] = out.selector;
        traffic = out.traffic;
        logs.extend(out.logs);
    }
    Ok((selectors, logs, traffic))
}

fn loss_digest(losses: &[Option<Vec<f64>>], selectors: usize) -> String {
    let mut h = Sha256::new();
    for row in losses {
        match row {
            Some(r) => r.iter().for_each(|v| h.update(v.to_le_bytes())),
            None => (0..selectors).for_each(|_| h.update(f64::NAN.to_le_bytes())),
        }
    }
    hex::encode(h.finalize())
}

/// FedBiscuit with the config's seed and no observer.
pub fn run_fedbiscuit(config: &BiscuitConfig, clients: &[ClientDataset], init: &SelectorModel) -> Result<BiscuitOutcome> {
    run_fedbiscuit_with(config, clients, init, &Streams::new(config.fl.seed), &mut |_, _| {})
}

/// Warm-up, then clustered rounds: regroup on schedule, sample `A` clients,
/// route each to its cluster's selector, train, aggregate per selector.
///
/// Clustered rounds draw from the same stream paths as [`run_fedbis`], so a
/// single-selector run matches FedBis with anchored aggregation.
///
/// [`run_fedbis`]: crate::fed::run_fedbis
pub fn run_fedbiscuit_with(
    config: &BiscuitConfig,
    clients: &[ClientDataset],
    init: &SelectorModel,
    streams: &Streams,
    observer: &mut dyn FnMut(&RoundLog, &[SelectorModel]),
) -> Result<BiscuitOutcome> {
    config.validate(clients.len())?;
    check_client_ids(clients)?;
    let total = clients.len();
    let u_count = config.selectors;
    let weights: Vec<f64> = clients.iter().map(|c| c.weight).collect();
    let size = init.params.wire_bytes();

    let (mut selectors, mut logs, mut traffic) = warmup(config, clients, init, streams, observer)?;
    let offset = config.warmup_total();
    let mut history = Vec::new();

    // Without any scheduled regrouping, clients are dealt out round-robin.
    let mut assignment = ClusterAssignment {
        selectors: u_count,
        of_client: (0..total).map(|m| m % u_count).collect(),
    };

    for r in 0..config.clustered_rounds() {
        if config.regroups_at(r) {
            traffic.regroup += size * (total * u_count) as u64;
            let losses = compute_validation_losses(&selectors, clients)?;
            assignment = group_clients(&losses, u_count)?;
            assignment.check_balanced()?;
            let dense: Vec<Vec<f64>> = losses
                .iter()
                .map(|row| row.clone().unwrap_or_else(|| vec![0.0; u_count]))
                .collect();
            history.push(AssignmentRecord {
                round: r,
                global_round: offset + r,
                objective: assignment.objective(&dense),
                loss_digest: loss_digest(&losses, u_count),
                assignment: assignment.clone(),
            });
        }

        let sampled = sample_clients(total, config.fl.clients_per_round, &mut streams.rng(format!("round/{r}/sample")))?;
        traffic.broadcast += size * sampled.len() as u64;
        let routed: Vec<usize> = sampled.iter().map(|m| assignment.of_client[*m]).collect();
        let jobs: Vec<(usize, &SelectorModel)> = sampled
            .iter()
            .zip(&routed)
            .map(|(m, u)| (*m, &selectors[*u]))
            .collect();
        let results = train_jobs(&jobs, clients, &config.fl, streams, r)?;
        let losses = results.iter().map(|(_, o)| o.as_ref().map(|o| o.loss)).collect();

        let mut per_selector: Vec<Vec<(usize, ParamVector)>> = vec![Vec::new(); u_count];
        for ((m, out), u) in results.into_iter().zip(&routed) {
            if let Some(out) = out {
                per_selector[*u].push((m, out.params));
                traffic.upload += size;
            }
        }
        for (u, locals) in per_selector.iter().enumerate() {
            if locals.is_empty() {
                continue;
            }
            let next = aggregate_clusterwise(&selectors[u].params, locals, &weights)?;
            if !next.is_finite() {
                return Err(Error::NonFinite("aggregation"));
            }
            selectors[u].params = next;
        }

        let log = RoundLog {
            round: offset + r,
            phase: "clustered".into(),
            sampled,
            routed,
            local_losses: losses,
            checksums: selectors.iter().map(|s| s.params.checksum()).collect(),
            broadcast_bytes: traffic.broadcast,
            upload_bytes: traffic.upload,
            regroup_bytes: traffic.regroup,
        };
        observer(&log, &selectors);
        logs.push(log);
    }

    Ok(BiscuitOutcome {
        selectors,
        logs,
        history,
        traffic,
    })
}
