use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::biscuit::{run_fedbiscuit_with, AssignmentRecord, BiscuitConfig};
use crate::checkpoint::{load_policy, load_selector, save_policy, save_selector};
use crate::data::{
    assemble_clients, generate_synthetic_world, load_pairs, partition_by_worker, partition_dirichlet, ClientDataset,
    RawPreferencePair, SymmetrizedExample, World,
};
use crate::error::{Error, Result};
use crate::eval::{
    agreement, best_of_n_rating, cluster_purity, generate_candidates, hacking_curve, random_selection_rating, win_rate,
    write_series_csv, EvalReport, SeriesPoint,
};
use crate::fed::{run_fedbis_with, FlConfig, RoundLog, Traffic};
use crate::models::{PolicyModel, SelectorArch, SelectorModel};
use crate::pipeline::{Algorithm, DataSource, ExperimentConfig, PartitionSpec};
use crate::rlft::{build_generated_dataset, dpo_train, GeneratedPreferenceRecord, SelectorComparator};
use crate::rng::Streams;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Data,
    Selectors,
    GenPrefs,
    Dpo,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Data, Stage::Selectors, Stage::GenPrefs, Stage::Dpo, Stage::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            Stage::Selectors => "selectors",
            Stage::GenPrefs => "gen_prefs",
            Stage::Dpo => "dpo",
            Stage::Eval => "eval",
        }
    }
}

/// File names inside the output directory.
pub mod files {
    pub const CONFIG: &str = "config.resolved.json";
    pub const WORLD: &str = "world.json";
    pub const PARTITION: &str = "partition.json";
    pub const ROUNDS_JSONL: &str = "rounds.jsonl";
    pub const ROUNDS_CSV: &str = "rounds.csv";
    pub const ASSIGNMENTS: &str = "assignments.json";
    pub const TRAINING: &str = "training.json";
    pub const SELECTORS_DIR: &str = "selectors";
    pub const GEN_PREFS: &str = "gen_prefs.jsonl";
    pub const POLICY: &str = "policy.ckpt";
    pub const METRICS: &str = "metrics.json";
    pub const STAGES: &str = "stages.json";
}

/// What one invocation did.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSummary {
    pub executed: Vec<Stage>,
    pub resumed: Vec<Stage>,
    /// Filled when the eval stage ran or was resumed.
    pub metrics: Vec<EvalReport>,
}

/// Client data plus the hidden world when the data is synthetic.
#[derive(Debug, Clone)]
pub struct Federation {
    pub clients: Vec<ClientDataset>,
    pub world: Option<World>,
    pub arch: SelectorArch,
}

/// Selector-training outputs that later stages read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub traffic: Traffic,
    pub total_rounds: usize,
    /// Best-of-n rating of the selector(s) during training.
    pub tracked: Vec<SeriesPoint>,
}

#[derive(Debug, Clone)]
pub struct TrainedSelectors {
    pub selectors: Vec<SelectorModel>,
    pub history: Vec<AssignmentRecord>,
    pub summary: TrainingSummary,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StageLog {
    /// Stage name -> digest of the settings it was produced under.
    completed: BTreeMap<String, String>,
}

/// Runs every stage, resuming where valid artifacts already exist.
pub fn run_pipeline(config: &ExperimentConfig, out: &Path) -> Result<PipelineSummary> {
    Pipeline::new(config.clone(), out)?.run_until(Stage::Eval)
}

pub struct Pipeline {
    config: ExperimentConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out: &Path) -> Result<Self> {
        let config = config.resolved();
        config.validate()?;
        Ok(Self {
            config,
            out: out.to_path_buf(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Runs stages up to and including `last` inside a pool of the
    /// configured size.
    pub fn run_until(&self, last: Stage) -> Result<PipelineSummary> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.threads)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        pool.install(|| self.run_inner(last))
    }

    fn run_inner(&self, last: Stage) -> Result<PipelineSummary> {
        fs::create_dir_all(&self.out)?;
        write_atomic(&self.out.join(files::CONFIG), self.config.to_json().as_bytes())?;
        let mut log = self.read_stage_log();
        let mut summary = PipelineSummary {
            executed: Vec::new(),
            resumed: Vec::new(),
            metrics: Vec::new(),
        };
        let streams = Streams::new(self.config.seed);

        let federation = self.load_federation(&streams)?;
        self.step(&mut log, Stage::Data, &mut summary, || self.write_data(&federation))?;
        if last == Stage::Data {
            return Ok(summary);
        }

        let rlft = federation.world.as_ref().map(|w| RlftInputs::new(&self.config, w, &streams)).transpose()?;

        let mut trained = None;
        self.step(&mut log, Stage::Selectors, &mut summary, || {
            trained = Some(self.train_selectors(&federation, rlft.as_ref(), &streams)?);
            Ok(())
        })?;
        let trained = match trained {
            Some(t) => t,
            None => self.load_selectors()?,
        };
        if last == Stage::Selectors {
            return Ok(summary);
        }

        let mut policy = None;
        if let Some(rlft) = &rlft {
            let mut dataset = None;
            self.step(&mut log, Stage::GenPrefs, &mut summary, || {
                let d = build_generated_dataset(
                    &rlft.theta0,
                    &trained.selectors,
                    &rlft.train_x,
                    self.config.rlft.completions,
                    &streams.child("rlft/generate"),
                )?;
                let mut buf = Vec::new();
                for r in &d {
                    serde_json::to_writer(&mut buf, r)?;
                    buf.push(b'\n');
                }
                write_atomic(&self.out.join(files::GEN_PREFS), &buf)?;
                dataset = Some(d);
                Ok(())
            })?;
            if last == Stage::GenPrefs {
                return Ok(summary);
            }
            let dataset = match dataset {
                Some(d) => d,
                None => read_generated(&self.out.join(files::GEN_PREFS))?,
            };

            self.step(&mut log, Stage::Dpo, &mut summary, || {
                let p = dpo_train(&rlft.theta0, &dataset, &self.config.rlft.dpo, &mut streams.rng("rlft/dpo"))?;
                let tmp = self.out.join(format!("{}.tmp", files::POLICY));
                save_policy(&tmp, &p, Some(self.config.rlft.dpo.steps))?;
                fs::rename(&tmp, self.out.join(files::POLICY))?;
                policy = Some(p);
                Ok(())
            })?;
            if last == Stage::Dpo {
                return Ok(summary);
            }
            if policy.is_none() {
                policy = Some(load_policy(&self.out.join(files::POLICY), &rlft.theta0)?);
            }
        } else if last < Stage::Eval {
            // Ingested data has no vocabulary to generate from.
            return Ok(summary);
        }

        let mut metrics = None;
        self.step(&mut log, Stage::Eval, &mut summary, || {
            let m = self.evaluate(&federation, &trained, rlft.as_ref(), policy.as_ref())?;
            let mut text = serde_json::to_string_pretty(&m)?;
            text.push('\n');
            write_atomic(&self.out.join(files::METRICS), text.as_bytes())?;
            metrics = Some(m);
            Ok(())
        })?;
        summary.metrics = match metrics {
            Some(m) => m,
            None => serde_json::from_slice(&fs::read(self.out.join(files::METRICS))?)?,
        };
        Ok(summary)
    }

    /// Runs `body` unless `stage` already completed under the same settings.
    /// A rerun stage invalidates everything after it.
    fn step(
        &self,
        log: &mut StageLog,
        stage: Stage,
        summary: &mut PipelineSummary,
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let digest = self.stage_digest(stage);
        if log.completed.get(stage.name()) == Some(&digest) && self.artifacts_present(stage) {
            summary.resumed.push(stage);
            return Ok(());
        }
        for later in Stage::ALL.iter().filter(|s| **s >= stage) {
            log.completed.remove(later.name());
        }
        self.write_stage_log(log)?;
        body()?;
        log.completed.insert(stage.name().to_owned(), digest);
        self.write_stage_log(log)?;
        summary.executed.push(stage);
        Ok(())
    }

    fn artifacts_present(&self, stage: Stage) -> bool {
        let needed: Vec<PathBuf> = match stage {
            Stage::Data => vec![],
            Stage::Selectors => {
                let mut v = vec![self.out.join(files::ASSIGNMENTS), self.out.join(files::TRAINING)];
                v.extend((0..self.selector_count()).map(|u| self.selector_path(u)));
                v
            }
            Stage::GenPrefs => vec![self.out.join(files::GEN_PREFS)],
            Stage::Dpo => vec![self.out.join(files::POLICY)],
            Stage::Eval => vec![self.out.join(files::METRICS)],
        };
        needed.iter().all(|p| p.is_file())
    }

    /// Chained digest of the settings each stage depends on.
    fn stage_digest(&self, stage: Stage) -> String {
        let c = &self.config;
        let mut h = Sha256::new();
        for s in Stage::ALL.iter().filter(|s| **s <= stage) {
            let part = match s {
                Stage::Data => serde_json::json!({ "seed": c.seed, "source": c.source }),
                Stage::Selectors => {
                    let tracking = if c.eval.track_every > 0 { Some(&c.eval) } else { None };
                    serde_json::json!({
                        "algorithm": c.algorithm,
                        "selector": c.selector,
                        "training": c.training,
                        "tracking": tracking,
                        "rlft_policy_scale": c.rlft.policy_scale,
                    })
                }
                Stage::GenPrefs => serde_json::json!({
                    "instructions": c.rlft.instructions,
                    "completions": c.rlft.completions,
                    "policy_scale": c.rlft.policy_scale,
                }),
                Stage::Dpo => serde_json::json!({ "dpo": c.rlft.dpo }),
                Stage::Eval => serde_json::json!({ "eval": c.eval }),
            };
            h.update(s.name().as_bytes());
            h.update(serde_json::to_vec(&part).expect("json value serializes"));
        }
        hex::encode(h.finalize())
    }

    fn read_stage_log(&self) -> StageLog {
        fs::read(self.out.join(files::STAGES))
            .ok()
            .and_then(|b| serde_json::from_slice(&b).ok())
            .unwrap_or_default()
    }

    fn write_stage_log(&self, log: &StageLog) -> Result<()> {
        write_atomic(&self.out.join(files::STAGES), &serde_json::to_vec_pretty(log)?)
    }

    fn selector_count(&self) -> usize {
        match self.config.algorithm {
            Algorithm::Fedbiscuit => self.config.training.selectors,
            Algorithm::Fedbis | Algorithm::Centralized => 1,
        }
    }

    fn selector_path(&self, u: usize) -> PathBuf {
        self.out.join(files::SELECTORS_DIR).join(format!("selector-{u}.ckpt"))
    }

    /// Clients for the configured source. Deterministic in the config, so it
    /// is rebuilt on every invocation rather than stored.
    pub fn load_federation(&self, streams: &Streams) -> Result<Federation> {
        let (clients, world, d_x, d_y) = match &self.config.source {
            DataSource::World(params) => {
                let world = generate_synthetic_world(&params.materialize()?)?;
                (world.clients.clone(), Some(world), params.d_x, params.d_y)
            }
            DataSource::Ingest(spec) => {
                let pairs = load_pairs(&spec.path)?;
                let first = pairs
                    .first()
                    .ok_or_else(|| Error::config("source.path", "no comparisons in file"))?;
                let (d_x, d_y) = (first.prompt.len(), first.chosen.len());
                check_pair_dims(&pairs, d_x, d_y)?;
                let groups = partition_groups(&pairs, &spec.partition, streams)?;
                let (clients, _skipped) =
                    assemble_clients(&groups.1, spec.symmetrize, spec.val_fraction, &streams.child("split"));
                if clients.is_empty() {
                    return Err(Error::config("source.partition", "no client has enough comparisons to split"));
                }
                (clients, None, d_x, d_y)
            }
        };
        let arch = SelectorArch::new(d_x, d_y, self.config.selector.hidden.clone());
        arch.validate()?;
        let clients = match self.config.algorithm {
            Algorithm::Centralized => vec![merge_clients(&clients)],
            _ => clients,
        };
        Ok(Federation { clients, world, arch })
    }

    fn write_data(&self, federation: &Federation) -> Result<()> {
        match (&federation.world, &self.config.source) {
            (Some(world), _) => write_atomic(&self.out.join(files::WORLD), &serde_json::to_vec_pretty(&world.spec)?),
            (None, DataSource::Ingest(spec)) => {
                let pairs = load_pairs(&spec.path)?;
                let (names, groups) = partition_groups(&pairs, &spec.partition, &Streams::new(self.config.seed))?;
                let report: Vec<serde_json::Value> = names
                    .iter()
                    .zip(&groups)
                    .map(|(n, g)| serde_json::json!({ "client": n, "pairs": g.len() }))
                    .collect();
                write_atomic(&self.out.join(files::PARTITION), &serde_json::to_vec_pretty(&report)?)
            }
            (None, DataSource::World(_)) => unreachable!("world sources always carry a world"),
        }
    }

    fn train_selectors(
        &self,
        federation: &Federation,
        rlft: Option<&RlftInputs>,
        streams: &Streams,
    ) -> Result<TrainedSelectors> {
        let c = &self.config;
        let init = SelectorModel::random(federation.arch.clone(), &mut streams.rng("selector/init"));
        let every = c.eval.track_every;
        let mut tracked = Vec::new();
        let mut track = |log: &RoundLog, selectors: &[SelectorModel]| -> Result<()> {
            if every == 0 || (log.round + 1) % every != 0 {
                return Ok(());
            }
            if let (Some(world), Some(rlft)) = (&federation.world, rlft) {
                let cmp = SelectorComparator {
                    selectors,
                    vocab: &world.vocab,
                };
                let value = best_of_n_rating(&cmp, &rlft.eval_x, &rlft.candidates, &world.oracle, c.eval.selection)?;
                tracked.push(SeriesPoint {
                    round: log.round + 1,
                    value,
                });
            }
            Ok(())
        };
        let mut failure = None;
        let (selectors, logs, history, traffic, total_rounds) = match c.algorithm {
            Algorithm::Fedbis | Algorithm::Centralized => {
                let fl = FlConfig {
                    clients_per_round: if c.algorithm == Algorithm::Centralized {
                        1
                    } else {
                        c.training.fl.clients_per_round
                    },
                    ..c.training.fl.clone()
                };
                let out = run_fedbis_with(
                    &fl,
                    &federation.clients,
                    &init,
                    streams,
                    "fedbis",
                    0,
                    Traffic::default(),
                    &mut |log, s| {
                        if failure.is_none() {
                            failure = track(log, std::slice::from_ref(s)).err();
                        }
                    },
                )?;
                (vec![out.selector], out.logs, Vec::new(), out.traffic, fl.rounds)
            }
            Algorithm::Fedbiscuit => {
                let config: &BiscuitConfig = &c.training;
                let out = run_fedbiscuit_with(config, &federation.clients, &init, streams, &mut |log, s| {
                    if failure.is_none() {
                        failure = track(log, s).err();
                    }
                })?;
                (out.selectors, out.logs, out.history, out.traffic, config.total_rounds())
            }
        };
        if let Some(e) = failure {
            return Err(e);
        }

        let mut jsonl = Vec::new();
        let mut series = vec![
            (String::from("mean_local_loss"), Vec::new()),
            (String::from("total_bytes"), Vec::new()),
        ];
        for log in &logs {
            serde_json::to_writer(&mut jsonl, log)?;
            jsonl.push(b'\n');
            let losses: Vec<f64> = log.local_losses.iter().flatten().copied().collect();
            if !losses.is_empty() {
                series[0].1.push(SeriesPoint {
                    round: log.round,
                    value: losses.iter().sum::<f64>() / losses.len() as f64,
                });
            }
            series[1].1.push(SeriesPoint {
                round: log.round,
                value: log.total_bytes() as f64,
            });
        }
        series.push(("bon_rating".into(), tracked.clone()));
        let reports: Vec<EvalReport> = series
            .into_iter()
            .map(|(metric, series)| EvalReport {
                metric,
                value: series.last().map_or(0.0, |p| p.value),
                n: series.len().max(1),
                config_digest: c.digest(),
                series,
            })
            .collect();
        let mut csv = Vec::new();
        write_series_csv(&mut csv, &reports)?;

        fs::create_dir_all(self.out.join(files::SELECTORS_DIR))?;
        for (u, s) in selectors.iter().enumerate() {
            let tmp = self.out.join(files::SELECTORS_DIR).join(format!("selector-{u}.ckpt.tmp"));
            save_selector(&tmp, s, Some(total_rounds))?;
            fs::rename(&tmp, self.selector_path(u))?;
        }
        let summary = TrainingSummary {
            traffic,
            total_rounds,
            tracked,
        };
        write_atomic(&self.out.join(files::ROUNDS_JSONL), &jsonl)?;
        write_atomic(&self.out.join(files::ROUNDS_CSV), &csv)?;
        write_atomic(&self.out.join(files::ASSIGNMENTS), &serde_json::to_vec_pretty(&history)?)?;
        write_atomic(&self.out.join(files::TRAINING), &serde_json::to_vec_pretty(&summary)?)?;
        Ok(TrainedSelectors {
            selectors,
            history,
            summary,
        })
    }

    fn load_selectors(&self) -> Result<TrainedSelectors> {
        let selectors = (0..self.selector_count())
            .map(|u| load_selector(&self.selector_path(u)).map(|(s, _)| s))
            .collect::<Result<Vec<_>>>()?;
        let history = serde_json::from_slice(&fs::read(self.out.join(files::ASSIGNMENTS))?)?;
        let summary = serde_json::from_slice(&fs::read(self.out.join(files::TRAINING))?)?;
        Ok(TrainedSelectors {
            selectors,
            history,
            summary,
        })
    }

    fn evaluate(
        &self,
        federation: &Federation,
        trained: &TrainedSelectors,
        rlft: Option<&RlftInputs>,
        policy: Option<&PolicyModel>,
    ) -> Result<Vec<EvalReport>> {
        let c = &self.config;
        let digest = c.digest();
        let report = |metric: &str, value: f64, n: usize| EvalReport {
            metric: metric.to_owned(),
            value,
            n,
            config_digest: digest.clone(),
            series: Vec::new(),
        };
        let mut out = Vec::new();
        let selectors = &trained.selectors;
        match (&federation.world, rlft, policy) {
            (Some(world), Some(rlft), Some(policy)) => {
                out.push(report("agreement", agreement(selectors, &world.test)?, world.test.len()));
                let cmp = SelectorComparator {
                    selectors,
                    vocab: &world.vocab,
                };
                let n = rlft.eval_x.len();
                out.push(report(
                    "bon_rating",
                    best_of_n_rating(&cmp, &rlft.eval_x, &rlft.candidates, &world.oracle, c.eval.selection)?,
                    n,
                ));
                out.push(report(
                    "random_rating",
                    random_selection_rating(&rlft.eval_x, &rlft.candidates, &world.oracle)?,
                    n,
                ));
                let references = rlft
                    .eval_x
                    .iter()
                    .map(|x| rlft.theta0.greedy(x))
                    .collect::<Result<Vec<_>>>()?;
                out.push(report("win_rate", win_rate(policy, &rlft.eval_x, &references, &world.oracle)?, n));
                if let (Some(first), Some(last)) = (trained.history.first(), trained.history.last()) {
                    let m = world.latent.len();
                    out.push(report("purity_first_regroup", cluster_purity(&first.assignment.of_client, &world.latent)?, m));
                    out.push(report("purity_last_regroup", cluster_purity(&last.assignment.of_client, &world.latent)?, m));
                }
            }
            _ => {
                let val: Vec<SymmetrizedExample> = federation.clients.iter().flat_map(|c| c.val.iter().cloned()).collect();
                out.push(report("agreement_val", agreement(selectors, &val)?, val.len()));
            }
        }
        let traffic = trained.summary.traffic;
        out.push(report(
            "total_bytes",
            (traffic.broadcast + traffic.upload + traffic.regroup) as f64,
            trained.summary.total_rounds,
        ));
        out.push(report("regroup_bytes", traffic.regroup as f64, trained.summary.total_rounds));
        let tracked = &trained.summary.tracked;
        if tracked.len() >= 2 {
            let values: Vec<f64> = tracked.iter().map(|p| p.value).collect();
            let h = hacking_curve(&values, c.eval.hacking_margin)?;
            out.push(EvalReport {
                series: tracked.clone(),
                ..report("bon_rating_by_round", h.best_value, tracked.len())
            });
            out.push(report("best_round", tracked[h.best_round].round as f64, tracked.len()));
            out.push(report("hacking_inflection", if h.inflection { 1.0 } else { 0.0 }, tracked.len()));
        }
        Ok(out)
    }
}

/// Starting policy, instruction sets and best-of-n candidates. All derive
/// from the seed, so they are rebuilt rather than stored.
pub struct RlftInputs {
    pub theta0: PolicyModel,
    pub train_x: Vec<Vec<f64>>,
    pub eval_x: Vec<Vec<f64>>,
    pub candidates: Vec<Vec<usize>>,
}

impl RlftInputs {
    pub fn new(config: &ExperimentConfig, world: &World, streams: &Streams) -> Result<Self> {
        let theta0 = PolicyModel::random(
            world.spec.d_x,
            Arc::clone(&world.vocab),
            config.rlft.policy_scale,
            &mut streams.rng("rlft/theta0"),
        );
        let train_x = world.prompts(config.rlft.instructions, &mut streams.rng("rlft/instructions"));
        let eval_x = world.prompts(config.eval.instructions, &mut streams.rng("eval/instructions"));
        let candidates = generate_candidates(&theta0, &eval_x, config.eval.candidates, &streams.child("eval/candidates"))?;
        Ok(Self {
            theta0,
            train_x,
            eval_x,
            candidates,
        })
    }
}

fn check_pair_dims(pairs: &[RawPreferencePair], d_x: usize, d_y: usize) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        if p.prompt.len() != d_x || p.chosen.len() != d_y || p.rejected.len() != d_y {
            return Err(Error::Ingest {
                record: i,
                reason: format!("expected prompt of {d_x} and completions of {d_y} features"),
            });
        }
    }
    Ok(())
}

/// Client names and their comparisons.
fn partition_groups(
    pairs: &[RawPreferencePair],
    spec: &PartitionSpec,
    streams: &Streams,
) -> Result<(Vec<String>, Vec<Vec<RawPreferencePair>>)> {
    let take = |idx: &[usize]| idx.iter().map(|i| pairs[*i].clone()).collect::<Vec<_>>();
    match spec {
        PartitionSpec::Worker => {
            let by_worker = partition_by_worker(pairs)?;
            Ok(by_worker.iter().map(|(w, idx)| (w.clone(), take(idx))).unzip())
        }
        PartitionSpec::Dirichlet { clients, alpha } => {
            let parts = partition_dirichlet(pairs, *clients, *alpha, &mut streams.rng("partition"))?;
            Ok(parts
                .iter()
                .enumerate()
                .map(|(m, idx)| (format!("client-{m}"), take(idx)))
                .unzip())
        }
    }
}

/// The union of every client's data as a single client.
pub fn merge_clients(clients: &[ClientDataset]) -> ClientDataset {
    ClientDataset {
        id: 0,
        train: clients.iter().flat_map(|c| c.train.iter().cloned()).collect(),
        val: clients.iter().flat_map(|c| c.val.iter().cloned()).collect(),
        weight: 1.0,
    }
}

pub fn read_generated(path: &Path) -> Result<Vec<GeneratedPreferenceRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes through a temporary file so a failed write never clobbers the
/// previous version.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
