use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{RewardOracle, SymmetrizedExample};
use crate::error::{Error, Result};
use crate::models::{PolicyModel, SelectorModel};
use crate::rlft::{enumerate_pairs, label_pair_majority, Comparator, GENERATION_TEMPERATURE};
use crate::rng::Streams;

/// Fraction of examples whose (majority-voted) selector label matches the
/// reference label.
pub fn agreement(selectors: &[SelectorModel], examples: &[SymmetrizedExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Invalid("agreement over an empty set".into()));
    }
    let hits = examples
        .par_iter()
        .map(|e| Ok(usize::from(label_pair_majority(selectors, &e.x, &e.y0, &e.y1)?.0 == e.label)))
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / examples.len() as f64)
}

/// Compares completions by oracle reward. `inverted` prefers the worse one.
pub struct OracleComparator<'a> {
    pub oracle: &'a RewardOracle,
    pub cluster: Option<usize>,
    pub inverted: bool,
}

impl Comparator for OracleComparator<'_> {
    fn compare(&self, x: &[f64], a: usize, b: usize) -> Result<u8> {
        let ra = self.oracle.reward_id(x, a, self.cluster)?;
        let rb = self.oracle.reward_id(x, b, self.cluster)?;
        let a_better = if self.inverted { ra < rb } else { ra > rb };
        Ok(if a_better { 0 } else { 1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Running champion meets each candidate in index order.
    #[default]
    Knockout,
    /// Every pair compared once; most wins takes it, lowest index on ties.
    Copeland,
}

/// Position (into `candidates`) of the winning completion.
pub fn best_of_n_select(comparator: &dyn Comparator, x: &[f64], candidates: &[usize], mode: SelectionMode) -> Result<usize> {
    if candidates.len() < 2 {
        return Err(Error::Invalid("best-of-n needs at least 2 candidates".into()));
    }
    match mode {
        SelectionMode::Knockout => {
            let mut champion = 0;
            for k in 1..candidates.len() {
                if comparator.compare(x, candidates[champion], candidates[k])? == 1 {
                    champion = k;
                }
            }
            Ok(champion)
        }
        SelectionMode::Copeland => {
            let mut wins = vec![0usize; candidates.len()];
            for (j, l) in enumerate_pairs(candidates.len())? {
                match comparator.compare(x, candidates[j], candidates[l])? {
                    0 => wins[j] += 1,
                    _ => wins[l] += 1,
                }
            }
            let mut best = 0;
            for k in 1..wins.len() {
                if wins[k] > wins[best] {
                    best = k;
                }
            }
            Ok(best)
        }
    }
}

/// `n` completions per instruction at generation temperature.
pub fn generate_candidates(policy: &PolicyModel, instructions: &[Vec<f64>], n: usize, streams: &Streams) -> Result<Vec<Vec<usize>>> {
    let mut sampler = policy.clone();
    sampler.temperature = GENERATION_TEMPERATURE;
    instructions
        .par_iter()
        .enumerate()
        .map(|(i, x)| sampler.sample(x, n, &mut streams.rng(format!("candidates/{i}"))))
        .collect()
}

/// Mean population oracle reward of the comparator's picks.
pub fn best_of_n_rating(
    comparator: &dyn Comparator,
    instructions: &[Vec<f64>],
    candidates: &[Vec<usize>],
    oracle: &RewardOracle,
    mode: SelectionMode,
) -> Result<f64> {
    check_aligned(instructions, candidates.len())?;
    let mut total = 0.0;
    for (x, cands) in instructions.iter().zip(candidates) {
        let k = best_of_n_select(comparator, x, cands, mode)?;
        total += oracle.reward_id(x, cands[k], None)?;
    }
    Ok(total / instructions.len() as f64)
}

/// Expected rating of a uniformly random pick among the candidates.
pub fn random_selection_rating(instructions: &[Vec<f64>], candidates: &[Vec<usize>], oracle: &RewardOracle) -> Result<f64> {
    check_aligned(instructions, candidates.len())?;
    let mut total = 0.0;
    for (x, cands) in instructions.iter().zip(candidates) {
        let mut s = 0.0;
        for &c in cands {
            s += oracle.reward_id(x, c, None)?;
        }
        total += s / cands.len() as f64;
    }
    Ok(total / instructions.len() as f64)
}

fn check_aligned(instructions: &[Vec<f64>], n: usize) -> Result<()> {
    if instructions.is_empty() {
        return Err(Error::Invalid("no instructions".into()));
    }
    if instructions.len() != n {
        return Err(Error::Invalid(format!(
            "{} instructions but {n} candidate/reference entries",
            instructions.len()
        )));
    }
    Ok(())
}

/// How often the policy's greedy completion beats the reference under the
/// population oracle. Exact ties score one half.
pub fn win_rate(policy: &PolicyModel, instructions: &[Vec<f64>], references: &[usize], oracle: &RewardOracle) -> Result<f64> {
    check_aligned(instructions, references.len())?;
    let mut score = 0.0;
    for (x, &reference) in instructions.iter().zip(references) {
        let ours = policy.greedy(x)?;
        let a = oracle.reward_id(x, ours, None)?;
        let b = oracle.reward_id(x, reference, None)?;
        score += if a > b {
            1.0
        } else if a == b {
            0.5
        } else {
            0.0
        };
    }
    Ok(score / instructions.len() as f64)
}

/// Best one-to-one matching accuracy between produced and latent cluster
/// labels over the same clients.
pub fn cluster_purity(produced: &[usize], latent: &[usize]) -> Result<f64> {
    if produced.len() != latent.len() {
        return Err(Error::Invalid(format!(
            "assignment covers {} clients, latent covers {}",
            produced.len(),
            latent.len()
        )));
    }
    if produced.is_empty() {
        return Err(Error::Invalid("purity over zero clients".into()));
    }
    let rows = produced.iter().max().unwrap() + 1;
    let cols = latent.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; cols]; rows];
    for (p, l) in produced.iter().zip(latent) {
        table[*p][*l] += 1;
    }
    // Make the bitmask run over the smaller side.
    let (table, small) = if cols <= rows {
        (table, cols)
    } else {
        let t: Vec<Vec<usize>> = (0..cols).map(|c| (0..rows).map(|r| table[r][c]).collect()).collect();
        (t, rows)
    };
    if small > 20 {
        return Err(Error::Invalid(format!("{small} clusters is too many to match exactly")));
    }
    // best[mask] = max matched count using a subset `mask` of the small side
    let mut best = vec![0usize; 1 << small];
    for row in &table {
        let prev = best.clone();
        for mask in 0..(1usize << small) {
            for (c, count) in row.iter().enumerate() {
                if mask & (1 << c) == 0 {
                    let next = mask | (1 << c);
                    best[next] = best[next].max(prev[mask] + count);
                }
            }
        }
    }
    let matched = best.into_iter().max().unwrap_or(0);
    Ok(matched as f64 / produced.len() as f64)
}

/// Centered smoothing window for [`hacking_curve`], truncated at the ends.
pub const HACKING_WINDOW: usize = 3;
/// Relative drop from the smoothed peak that counts as an inflection.
pub const DEFAULT_HACKING_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HackingReport {
    /// Position of the raw maximum (first on ties).
    pub best_round: usize,
    pub best_value: f64,
    pub inflection: bool,
    /// Position of the smoothed peak when a decline was flagged.
    pub inflection_round: Option<usize>,
}

/// Finds the peak of a rating series and flags a later decline: after the
/// peak of the smoothed series, some smoothed value must fall below that
/// peak by `margin * |peak|`. Smoothing damps single-round noise.
pub fn hacking_curve(series: &[f64], margin: f64) -> Result<HackingReport> {
    if series.len() < 2 {
        return Err(Error::Invalid(format!("series of length {} is too short", series.len())));
    }
    let mut best_round = 0;
    for (i, v) in series.iter().enumerate() {
        if *v > series[best_round] {
            best_round = i;
        }
    }
    let smoothed: Vec<f64> = (0..series.len())
        .map(|t| {
            let half = HACKING_WINDOW / 2;
            let w = &series[t.saturating_sub(half)..(t + half + 1).min(series.len())];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    let mut peak = 0;
    for (i, v) in smoothed.iter().enumerate() {
        if *v > smoothed[peak] {
            peak = i;
        }
    }
    let threshold = smoothed[peak] - margin * smoothed[peak].abs();
    let inflection = smoothed[peak + 1..].iter().any(|v| *v < threshold);
    Ok(HackingReport {
        best_round,
        best_value: series[best_round],
        inflection,
        inflection_round: inflection.then_some(peak),
    })
}
