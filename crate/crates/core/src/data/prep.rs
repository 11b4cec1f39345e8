//! Symmetrization, train/validation splitting and client assembly.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::data::{ClientDataset, RawPreferencePair, SymmetrizeMode, SymmetrizedExample};
use crate::error::{Error, Result};
use crate::rng::{Rng, Streams};

/// Removes position effects: each pair `(x, w, l)` becomes `(x, w, l, 0)`
/// and/or `(x, l, w, 1)`.
pub fn symmetrize(pairs: &[RawPreferencePair], mode: SymmetrizeMode, rng: &mut Rng) -> Vec<SymmetrizedExample> {
    let mut out = Vec::with_capacity(match mode {
        SymmetrizeMode::Both => 2 * pairs.len(),
        SymmetrizeMode::Sampled => pairs.len(),
    });
    for (source, p) in pairs.iter().enumerate() {
        let forward = SymmetrizedExample {
            x: p.prompt.clone(),
            y0: p.chosen.clone(),
            y1: p.rejected.clone(),
            label: 0,
            source,
        };
        let reverse = SymmetrizedExample {
            x: p.prompt.clone(),
            y0: p.rejected.clone(),
            y1: p.chosen.clone(),
            label: 1,
            source,
        };
        match mode {
            SymmetrizeMode::Both => {
                out.push(forward);
                out.push(reverse);
            }
            SymmetrizeMode::Sampled => {
                out.push(if rng.random::<bool>() { forward } else { reverse });
            }
        }
    }
    out
}

/// Splits at source-pair granularity: both orderings of a pair always land
/// on the same side. The validation side gets `round(n * val_fraction)`
/// pairs, at least one, and must stay strictly smaller than the train side.
pub fn split_train_val(
    examples: &[SymmetrizedExample],
    val_fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<SymmetrizedExample>, Vec<SymmetrizedExample>)> {
    if !(val_fraction > 0.0 && val_fraction < 0.5) {
        return Err(Error::Split(format!("val_fraction {val_fraction} outside (0, 0.5)")));
    }
    let mut sources: Vec<usize> = examples.iter().map(|e| e.source).collect();
    sources.sort_unstable();
    sources.dedup();
    let n = sources.len();
    if n < 2 {
        return Err(Error::Split(format!("need at least 2 source pairs, got {n}")));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).max(1);
    if n - n_val <= n_val {
        return Err(Error::Split(format!(
            "{n} pairs leave no strict train majority with {n_val} validation pairs"
        )));
    }
    sources.shuffle(rng);
    let mut val_sources = sources[..n_val].to_vec();
    val_sources.sort_unstable();
    let (val, train): (Vec<_>, Vec<_>) = examples
        .iter()
        .cloned()
        .partition(|e| val_sources.binary_search(&e.source).is_ok());
    Ok((train, val))
}

/// Builds the federation from per-client pair groups.
///
/// Groups too small to split are skipped and reported by their position in
/// `groups`; surviving clients are renumbered `0..M` in order. Weights are
/// proportional to pair counts.
pub fn assemble_clients(
    groups: &[Vec<RawPreferencePair>],
    mode: SymmetrizeMode,
    val_fraction: f64,
    streams: &Streams,
) -> (Vec<ClientDataset>, Vec<usize>) {
    let mut clients = Vec::new();
    let mut sizes = Vec::new();
    let mut skipped = Vec::new();
    for (g, pairs) in groups.iter().enumerate() {
        let mut rng = streams.rng(format!("client/{g}"));
        let examples = symmetrize(pairs, mode, &mut rng);
        match split_train_val(&examples, val_fraction, &mut rng) {
            Ok((train, val)) => {
                clients.push(ClientDataset {
                    id: clients.len(),
                    train,
                    val,
                    weight: 0.0,
                });
                sizes.push(pairs.len());
            }
            Err(_) => skipped.push(g),
        }
    }
    let total: usize = sizes.iter().sum();
    for (c, n) in clients.iter_mut().zip(sizes) {
        c.weight = n as f64 / total as f64;
    }
    (clients, skipped)
}
