//! Client partitioners. Both return, per client, indices into the input
//! pair slice; every output is a disjoint cover of the input.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::Gamma;

use crate::data::RawPreferencePair;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// One client per distinct worker id, keyed by worker id.
pub fn partition_by_worker(pairs: &[RawPreferencePair]) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let worker = p.worker.as_ref().ok_or_else(|| Error::Ingest {
            record: i,
            reason: "missing worker id".into(),
        })?;
        out.entry(worker.clone()).or_default().push(i);
    }
    Ok(out)
}

/// Dirichlet(alpha) draw over `clients` slots. A zero-sum draw (every gamma
/// variate underflowed) falls back to uniform.
fn dirichlet(clients: usize, alpha: f64, rng: &mut Rng) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let draws: Vec<f64> = (0..clients).map(|_| rng.sample(gamma)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.into_iter().map(|d| d / total).collect()
    } else {
        vec![1.0 / clients as f64; clients]
    }
}

/// Per domain, draws client proportions from Dirichlet(alpha) and deals that
/// domain's prompts out accordingly. All pairs sharing a `prompt_id` go to
/// the same client. Clients may end up empty.
pub fn partition_dirichlet(
    pairs: &[RawPreferencePair],
    clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    if clients == 0 {
        return Err(Error::config("clients", "must be at least 1"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config("alpha", "must be positive and finite"));
    }
    // domain -> prompt -> pair indices
    let mut domains: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        let domain = p.domain.as_deref().ok_or_else(|| Error::Ingest {
            record: i,
            reason: "missing domain id".into(),
        })?;
        domains
            .entry(domain)
            .or_default()
            .entry(p.prompt_id.as_str())
            .or_default()
            .push(i);
    }

    let mut out = vec![Vec::new(); clients];
    for prompts in domains.values() {
        let mut groups: Vec<&Vec<usize>> = prompts.values().collect();
        groups.shuffle(rng);
        let q = dirichlet(clients, alpha, rng);
        let n = groups.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (k, qk) in q.iter().enumerate() {
            cum += qk;
            let end = if k + 1 == clients {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            for g in &groups[start..end] {
                out[k].extend_from_slice(g);
            }
            start = end;
        }
    }
    for c in &mut out {
        c.sort_unstable();
    }
    Ok(out)
}

/// Mean total-variation distance between each nonempty client's domain
/// histogram and the global one.
pub fn mean_domain_tv(pairs: &[RawPreferencePair], partition: &[Vec<usize>]) -> f64 {
    let mut names: Vec<&str> = pairs.iter().filter_map(|p| p.domain.as_deref()).collect();
    names.sort_unstable();
    names.dedup();
    let index = |d: &str| names.binary_search(&d).expect("known domain");
    let mut global = vec![0.0; names.len()];
    for p in pairs {
        if let Some(d) = p.domain.as_deref() {
            global[index(d)] += 1.0;
        }
    }
    let total: f64 = global.iter().sum();
    global.iter_mut().for_each(|g| *g /= total);

    let mut sum = 0.0;
    let mut count = 0;
    for client in partition.iter().filter(|c| !c.is_empty()) {
        let mut hist = vec![0.0; names.len()];
        for &i in client {
            if let Some(d) = pairs[i].domain.as_deref() {
                hist[index(d)] += 1.0;
            }
        }
        let n: f64 = hist.iter().sum();
        let tv: f64 = hist.iter().zip(&global).map(|(h, g)| (h / n - g).abs()).sum::<f64>() / 2.0;
        sum += tv;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}
