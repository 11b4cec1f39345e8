//! Balanced client grouping from a validation-loss matrix.
//!
//! Clients first pick their lowest-loss selector. Then, repeatedly, the most
//! populated unprocessed cluster is capped at its capacity, keeping its
//! lowest-loss members, and the displaced clients move to their best
//! unprocessed cluster. Capacities: `M mod U` clusters hold `ceil(M/U)`
//! clients, the rest `floor(M/U)`; the larger capacities go to the clusters
//! processed first while any remain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::models::SelectorModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub selectors: usize,
    /// Selector index of each client.
    pub of_client: Vec<usize>,
}

impl ClusterAssignment {
    pub fn clients(&self) -> usize {
        self.of_client.len()
    }

    pub fn members(&self, u: usize) -> Vec<usize> {
        (0..self.of_client.len()).filter(|m| self.of_client[*m] == u).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.selectors];
        for &u in &self.of_client {
            s[u] += 1;
        }
        s
    }

    /// Cover, disjointness (implied by a single index per client) and the
    /// at-most-one size gap.
    pub fn check_balanced(&self) -> Result<()> {
        if self.selectors == 0 {
            return Err(Error::Invalid("assignment over zero selectors".into()));
        }
        if let Some(m) = self.of_client.iter().position(|u| *u >= self.selectors) {
            return Err(Error::Invalid(format!("client {m} routed to missing selector")));
        }
        let sizes = self.sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(Error::Invalid(format!("unbalanced cluster sizes {sizes:?}")));
        }
        Ok(())
    }

    /// `sum_m L[m][U_m]`.
    pub fn objective(&self, losses: &[Vec<f64>]) -> f64 {
        self.of_client.iter().enumerate().map(|(m, u)| losses[m][*u]).sum()
    }
}

/// Lowest-loss selector; ties to the lower index.
fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (u, v) in row.iter().enumerate() {
        if *v < row[best] {
            best = u;
        }
    }
    best
}

/// Best selector among those still open; ties to the lower index.
fn best_open(row: &[f64], open: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (u, v) in row.iter().enumerate() {
        if open[u] && best.is_none_or(|b| *v < row[b]) {
            best = Some(u);
        }
    }
    best.expect("an open cluster remains while clients are displaced")
}

/// Greedy argmin assignment followed by capacity capping.
pub fn greedy_cluster_balanced(losses: &[Vec<f64>], selectors: usize) -> Result<ClusterAssignment> {
    let m_total = losses.len();
    if selectors == 0 || m_total < selectors {
        return Err(Error::InfeasibleBalance {
            clients: m_total,
            selectors,
        });
    }
    for (m, row) in losses.iter().enumerate() {
        if row.len() != selectors {
            return Err(Error::Shape {
                what: "loss row",
                expected: selectors,
                got: row.len(),
            });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite loss for client {m}")));
        }
    }

    let base = m_total / selectors;
    let mut large_left = m_total % selectors;
    let mut of_client: Vec<usize> = losses.iter().map(|row| argmin(row)).collect();
    let mut open = vec![true; selectors];

    for _ in 0..selectors {
        let mut sizes = vec![0usize; selectors];
        for &u in &of_client {
            sizes[u] += 1;
        }
        // most populated open cluster, lowest index on ties
        let mut c = usize::MAX;
        for u in 0..selectors {
            if open[u] && (c == usize::MAX || sizes[u] > sizes[c]) {
                c = u;
            }
        }
        let cap = if large_left > 0 && sizes[c] > base {
            large_left -= 1;
            base + 1
        } else {
            base
        };
        open[c] = false;
        if sizes[c] > cap {
            let mut members: Vec<usize> = (0..m_total).filter(|m| of_client[*m] == c).collect();
            members.sort_by(|a, b| losses[*a][c].total_cmp(&losses[*b][c]).then(a.cmp(b)));
            for &m in &members[cap..] {
                of_client[m] = best_open(&losses[m], &open);
            }
        }
    }

    let out = ClusterAssignment {
        selectors,
        of_client,
    };
    out.check_balanced()?;
    Ok(out)
}

/// Groups clients whose loss rows may be missing (empty validation split).
/// Clients with losses are grouped first; the rest fill the smallest
/// clusters in client order, which keeps the size gap at most one.
pub fn group_clients(losses: &[Option<Vec<f64>>], selectors: usize) -> Result<ClusterAssignment> {
    if selectors == 0 || losses.len() < selectors {
        return Err(Error::InfeasibleBalance {
            clients: losses.len(),
            selectors,
        });
    }
    let valid: Vec<usize> = (0..losses.len()).filter(|m| losses[*m].is_some()).collect();
    let mut of_client = vec![usize::MAX; losses.len()];
    let mut sizes = vec![0usize; selectors];
    if valid.len() >= selectors {
        let rows: Vec<Vec<f64>> = valid.iter().map(|m| losses[*m].clone().unwrap()).collect();
        let inner = greedy_cluster_balanced(&rows, selectors)?;
        for (k, m) in valid.iter().enumerate() {
            of_client[*m] = inner.of_client[k];
            sizes[inner.of_client[k]] += 1;
        }
    }
    for slot in of_client.iter_mut().filter(|u| **u == usize::MAX) {
        let u = (0..selectors).min_by_key(|u| (sizes[*u], *u)).unwrap();
        *slot = u;
        sizes[u] += 1;
    }
    let out = ClusterAssignment {
        selectors,
        of_client,
    };
    out.check_balanced()?;
    Ok(out)
}

/// `L[m][u]`: mean CE of selector `u` on client `m`'s validation split, or
/// `None` for a client without validation data.
pub fn compute_validation_losses(selectors: &[SelectorModel], clients: &[ClientDataset]) -> Result<Vec<Option<Vec<f64>>>> {
    clients
        .par_iter()
        .map(|c| {
            if c.val.is_empty() {
                return Ok(None);
            }
            let row = selectors
                .iter()
                .map(|s| s.ce_loss(&c.val))
                .collect::<Result<Vec<f64>>>()?;
            if row.iter().all(|v| v.is_finite()) {
                Ok(Some(row))
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// For every client outside its argmin cluster: moving it to any strictly
/// better cluster would break the size-gap bound.
pub fn displacement_sound(losses: &[Vec<f64>], assignment: &ClusterAssignment) -> bool {
    let sizes = assignment.sizes();
    assignment.of_client.iter().enumerate().all(|(m, &c)| {
        (0..assignment.selectors)
            .filter(|u| losses[m][*u] < losses[m][c])
            .all(|u| sizes[u] >= sizes[c])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_by_three_sizes() {
        let losses: Vec<Vec<f64>> = (0..7).map(|m| vec![0.1 * m as f64, 1.0, 2.0]).collect();
        let a = greedy_cluster_balanced(&losses, 3).unwrap();
        let mut sizes = a.sizes();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3]);
        // everyone wanted cluster 0; it keeps the three lowest-loss clients
        assert_eq!(a.members(0), vec![0, 1, 2]);
        assert!(displacement_sound(&losses, &a));
    }

    #[test]
    fn balanced_block_diagonal_is_unchanged() {
        let latent = [0, 1, 2, 0, 1, 2, 1, 0, 2];
        let losses: Vec<Vec<f64>> = latent
            .iter()
            .map(|&c| (0..3).map(|u| if u == c { 0.1 } else { 0.9 }).collect())
            .collect();
        let a = greedy_cluster_balanced(&losses, 3).unwrap();
        assert_eq!(a.of_client, latent.to_vec());
    }

    #[test]
    fn too_few_clients_is_infeasible() {
        let losses = vec![vec![0.0, 1.0, 2.0]; 2];
        assert!(matches!(
            greedy_cluster_balanced(&losses, 3),
            Err(Error::InfeasibleBalance { clients: 2, selectors: 3 })
        ));
    }

    #[test]
    fn ties_resolve_to_lowest_selector_then_lowest_client() {
        let losses = vec![vec![0.5, 0.5]; 4];
        let a = greedy_cluster_balanced(&losses, 2).unwrap();
        assert_eq!(a.of_client, vec![0, 0, 1, 1]);
    }

    #[test]
    fn missing_rows_fill_smallest_clusters() {
        let losses = vec![
            Some(vec![0.1, 0.9]),
            None,
            Some(vec![0.2, 0.8]),
            Some(vec![0.3, 0.7]),
            None,
        ];
        let a = group_clients(&losses, 2).unwrap();
        a.check_balanced().unwrap();
        assert_eq!(a.sizes().iter().sum::<usize>(), 5);
        // valid clients: 0 and 2 kept on 0, 3 displaced to 1; then fill
        assert_eq!(a.of_client, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn single_selector_takes_everyone() {
        let losses = vec![vec![0.3]; 5];
        let a = greedy_cluster_balanced(&losses, 1).unwrap();
        assert_eq!(a.of_client, vec![0; 5]);
    }
}
