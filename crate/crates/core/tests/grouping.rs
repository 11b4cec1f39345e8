//! Balanced client grouping: invariants under random loss matrices and a
//! brute-force optimum for small federations.

use fedselect::biscuit::{displacement_sound, greedy_cluster_balanced, group_clients, ClusterAssignment};
use proptest::prelude::*;
use proptest::strategy::ValueTree;

fn losses_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..=5).prop_flat_map(|u| {
        (u..=50).prop_flat_map(move |m| (prop::collection::vec(prop::collection::vec(0.0f64..5.0, u), m), Just(u)))
    })
}

fn check_invariants(losses: &[Vec<f64>], a: &ClusterAssignment, u: usize) {
    assert_eq!(a.selectors, u);
    assert_eq!(a.of_client.len(), losses.len());
    assert!(a.of_client.iter().all(|c| *c < u));
    // members() partitions the clients
    let mut seen = vec![0usize; losses.len()];
    for c in 0..u {
        for m in a.members(c) {
            seen[m] += 1;
        }
    }
    assert!(seen.iter().all(|s| *s == 1));
    let sizes = a.sizes();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
}

proptest! {
    #[test]
    fn greedy_assignment_is_balanced_and_sound((losses, u) in losses_strategy()) {
        let a = greedy_cluster_balanced(&losses, u).unwrap();
        check_invariants(&losses, &a, u);
        prop_assert!(displacement_sound(&losses, &a));
        prop_assert_eq!(greedy_cluster_balanced(&losses, u).unwrap(), a);
    }

    #[test]
    fn missing_rows_keep_balance((losses, u) in losses_strategy(), drop in prop::collection::vec(any::<bool>(), 50)) {
        let rows: Vec<Option<Vec<f64>>> = losses
            .iter()
            .zip(&drop)
            .map(|(r, d)| if *d { None } else { Some(r.clone()) })
            .collect();
        let a = group_clients(&rows, u).unwrap();
        check_invariants(&losses, &a, u);
    }
}

/// Every balanced assignment of `m` clients to `u` clusters.
fn balanced_assignments(m: usize, u: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for code in 0..u.pow(m as u32) {
        let mut c = code;
        let mut a = Vec::with_capacity(m);
        for _ in 0..m {
            a.push(c % u);
            c /= u;
        }
        let mut sizes = vec![0usize; u];
        for x in &a {
            sizes[*x] += 1;
        }
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1 {
            out.push(a);
        }
    }
    out
}

fn objective(losses: &[Vec<f64>], a: &[usize]) -> f64 {
    a.iter().enumerate().map(|(m, c)| losses[m][*c]).sum()
}

#[test]
fn six_by_two_against_exhaustive_search() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = prop::collection::vec(prop::collection::vec(0.0f64..1.0, 2), 6);
    let all = balanced_assignments(6, 2);
    let (mut optimal, mut total) = (0, 0);
    for _ in 0..500 {
        let losses = strategy.new_tree(&mut runner).unwrap().current();
        let a = greedy_cluster_balanced(&losses, 2).unwrap();
        let best = all.iter().map(|b| objective(&losses, b)).fold(f64::INFINITY, f64::min);
        let got = a.objective(&losses);
        assert!(got >= best - 1e-12);
        total += 1;
        if got <= best + 1e-12 {
            optimal += 1;
            assert!(all.iter().any(|b| *b == a.of_client && (objective(&losses, b) - best).abs() <= 1e-12));
        } else {
            assert!(a.check_balanced().is_ok());
            assert!(displacement_sound(&losses, &a));
        }
    }
    println!("greedy optimal on {optimal}/{total} random 6x2 matrices");
    assert!(optimal > 0);
}
