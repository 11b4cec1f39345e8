//! Selector and policy models against independent oracles: straight-line
//! forward passes, scalar loss recomputations and finite differences.

mod common;

use std::sync::Arc;

use common::{gaussian, numeric_grad, random_examples, worst_rel_err, FD_REL_TOL};
use fedselect::data::WorldParams;
use fedselect::models::{ParamVector, PolicyModel, SelectorArch, SelectorModel, Vocabulary};
use fedselect::rlft::{dpo_batch_loss, dpo_grad, GeneratedPreferenceRecord};
use fedselect::rng::Streams;
use rand::Rng as _;

/// The 2-4-2 network (`d_x = 0`, `d_y = 1`, one hidden layer of 4) with
/// every parameter drawn from the seed-42 stream.
fn seed42_model() -> SelectorModel {
    let arch = SelectorArch::new(0, 1, vec![4]);
    assert_eq!(arch.param_dim(), 22);
    let values = gaussian(22, &mut Streams::new(42).rng("selector"));
    SelectorModel::with_params(arch, ParamVector::new(values)).unwrap()
}

/// Written out by hand: `W1` is 4x2 row-major at 0..8, `b1` at 8..12, `W2`
/// is 2x4 at 12..20 and `b2` at 20..22.
fn straight_line_forward(p: &[f64], y0: f64, y1: f64) -> (f64, f64) {
    let h0 = (p[0] * y0 + p[1] * y1 + p[8]).tanh();
    let h1 = (p[2] * y0 + p[3] * y1 + p[9]).tanh();
    let h2 = (p[4] * y0 + p[5] * y1 + p[10]).tanh();
    let h3 = (p[6] * y0 + p[7] * y1 + p[11]).tanh();
    let l0 = p[12] * h0 + p[13] * h1 + p[14] * h2 + p[15] * h3 + p[20];
    let l1 = p[16] * h0 + p[17] * h1 + p[18] * h2 + p[19] * h3 + p[21];
    (l0, l1)
}

#[test]
fn seed42_forward_matches_straight_line_oracle() {
    let model = seed42_model();
    let p = model.params.as_slice();
    for (y0, y1) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 0.0), (0.0, 1.0)] {
        let got = model.forward(&[], &[y0], &[y1]).unwrap();
        let want = straight_line_forward(p, y0, y1);
        assert!((got.0 - want.0).abs() <= 1e-14 * want.0.abs().max(1.0), "{got:?} vs {want:?}");
        assert!((got.1 - want.1).abs() <= 1e-14 * want.1.abs().max(1.0), "{got:?} vs {want:?}");
    }
    // forward determinism: identical inputs give bit-identical logits
    let a = model.forward(&[], &[0.3], &[-0.7]).unwrap();
    let b = model.forward(&[], &[0.3], &[-0.7]).unwrap();
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1.to_bits(), b.1.to_bits());
}

#[test]
fn seed42_ce_loss_matches_scalar_recomputation() {
    let model = seed42_model();
    let p = model.params.as_slice();
    let batch = random_examples(&model.arch, 4, &mut Streams::new(42).rng("batch"));
    let mut total = 0.0;
    for ex in &batch {
        let (l0, l1) = straight_line_forward(p, ex.y0[0], ex.y1[0]);
        let (own, other) = if ex.label == 0 { (l0, l1) } else { (l1, l0) };
        // -log softmax(own) = log(1 + exp(other - own))
        total += (other - own).exp().ln_1p();
    }
    let want = total / 4.0;
    let got = model.ce_loss(&batch).unwrap();
    assert!((got - want).abs() <= 1e-14, "{got} vs {want}");
}

#[test]
fn selector_gradient_matches_finite_differences() {
    let archs = [
        SelectorArch::new(0, 1, vec![4]),
        SelectorArch::new(3, 4, vec![]),
        SelectorArch::new(3, 4, vec![16]),
        SelectorArch::new(2, 2, vec![5, 3]),
    ];
    let streams = Streams::new(2024).child("selector-fd");
    let mut worst: f64 = 0.0;
    for draw in 0..24 {
        let mut rng = streams.rng(draw);
        let arch = archs[draw % archs.len()].clone();
        let scale = 0.3 + rng.random::<f64>();
        let values: Vec<f64> = gaussian(arch.param_dim(), &mut rng).into_iter().map(|v| v * scale).collect();
        let model = SelectorModel::with_params(arch.clone(), ParamVector::new(values.clone())).unwrap();
        let batch = random_examples(&arch, 1 + draw % 8, &mut rng);
        let analytic = model.ce_grad(&batch).unwrap();
        let numeric = numeric_grad(&values, |p| {
            SelectorModel::with_params(arch.clone(), ParamVector::new(p.to_vec()))
                .unwrap()
                .ce_loss(&batch)
                .unwrap()
        });
        let err = worst_rel_err(analytic.as_slice(), &numeric);
        assert!(err <= FD_REL_TOL, "draw {draw}: relative error {err:e}");
        worst = worst.max(err);
    }
    println!("selector gradient: worst relative error {worst:e} over 24 draws");
}

fn random_vocab(size: usize, d_y: usize, rng: &mut fedselect::rng::Rng) -> Arc<Vocabulary> {
    Arc::new(Vocabulary::new((0..size).map(|_| gaussian(d_y, rng)).collect()).unwrap())
}

#[test]
fn dpo_gradient_matches_finite_differences() {
    let streams = Streams::new(99).child("dpo-fd");
    let mut worst: f64 = 0.0;
    for draw in 0..24 {
        let mut rng = streams.rng(draw);
        let d_x = 1 + draw % 3;
        let vocab = random_vocab(6 + draw % 5, 2 + draw % 3, &mut rng);
        let reference = PolicyModel::random(d_x, Arc::clone(&vocab), 0.7, &mut rng);
        let policy = PolicyModel::random(d_x, Arc::clone(&vocab), 0.7, &mut rng);
        let beta = 0.05 + rng.random::<f64>();
        let batch: Vec<GeneratedPreferenceRecord> = (0..1 + draw % 6)
            .map(|i| {
                let y0 = rng.random_range(0..vocab.len());
                let y1 = rng.random_range(0..vocab.len());
                GeneratedPreferenceRecord {
                    instruction: i,
                    prompt: gaussian(d_x, &mut rng),
                    y0,
                    y1,
                    label: rng.random_range(0..2u8),
                    votes: vec![],
                }
            })
            .collect();
        let analytic = dpo_grad(&policy, &reference, &batch, beta).unwrap();
        let numeric = numeric_grad(policy.params.as_slice(), |p| {
            let theta = policy.with_params(ParamVector::new(p.to_vec())).unwrap();
            dpo_batch_loss(&theta, &reference, &batch, beta).unwrap()
        });
        let err = worst_rel_err(analytic.as_slice(), &numeric);
        assert!(err <= FD_REL_TOL, "draw {draw}: relative error {err:e}");
        worst = worst.max(err);
    }
    println!("dpo gradient: worst relative error {worst:e} over 24 draws");
}

#[test]
fn policy_logprob_gradient_matches_finite_differences() {
    let streams = Streams::new(5).child("logprob-fd");
    for draw in 0..20 {
        let mut rng = streams.rng(draw);
        let d_x = draw % 4;
        let vocab = random_vocab(5 + draw % 4, 3, &mut rng);
        let policy = PolicyModel::random(d_x, Arc::clone(&vocab), 1.0, &mut rng);
        let x = gaussian(d_x, &mut rng);
        let y = rng.random_range(0..vocab.len());
        let analytic = policy.logprob_grad(&x, y).unwrap();
        let numeric = numeric_grad(policy.params.as_slice(), |p| {
            policy.with_params(ParamVector::new(p.to_vec())).unwrap().logprob(&x, y).unwrap()
        });
        let err = worst_rel_err(&analytic, &numeric);
        assert!(err <= FD_REL_TOL, "draw {draw}: relative error {err:e}");
    }
}

#[test]
fn seed7_policy_matches_softmax_oracle() {
    let mut rng = Streams::new(7).rng("policy");
    let vocab = random_vocab(6, 3, &mut rng);
    let policy = PolicyModel::random(2, Arc::clone(&vocab), 1.0, &mut rng);
    let x = [0.4, -1.3];
    let w = policy.params.as_slice();
    // psi(x, c) = [c; x0 * c; x1 * c]
    let scores: Vec<f64> = vocab
        .items
        .iter()
        .map(|c| {
            let mut s = 0.0;
            for j in 0..3 {
                s += w[j] * c[j] + w[3 + j] * x[0] * c[j] + w[6 + j] * x[1] * c[j];
            }
            s
        })
        .collect();
    let log_z = scores.iter().map(|s| s.exp()).sum::<f64>().ln();
    for (y, s) in scores.iter().enumerate() {
        let got = policy.logprob(&x, y).unwrap();
        assert!((got - (s - log_z)).abs() <= 1e-13, "y={y}: {got} vs {}", s - log_z);
    }
}

#[test]
fn uniform_policy_samples_uniformly() {
    let vocab = random_vocab(4, 2, &mut Streams::new(1).rng("vocab"));
    let policy = PolicyModel::uniform(1, vocab);
    let n = 10_000;
    let draws = policy.sample(&[0.5], n, &mut Streams::new(1).rng("sample")).unwrap();
    let sigma = common::binomial_sigma(n, 0.25);
    for id in 0..4 {
        let count = draws.iter().filter(|d| **d == id).count() as f64;
        assert!((count - 2500.0).abs() <= 3.0 * sigma, "id {id}: {count}");
    }
}

#[test]
fn oracle_reward_matches_dot_product_recomputation() {
    let world = common::world(WorldParams {
        seed: 11,
        ..WorldParams::default()
    });
    let oracle = &world.oracle;
    let (d_x, d_y) = (world.spec.d_x, world.spec.d_y);
    let mut rng = Streams::new(11).rng("oracle-check");
    for _ in 0..20 {
        let x = gaussian(d_x, &mut rng);
        let y = rng.random_range(0..world.vocab.len());
        let c = world.vocab.get(y).unwrap();
        let mut psi = c.to_vec();
        for xi in &x {
            psi.extend(c.iter().map(|cj| xi * cj));
        }
        assert_eq!(psi.len(), d_y * (1 + d_x));
        let mut mean = 0.0;
        for u in 0..oracle.clusters() {
            let want: f64 = oracle.weights[u].iter().zip(&psi).map(|(a, b)| a * b).sum();
            let got = oracle.reward_id(&x, y, Some(u)).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            mean += oracle.cluster_mass[u] * want;
        }
        let got = oracle.reward_id(&x, y, None).unwrap();
        assert!((got - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }
    assert!(oracle.reward_id(&[0.0; 3], 0, Some(oracle.clusters())).is_err());
}
