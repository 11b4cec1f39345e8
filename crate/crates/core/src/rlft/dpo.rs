//! DPO against a frozen reference policy.
//!
//! With `z = beta * [(log pi(y_w|x) - log pi_ref(y_w|x)) - (log pi(y_l|x) - log pi_ref(y_l|x))]`
//! the per-record loss is `-log sigmoid(z)`. For the linear-softmax policy the
//! partition terms cancel inside `z`'s gradient, leaving
//! `dL/dtheta = -sigmoid(-z) * beta * (psi(x, y_w) - psi(x, y_l))`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::policy::features;
use crate::models::{Optimizer, OptimizerSpec, ParamVector, PolicyModel};
use crate::rlft::GeneratedPreferenceRecord;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpoConfig {
    pub beta: f64,
    pub optimizer: OptimizerSpec,
    /// `T`: optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            optimizer: OptimizerSpec::rmsprop(1e-6),
            steps: 500,
            batch_size: 32,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::config("dpo.beta", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("dpo.batch_size", "must be at least 1"));
        }
        self.optimizer.validate("dpo.optimizer")
    }
}

fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// The implicit reward margin `z` of a record.
pub fn dpo_margin(policy: &PolicyModel, reference: &PolicyModel, record: &GeneratedPreferenceRecord, beta: f64) -> Result<f64> {
    let x = &record.prompt;
    let lp = policy.log_probs(x)?;
    let lr = reference.log_probs(x)?;
    let (w, l) = (record.preferred(), record.dispreferred());
    if w >= lp.len() || l >= lp.len() || lr.len() != lp.len() {
        return Err(Error::Index {
            what: "completion id",
            index: w.max(l),
            size: lp.len().min(lr.len()),
        });
    }
    Ok(beta * ((lp[w] - lr[w]) - (lp[l] - lr[l])))
}

pub fn dpo_loss(policy: &PolicyModel, reference: &PolicyModel, record: &GeneratedPreferenceRecord, beta: f64) -> Result<f64> {
    Ok(softplus(-dpo_margin(policy, reference, record, beta)?))
}

/// Mean loss over a batch.
pub fn dpo_batch_loss(policy: &PolicyModel, reference: &PolicyModel, batch: &[GeneratedPreferenceRecord], beta: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for r in batch {
        total += dpo_loss(policy, reference, r, beta)?;
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of the mean batch loss w.r.t. the policy parameters only.
pub fn dpo_grad(policy: &PolicyModel, reference: &PolicyModel, batch: &[GeneratedPreferenceRecord], beta: f64) -> Result<ParamVector> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = vec![0.0; policy.params.dim()];
    let inv_n = 1.0 / batch.len() as f64;
    for r in batch {
        let z = dpo_margin(policy, reference, r, beta)?;
        let coeff = -sigmoid(-z) * beta * inv_n;
        if coeff == 0.0 {
            continue;
        }
        let fw = features(&r.prompt, policy.vocab.get(r.preferred())?);
        let fl = features(&r.prompt, policy.vocab.get(r.dispreferred())?);
        for (g, (a, b)) in grad.iter_mut().zip(fw.iter().zip(&fl)) {
            *g += coeff * (a - b);
        }
    }
    Ok(ParamVector::new(grad))
}

/// `T` optimizer steps from the reference on uniformly resampled batches.
/// The reference itself is never modified.
pub fn dpo_train(
    reference: &PolicyModel,
    dataset: &[GeneratedPreferenceRecord],
    config: &DpoConfig,
    rng: &mut Rng,
) -> Result<PolicyModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Invalid("empty preference dataset".into()));
    }
    let mut policy = reference.clone();
    let mut opt = Optimizer::new(config.optimizer, policy.params.dim());
    let mut batch = Vec::with_capacity(config.batch_size);
    for _ in 0..config.steps {
        batch.clear();
        for _ in 0..config.batch_size {
            batch.push(dataset[rng.random_range(0..dataset.len())].clone());
        }
        let grad = dpo_grad(&policy, reference, &batch, config.beta)?;
        opt.step(&mut policy.params, &grad)?;
    }
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::models::Vocabulary;
    use crate::rng::Streams;

    fn setup() -> (PolicyModel, PolicyModel) {
        let items = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, -0.5], vec![-1.0, 0.3]];
        let vocab = Arc::new(Vocabulary::new(items).unwrap());
        let reference = PolicyModel::random(2, Arc::clone(&vocab), 0.5, &mut Streams::new(1).rng("ref"));
        let policy = PolicyModel::random(2, vocab, 0.5, &mut Streams::new(2).rng("pol"));
        (policy, reference)
    }

    fn rec(y0: usize, y1: usize, label: u8, x: &[f64]) -> GeneratedPreferenceRecord {
        GeneratedPreferenceRecord {
            instruction: 0,
            prompt: x.to_vec(),
            y0,
            y1,
            label,
            votes: vec![label],
        }
    }

    #[test]
    fn identical_policies_give_ln2() {
        let (_, reference) = setup();
        let r = rec(0, 2, 1, &[0.3, -0.2]);
        let loss = dpo_loss(&reference, &reference, &r, 0.5).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_matches_straight_line_formula() {
        let (policy, reference) = setup();
        let x = [0.7, 1.1];
        let r = rec(3, 1, 0, &x);
        let beta = 0.3;
        let gap = (policy.logprob(&x, 3).unwrap() - reference.logprob(&x, 3).unwrap())
            - (policy.logprob(&x, 1).unwrap() - reference.logprob(&x, 1).unwrap());
        let expected = -(1.0 / (1.0 + (-beta * gap).exp())).ln();
        assert!((dpo_loss(&policy, &reference, &r, beta).unwrap() - expected).abs() < 1e-12);
        // doubling beta substitutes 2*beta*gap
        let doubled = -(1.0 / (1.0 + (-2.0 * beta * gap).exp())).ln();
        assert!((dpo_loss(&policy, &reference, &r, 2.0 * beta).unwrap() - doubled).abs() < 1e-12);
    }

    #[test]
    fn symmetric_records_cancel_at_reference() {
        let (_, reference) = setup();
        let x = [0.2, 0.9];
        let batch = vec![rec(0, 1, 0, &x), rec(1, 0, 1, &x), rec(2, 3, 1, &x), rec(3, 2, 0, &x)];
        // Swapping positions and label keeps the preferred completion, so
        // this batch states each preference twice and does not cancel.
        let g = dpo_grad(&reference, &reference, &batch, 0.4).unwrap();
        assert!(g.max_abs() > 0.0);
        // Adding every opposite preference does.
        let mut sym = batch.clone();
        sym.extend(batch.iter().map(|r| rec(r.y0, r.y1, 1 - r.label, &r.prompt)));
        let g_sym = dpo_grad(&reference, &reference, &sym, 0.4).unwrap();
        assert!(g_sym.max_abs() < 1e-15);
    }

    #[test]
    fn zero_beta_gives_zero_gradient() {
        let (policy, reference) = setup();
        let batch = vec![rec(0, 3, 0, &[1.0, 1.0]), rec(1, 2, 1, &[-1.0, 0.5])];
        assert_eq!(dpo_grad(&policy, &reference, &batch, 0.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn training_edge_cases() {
        let (_, reference) = setup();
        let data = vec![rec(0, 1, 0, &[0.1, 0.1])];
        let mut config = DpoConfig {
            steps: 0,
            optimizer: OptimizerSpec::sgd(0.1),
            ..DpoConfig::default()
        };
        let out = dpo_train(&reference, &data, &config, &mut Streams::new(0).rng("d")).unwrap();
        assert_eq!(out.params, reference.params);
        config.steps = 20;
        config.optimizer = OptimizerSpec::sgd(0.0);
        let out = dpo_train(&reference, &data, &config, &mut Streams::new(0).rng("d")).unwrap();
        assert_eq!(out.params, reference.params);
        assert!(dpo_train(&reference, &[], &config, &mut Streams::new(0).rng("d")).is_err());
        assert!(dpo_grad(&reference, &reference, &[], 0.1).is_err());
    }
}
