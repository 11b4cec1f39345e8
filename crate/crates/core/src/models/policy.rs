//! Linear-softmax policy over a finite completion vocabulary.
//!
//! The score of completion `v` for prompt `x` is `theta . psi(x, c_v)` where
//! `c_v` is the completion's feature vector and `psi(x, c) = [c; x (x) c]`
//! (the completion itself followed by the row-major outer product). The same
//! feature map backs the synthetic oracle reward, so a policy can represent
//! any cluster's reward exactly.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ParamVector;
use crate::rng::Rng;

/// Dimension of `psi(x, c)` for prompt dim `d_x` and completion dim `d_y`.
pub fn feature_dim(d_x: usize, d_y: usize) -> usize {
    d_y * (1 + d_x)
}

/// `psi(x, c) = [c; x (x) c]`.
pub fn features(x: &[f64], c: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(feature_dim(x.len(), c.len()));
    out.extend_from_slice(c);
    for xi in x {
        out.extend(c.iter().map(|cj| xi * cj));
    }
    out
}

/// `w . psi(x, c)` without materializing `psi`.
pub fn bilinear_score(w: &[f64], x: &[f64], c: &[f64]) -> f64 {
    let d_y = c.len();
    let mut s: f64 = w[..d_y].iter().zip(c).map(|(a, b)| a * b).sum();
    for (i, xi) in x.iter().enumerate() {
        let row = &w[d_y * (1 + i)..d_y * (2 + i)];
        s += xi * row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
    }
    s
}

/// The completion vocabulary: one feature vector per completion id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub d_y: usize,
    pub items: Vec<Vec<f64>>,
}

impl Vocabulary {
    pub fn new(items: Vec<Vec<f64>>) -> Result<Self> {
        let d_y = items.first().map(Vec::len).ok_or_else(|| Error::Invalid("empty vocabulary".into()))?;
        for item in &items {
            if item.len() != d_y {
                return Err(Error::Shape {
                    what: "vocabulary item",
                    expected: d_y,
                    got: item.len(),
                });
            }
        }
        Ok(Self { d_y, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&[f64]> {
        self.items.get(id).map(Vec::as_slice).ok_or(Error::Index {
            what: "completion id",
            index: id,
            size: self.items.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    pub params: ParamVector,
    pub d_x: usize,
    pub vocab: Arc<Vocabulary>,
    /// Sampling temperature. `0` means greedy decoding.
    pub temperature: f64,
}

impl PolicyModel {
    pub fn param_dim(d_x: usize, vocab: &Vocabulary) -> usize {
        feature_dim(d_x, vocab.d_y)
    }

    pub fn uniform(d_x: usize, vocab: Arc<Vocabulary>) -> Self {
        let dim = Self::param_dim(d_x, &vocab);
        Self {
            params: ParamVector::zeros(dim),
            d_x,
            vocab,
            temperature: 1.0,
        }
    }

    pub fn random(d_x: usize, vocab: Arc<Vocabulary>, scale: f64, rng: &mut Rng) -> Self {
        let dim = Self::param_dim(d_x, &vocab);
        let values = (0..dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            params: ParamVector::new(values),
            d_x,
            vocab,
            temperature: 1.0,
        }
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        params.check_dim("policy parameters", self.params.dim())?;
        Ok(Self {
            params,
            d_x: self.d_x,
            vocab: Arc::clone(&self.vocab),
            temperature: self.temperature,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn check_prompt(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d_x {
            return Err(Error::Shape {
                what: "prompt x",
                expected: self.d_x,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_prompt(x)?;
        let w = self.params.as_slice();
        Ok(self.vocab.items.iter().map(|c| bilinear_score(w, x, c)).collect())
    }

    /// Log-probabilities of every completion under the model distribution.
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.scores(x)?;
        let lse = log_sum_exp(&s);
        Ok(s.into_iter().map(|v| v - lse).collect())
    }

    pub fn probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.log_probs(x)?.into_iter().map(f64::exp).collect())
    }

    /// `log pi(y | x)`.
    pub fn logprob(&self, x: &[f64], y: usize) -> Result<f64> {
        if y >= self.vocab_size() {
            return Err(Error::Index {
                what: "completion id",
                index: y,
                size: self.vocab_size(),
            });
        }
        Ok(self.log_probs(x)?[y])
    }

    /// Gradient of `log pi(y | x)` w.r.t. the parameters:
    /// `psi(x, y) - E_pi[psi(x, .)]`.
    pub fn logprob_grad(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        let probs = self.probs(x)?;
        let target = self.vocab.get(y)?;
        let mut g = features(x, target);
        for (c, p) in self.vocab.items.iter().zip(&probs) {
            for (gi, f) in g.iter_mut().zip(features(x, c)) {
                *gi -= p * f;
            }
        }
        Ok(g)
    }

    /// Highest-scoring completion; ties go to the lowest id.
    pub fn greedy(&self, x: &[f64]) -> Result<usize> {
        let s = self.scores(x)?;
        Ok(argmax(&s))
    }

    /// `n` independent draws at the model temperature.
    pub fn sample(&self, x: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if n == 0 {
            return Err(Error::Invalid("sample count must be positive".into()));
        }
        if self.temperature <= 0.0 {
            let best = self.greedy(x)?;
            return Ok(vec![best; n]);
        }
        let s = self.scores(x)?;
        let scaled: Vec<f64> = s.iter().map(|v| v / self.temperature).collect();
        let lse = log_sum_exp(&scaled);
        let probs: Vec<f64> = scaled.iter().map(|v| (v - lse).exp()).collect();
        Ok((0..n).map(|_| draw_categorical(&probs, rng)).collect())
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn draw_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}
