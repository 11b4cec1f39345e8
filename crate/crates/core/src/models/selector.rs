//! Binary selector: an MLP over `[x; y0; y1]` emitting two logits.
//!
//! Parameters are laid out layer by layer, each layer as a row-major
//! `out x in` weight matrix followed by its `out` biases. Hidden layers use
//! `tanh`; the output layer is linear.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::SymmetrizedExample;
use crate::error::{Error, Result};
use crate::models::ParamVector;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorArch {
    pub d_x: usize,
    pub d_y: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl SelectorArch {
    pub fn new(d_x: usize, d_y: usize, hidden: Vec<usize>) -> Self {
        Self { d_x, d_y, hidden }
    }

    pub fn input_dim(&self) -> usize {
        self.d_x + 2 * self.d_y
    }

    /// Widths of every layer, input first, the 2-logit output last.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim());
        w.extend(&self.hidden);
        w.push(2);
        w
    }

    pub fn param_dim(&self) -> usize {
        self.widths().windows(2).map(|p| p[1] * p[0] + p[1]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim() == 0 {
            return Err(Error::config("arch", "selector input dimension is zero"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("arch.hidden", "hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorModel {
    pub arch: SelectorArch,
    pub params: ParamVector,
}

impl SelectorModel {
    pub fn zeros(arch: SelectorArch) -> Self {
        let dim = arch.param_dim();
        Self {
            arch,
            params: ParamVector::zeros(dim),
        }
    }

    /// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases.
    pub fn random(arch: SelectorArch, rng: &mut Rng) -> Self {
        let mut values = Vec::with_capacity(arch.param_dim());
        for pair in arch.widths().windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                let z: f64 = rng.sample(StandardNormal);
                values.push(z * std);
            }
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            arch,
            params: ParamVector::new(values),
        }
    }

    pub fn with_params(arch: SelectorArch, params: ParamVector) -> Result<Self> {
        params.check_dim("selector parameters", arch.param_dim())?;
        Ok(Self { arch, params })
    }

    fn check_inputs(&self, x: &[f64], y0: &[f64], y1: &[f64]) -> Result<()> {
        let shape = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Shape {
                    what,
                    expected,
                    got,
                })
            }
        };
        shape("prompt x", self.arch.d_x, x.len())?;
        shape("completion y0", self.arch.d_y, y0.len())?;
        shape("completion y1", self.arch.d_y, y1.len())
    }

    /// Runs the network, keeping every layer's post-activation output.
    fn activations(&self, x: &[f64], y0: &[f64], y1: &[f64]) -> Vec<Vec<f64>> {
        let widths = self.arch.widths();
        let n_layers = widths.len() - 1;
        let mut acts = Vec::with_capacity(widths.len());
        let mut input = Vec::with_capacity(widths[0]);
        input.extend_from_slice(x);
        input.extend_from_slice(y0);
        input.extend_from_slice(y1);
        acts.push(input);
        let p = self.params.as_slice();
        let mut off = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let w = &p[off..off + fan_in * fan_out];
            let b = &p[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
            off += fan_in * fan_out + fan_out;
            let prev = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = b[o] + row.iter().zip(prev).map(|(a, v)| a * v).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// The two logits for `(x, y0, y1)`.
    pub fn forward(&self, x: &[f64], y0: &[f64], y1: &[f64]) -> Result<(f64, f64)> {
        self.check_inputs(x, y0, y1)?;
        let acts = self.activations(x, y0, y1);
        let out = acts.last().expect("output layer");
        Ok((out[0], out[1]))
    }

    /// Mean cross-entropy of `softmax(logits)` against each example's label.
    pub fn ce_loss(&self, batch: &[SymmetrizedExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut total = 0.0;
        for ex in batch {
            let (l0, l1) = self.forward(&ex.x, &ex.y0, &ex.y1)?;
            total += cross_entropy(l0, l1, ex.label);
        }
        Ok(total / batch.len() as f64)
    }

    /// Gradient of [`Self::ce_loss`] with respect to the parameters.
    pub fn ce_grad(&self, batch: &[SymmetrizedExample]) -> Result<ParamVector> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let widths = self.arch.widths();
        let n_layers = widths.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += widths[l] * widths[l + 1] + widths[l + 1];
        }
        let p = self.params.as_slice();
        let mut grad = vec![0.0; self.params.dim()];
        let inv_n = 1.0 / batch.len() as f64;

        for ex in batch {
            self.check_inputs(&ex.x, &ex.y0, &ex.y1)?;
            let acts = self.activations(&ex.x, &ex.y0, &ex.y1);
            let out = &acts[n_layers];
            let (q0, q1) = softmax2(out[0], out[1]);
            // dL/dlogits for the mean CE
            let mut delta = vec![q0 * inv_n, q1 * inv_n];
            delta[usize::from(ex.label)] -= inv_n;

            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                let o = offsets[l];
                let prev = &acts[l];
                for r in 0..fan_out {
                    let g = &mut grad[o + r * fan_in..o + (r + 1) * fan_in];
                    for (gi, a) in g.iter_mut().zip(prev) {
                        *gi += delta[r] * a;
                    }
                    grad[o + fan_in * fan_out + r] += delta[r];
                }
                if l > 0 {
                    let w = &p[o..o + fan_in * fan_out];
                    delta = (0..fan_in)
                        .map(|c| {
                            let back: f64 = (0..fan_out).map(|r| w[r * fan_in + c] * delta[r]).sum();
                            // prev is a tanh output
                            back * (1.0 - prev[c] * prev[c])
                        })
                        .collect();
                }
            }
        }
        Ok(ParamVector::new(grad))
    }
}

fn softmax2(l0: f64, l1: f64) -> (f64, f64) {
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let s = e0 + e1;
    (e0 / s, e1 / s)
}

/// `-log softmax(l0, l1)[label]`, computed stably.
pub(crate) fn cross_entropy(l0: f64, l1: f64, label: u8) -> f64 {
    let (target, other) = if label == 0 { (l0, l1) } else { (l1, l0) };
    // log(1 + exp(other - target))
    let d = other - target;
    if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    }
}
