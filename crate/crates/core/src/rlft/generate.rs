use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{PolicyModel, SelectorModel};
use crate::rlft::{enumerate_pairs, label_pair_majority};
use crate::rng::Streams;

/// Temperature for multi-completion generation.
pub const GENERATION_TEMPERATURE: f64 = 1.0;

/// One selector-labeled comparison of two generated completions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedPreferenceRecord {
    /// Index of the instruction in the server's instruction set.
    pub instruction: usize,
    pub prompt: Vec<f64>,
    pub y0: usize,
    pub y1: usize,
    pub label: u8,
    pub votes: Vec<u8>,
}

impl GeneratedPreferenceRecord {
    pub fn preferred(&self) -> usize {
        if self.label == 0 {
            self.y0
        } else {
            self.y1
        }
    }

    pub fn dispreferred(&self) -> usize {
        if self.label == 0 {
            self.y1
        } else {
            self.y0
        }
    }
}

/// For each instruction: draw `n` completions from the reference policy,
/// form all `C(n, 2)` pairs and label each by selector majority.
pub fn build_generated_dataset(
    policy: &PolicyModel,
    selectors: &[SelectorModel],
    instructions: &[Vec<f64>],
    n: usize,
    streams: &Streams,
) -> Result<Vec<GeneratedPreferenceRecord>> {
    if instructions.is_empty() {
        return Err(Error::Invalid("no instructions to generate from".into()));
    }
    let pairs = enumerate_pairs(n)?;
    let mut sampler = policy.clone();
    sampler.temperature = GENERATION_TEMPERATURE;
    let per_instruction: Vec<Vec<GeneratedPreferenceRecord>> = instructions
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let completions = sampler.sample(x, n, &mut streams.rng(format!("generate/{i}")))?;
            pairs
                .iter()
                .map(|&(j, l)| {
                    let (y0, y1) = (completions[j], completions[l]);
                    let (label, votes) =
                        label_pair_majority(selectors, x, policy.vocab.get(y0)?, policy.vocab.get(y1)?)?;
                    Ok(GeneratedPreferenceRecord {
                        instruction: i,
                        prompt: x.clone(),
                        y0,
                        y1,
                        label,
                        votes,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_instruction.into_iter().flatten().collect())
}
