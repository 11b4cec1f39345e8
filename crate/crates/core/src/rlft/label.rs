//! Pair enumeration and selector labeling.

use crate::error::{Error, Result};
use crate::models::{SelectorModel, Vocabulary};

/// All index pairs `(j, l)` with `j < l < n`, in lexicographic order.
pub fn enumerate_pairs(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 completions to pair, got {n}")));
    }
    Ok((0..n).flat_map(|j| (j + 1..n).map(move |l| (j, l))).collect())
}

/// `0` if the first logit is strictly greater than the second, else `1`.
pub fn label_pair_single(selector: &SelectorModel, x: &[f64], y_j: &[f64], y_l: &[f64]) -> Result<u8> {
    let (l0, l1) = selector.forward(x, y_j, y_l)?;
    Ok(if l0 > l1 { 0 } else { 1 })
}

/// Majority vote over the selectors' single labels. Returns the label and
/// the individual votes; a tied vote (even ensemble) resolves to `1`.
pub fn label_pair_majority(selectors: &[SelectorModel], x: &[f64], y_j: &[f64], y_l: &[f64]) -> Result<(u8, Vec<u8>)> {
    if selectors.is_empty() {
        return Err(Error::Invalid("majority vote over zero selectors".into()));
    }
    let votes = selectors
        .iter()
        .map(|s| label_pair_single(s, x, y_j, y_l))
        .collect::<Result<Vec<u8>>>()?;
    Ok((majority(&votes), votes))
}

pub(crate) fn majority(votes: &[u8]) -> u8 {
    let zeros = votes.iter().filter(|v| **v == 0).count();
    if 2 * zeros > votes.len() {
        0
    } else {
        1
    }
}

/// Something that can say which of two vocabulary completions it prefers.
pub trait Comparator: Sync {
    /// `0` when completion `a` is preferred for prompt `x`, `1` otherwise.
    fn compare(&self, x: &[f64], a: usize, b: usize) -> Result<u8>;
}

/// A selector ensemble labeling by majority vote.
pub struct SelectorComparator<'a> {
    pub selectors: &'a [SelectorModel],
    pub vocab: &'a Vocabulary,
}

impl Comparator for SelectorComparator<'_> {
    fn compare(&self, x: &[f64], a: usize, b: usize) -> Result<u8> {
        let (label, _) = label_pair_majority(self.selectors, x, self.vocab.get(a)?, self.vocab.get(b)?)?;
        Ok(label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ParamVector, SelectorArch};

    #[test]
    fn pair_counts() {
        assert_eq!(enumerate_pairs(2).unwrap(), vec![(0, 1)]);
        assert_eq!(enumerate_pairs(4).unwrap().len(), 6);
        let five = enumerate_pairs(5).unwrap();
        assert_eq!(five.len(), 10);
        let mut sorted = five.clone();
        sorted.sort();
        assert_eq!(five, sorted);
        assert!(enumerate_pairs(1).is_err());
    }

    /// Linear selector with logits `(bias0, bias1)` regardless of input.
    fn constant(l0: f64, l1: f64) -> SelectorModel {
        let arch = SelectorArch::new(0, 1, vec![]);
        SelectorModel::with_params(arch, ParamVector::new(vec![0.0, 0.0, 0.0, 0.0, l0, l1])).unwrap()
    }

    #[test]
    fn single_label_rule() {
        assert_eq!(label_pair_single(&constant(2.0, 1.0), &[], &[0.0], &[0.0]).unwrap(), 0);
        assert_eq!(label_pair_single(&constant(1.0, 1.0), &[], &[0.0], &[0.0]).unwrap(), 1);
        assert_eq!(label_pair_single(&constant(0.0, 3.0), &[], &[0.0], &[0.0]).unwrap(), 1);
        let zero = SelectorModel::zeros(SelectorArch::new(2, 2, vec![4]));
        assert_eq!(label_pair_single(&zero, &[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]).unwrap(), 1);
    }

    #[test]
    fn majority_rule() {
        let s = vec![constant(1.0, 0.0), constant(1.0, 0.0), constant(0.0, 1.0)];
        let (label, votes) = label_pair_majority(&s, &[], &[0.0], &[0.0]).unwrap();
        assert_eq!((label, votes), (0, vec![0, 0, 1]));
        let one = vec![constant(1.0, 0.0)];
        assert_eq!(label_pair_majority(&one, &[], &[0.0], &[0.0]).unwrap().0, 0);
        let tie = vec![constant(1.0, 0.0), constant(0.0, 1.0)];
        assert_eq!(label_pair_majority(&tie, &[], &[0.0], &[0.0]).unwrap().0, 1);
        assert!(label_pair_majority(&[], &[], &[0.0], &[0.0]).is_err());
    }
}
