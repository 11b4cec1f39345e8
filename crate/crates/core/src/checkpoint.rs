//! Single-file checkpoints: one JSON header line, then the parameters as
//! little-endian `f64` values. Loading restores the exact bits.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ParamVector, PolicyModel, SelectorArch, SelectorModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Selector,
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: CheckpointKind,
    pub dim: usize,
    /// Present for selectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<SelectorArch>,
    /// Prompt dimension, present for policies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, params: &ParamVector) -> Result<()> {
    if header.dim != params.dim() {
        return Err(Error::Checkpoint(format!(
            "header declares {} parameters but {} were given",
            header.dim,
            params.dim()
        )));
    }
    let mut bytes = serde_json::to_vec(header)?;
    bytes.push(b'\n');
    bytes.reserve(params.dim() * 8);
    for v in params.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&bytes)?;
    file.sync_all()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, ParamVector)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Checkpoint("missing header line".into()));
    }
    let header: CheckpointHeader =
        serde_json::from_slice(&line).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    if body.len() != header.dim * 8 {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.dim * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, ParamVector::new(values)))
}

pub fn save_selector(path: &Path, selector: &SelectorModel, round: Option<usize>) -> Result<()> {
    let header = CheckpointHeader {
        kind: CheckpointKind::Selector,
        dim: selector.params.dim(),
        arch: Some(selector.arch.clone()),
        d_x: None,
        round,
    };
    write_checkpoint(path, &header, &selector.params)
}

pub fn load_selector(path: &Path) -> Result<(SelectorModel, Option<usize>)> {
    let (header, params) = read_checkpoint(path)?;
    if header.kind != CheckpointKind::Selector {
        return Err(Error::Checkpoint(format!("{} holds a {:?}, not a selector", path.display(), header.kind)));
    }
    let arch = header
        .arch
        .ok_or_else(|| Error::Checkpoint("selector checkpoint without architecture".into()))?;
    Ok((SelectorModel::with_params(arch, params)?, header.round))
}

pub fn save_policy(path: &Path, policy: &PolicyModel, round: Option<usize>) -> Result<()> {
    let header = CheckpointHeader {
        kind: CheckpointKind::Policy,
        dim: policy.params.dim(),
        arch: None,
        d_x: Some(policy.d_x),
        round,
    };
    write_checkpoint(path, &header, &policy.params)
}

/// Loads policy parameters onto `template`, which supplies the vocabulary.
pub fn load_policy(path: &Path, template: &PolicyModel) -> Result<PolicyModel> {
    let (header, params) = read_checkpoint(path)?;
    if header.kind != CheckpointKind::Policy {
        return Err(Error::Checkpoint(format!("{} holds a {:?}, not a policy", path.display(), header.kind)));
    }
    if header.d_x != Some(template.d_x) {
        return Err(Error::Checkpoint(format!(
            "policy prompt dimension {:?} does not match {}",
            header.d_x, template.d_x
        )));
    }
    template.with_params(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Streams;

    #[test]
    fn selector_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let arch = SelectorArch::new(3, 2, vec![5]);
        let mut model = SelectorModel::random(arch, &mut Streams::new(9).rng("x"));
        model.params.as_mut_slice()[0] = -0.0;
        model.params.as_mut_slice()[1] = f64::MIN_POSITIVE / 4.0;
        save_selector(&path, &model, Some(17)).unwrap();
        let (back, round) = load_selector(&path).unwrap();
        assert_eq!(round, Some(17));
        let a: Vec<u64> = model.params.as_slice().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.as_slice().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.arch, model.arch);
    }

    #[test]
    fn truncated_and_mismatched_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ckpt");
        let model = SelectorModel::zeros(SelectorArch::new(1, 1, vec![]));
        save_selector(&path, &model, None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_selector(&path), Err(Error::Checkpoint(_))));
        fs::write(&path, b"no header").unwrap();
        assert!(matches!(load_selector(&path), Err(Error::Checkpoint(_))));
    }
}
