use crate::error::{Error, Result};
use crate::models::ParamVector;

fn check_locals(locals: &[(usize, ParamVector)], weights: &[f64]) -> Result<usize> {
    let dim = locals.first().map(|(_, p)| p.dim()).ok_or(Error::EmptyBatch)?;
    for (m, p) in locals {
        p.check_dim("local parameters", dim)?;
        if *m >= weights.len() {
            return Err(Error::Index {
                what: "client id",
                index: *m,
                size: weights.len(),
            });
        }
    }
    Ok(dim)
}

/// `sum_m p_m phi_m`, accumulated in the given order.
fn weighted_sum(locals: &[(usize, ParamVector)], weights: &[f64], dim: usize) -> ParamVector {
    let mut acc = vec![0.0; dim];
    for (m, p) in locals {
        let w = weights[*m];
        for (a, v) in acc.iter_mut().zip(p.as_slice()) {
            *a += w * v;
        }
    }
    ParamVector::new(acc)
}

/// Global update `(M/A) * sum_{m in A} p_m phi_m`.
///
/// `locals` pairs a client id with its trained parameters; `weights` is
/// indexed by client id.
pub fn aggregate_fedbis(
    locals: &[(usize, ParamVector)],
    weights: &[f64],
    total_clients: usize,
    sampled: usize,
) -> Result<ParamVector> {
    let dim = check_locals(locals, weights)?;
    if sampled == 0 {
        return Err(Error::Invalid("sampled client count is zero".into()));
    }
    let mut out = weighted_sum(locals, weights, dim);
    out.scale(total_clients as f64 / sampled as f64);
    Ok(out)
}

/// `sum p_m phi_m / sum p_m` over the participants.
pub fn aggregate_normalized(locals: &[(usize, ParamVector)], weights: &[f64]) -> Result<ParamVector> {
    let dim = check_locals(locals, weights)?;
    let mass: f64 = locals.iter().map(|(m, _)| weights[*m]).sum();
    if mass <= 0.0 {
        return Err(Error::Invalid("participants carry zero weight".into()));
    }
    let mut out = weighted_sum(locals, weights, dim);
    out.scale(1.0 / mass);
    Ok(out)
}

/// `(1 - sum_{m in A_u} p_m) phi_u + sum_{m in A_u} p_m phi_m`.
///
/// With no participants the current parameters come back bit-unchanged.
pub fn aggregate_clusterwise(
    current: &ParamVector,
    locals: &[(usize, ParamVector)],
    weights: &[f64],
) -> Result<ParamVector> {
    if locals.is_empty() {
        return Ok(current.clone());
    }
    let dim = check_locals(locals, weights)?;
    current.check_dim("selector parameters", dim)?;
    let mass: f64 = locals.iter().map(|(m, _)| weights[*m]).sum();
    let keep = 1.0 - mass;
    let mut out: Vec<f64> = current.as_slice().iter().map(|v| keep * v).collect();
    for (m, p) in locals {
        let w = weights[*m];
        for (a, v) in out.iter_mut().zip(p.as_slice()) {
            *a += w * v;
        }
    }
    Ok(ParamVector::new(out))
}
