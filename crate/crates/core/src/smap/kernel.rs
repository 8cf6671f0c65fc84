use super::transform::StateTrajectory;
use crate::error::{Error, Result};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exponential kernel weights `exp(-θ ‖x(t-1) - x(t*-1)‖ / d̄)` for every
/// observed transition `t`, where `d̄` is the mean of those distances.
/// With `exclude_target` the transition `t*` itself is left out.
pub fn kernel_weights(
    traj: &StateTrajectory,
    target: usize,
    theta: f64,
    exclude_target: bool,
) -> Result<Vec<(usize, f64)>> {
    if traj.len() < 3 {
        return Err(Error::invalid("kernel weights need at least 3 time steps"));
    }
    if !(theta >= 0.0) {
        return Err(Error::invalid(format!("theta must be >= 0, got {theta}")));
    }
    let anchor = target
        .checked_sub(1)
        .and_then(|t| traj.state(t))
        .ok_or_else(|| Error::invalid(format!("target step {target} has no observed predecessor")))?;
    let dists: Vec<(usize, f64)> = traj
        .transitions()
        .into_iter()
        .filter(|&t| !(exclude_target && t == target))
        .map(|t| (t, euclidean(traj.state(t - 1).unwrap(), anchor)))
        .collect();
    if dists.is_empty() {
        return Err(Error::invalid("no transitions available for weighting"));
    }
    let mean = dists.iter().map(|d| d.1).sum::<f64>() / dists.len() as f64;
    if mean == 0.0 {
        return Err(Error::Numerical("all states identical; mean distance is zero".into()));
    }
    Ok(dists
        .into_iter()
        .map(|(t, d)| (t, (-theta * d / mean).exp()))
        .collect())
}
