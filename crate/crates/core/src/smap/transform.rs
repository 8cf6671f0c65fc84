use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinateTransform {
    /// `Some(c)` when values were mapped through `ln(c + raw)` before standardizing.
    pub log_offset: Option<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl CoordinateTransform {
    pub fn apply(&self, raw: f64) -> f64 {
        let v = match self.log_offset {
            Some(c) => (c + raw).ln(),
            None => raw,
        };
        (v - self.mean) / self.sd
    }

    /// Derivative of [`apply`](Self::apply) with respect to the raw value.
    pub fn derivative(&self, raw: f64) -> f64 {
        match self.log_offset {
            Some(c) => 1.0 / ((c + raw) * self.sd),
            None => 1.0 / self.sd,
        }
    }

    pub fn invert(&self, x: f64) -> f64 {
        let v = x * self.sd + self.mean;
        match self.log_offset {
            Some(c) => v.exp() - c,
            None => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Apply `ln(1 + raw)` before standardizing.
    pub log_transform: bool,
    /// Minimum observed time points; `None` means `n + 8`.
    pub min_observations: Option<usize>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            log_transform: true,
            min_observations: None,
        }
    }
}

/// Standardized multivariate state per time step; `None` marks a gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTrajectory {
    pub cluster: String,
    pub communities: Vec<String>,
    /// Week index of time step 0.
    pub start_week: usize,
    pub states: Vec<Option<Vec<f64>>>,
    pub transform: Vec<CoordinateTransform>,
}

impl StateTrajectory {
    pub fn dim(&self) -> usize {
        self.communities.len()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Time steps `t` whose transition `x(t-1) -> x(t)` is fully observed.
    pub fn transitions(&self) -> Vec<usize> {
        (1..self.states.len())
            .filter(|&t| self.states[t - 1].is_some() && self.states[t].is_some())
            .collect()
    }

    pub fn state(&self, t: usize) -> Option<&[f64]> {
        self.states.get(t).and_then(|s| s.as_deref())
    }

    /// Reorders coordinates: new coordinate `k` is old coordinate `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            cluster: self.cluster.clone(),
            communities: perm.iter().map(|&k| self.communities[k].clone()).collect(),
            start_week: self.start_week,
            states: self
                .states
                .iter()
                .map(|s| s.as_ref().map(|v| perm.iter().map(|&k| v[k]).collect()))
                .collect(),
            transform: perm.iter().map(|&k| self.transform[k]).collect(),
        }
    }
}

/// Log-transforms (optionally) and standardizes each community's series
/// using its own mean and sample standard deviation over observed weeks.
/// `series[c][t]` is the raw group size of community `c` at step `t`.
pub fn preprocess(
    cluster: &str,
    communities: &[String],
    series: &[Vec<Option<f64>>],
    start_week: usize,
    opts: &PreprocessOptions,
) -> Result<StateTrajectory> {
    let n = communities.len();
    if n == 0 || series.len() != n {
        return Err(Error::invalid("one series per community required"));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::invalid("series lengths differ"));
    }
    let observed = (0..len)
        .filter(|&t| series.iter().all(|s| s[t].is_some()))
        .count();
    let min_obs = opts.min_observations.unwrap_or(n + 8);
    if observed < min_obs || observed <= n + 2 {
        return Err(Error::invalid(format!(
            "cluster {cluster}: {observed} fully observed steps, need at least {}",
            min_obs.max(n + 3)
        )));
    }
    let log_offset = opts.log_transform.then_some(1.0);
    let mut transform = Vec::with_capacity(n);
    for (name, s) in communities.iter().zip(series) {
        let vals: Vec<f64> = s
            .iter()
            .flatten()
            .map(|&v| match log_offset {
                Some(c) => (c + v).ln(),
                None => v,
            })
            .collect();
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite value in series of {name}")));
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVariance(name.clone()));
        }
        transform.push(CoordinateTransform { log_offset, mean, sd });
    }
    let states = (0..len)
        .map(|t| {
            series
                .iter()
                .zip(&transform)
                .map(|(s, tr)| s[t].map(|v| tr.apply(v)))
                .collect::<Option<Vec<f64>>>()
        })
        .collect();
    Ok(StateTrajectory {
        cluster: cluster.to_string(),
        communities: communities.to_vec(),
        start_week,
        states,
        transform,
    })
}
