use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enet::{ElasticNetOptions, WeightedDesign};
use super::kernel::kernel_weights;
use super::transform::StateTrajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmapHyperparameters {
    pub theta: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl SmapHyperparameters {
    pub fn new(theta: f64, alpha: f64, lambda: f64) -> Result<Self> {
        let hp = Self { theta, alpha, lambda };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(Error::invalid(format!("theta must be >= 0, got {}", self.theta)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Local linear map fitted around one time step: `x(t) ≈ c0 + C x(t-1)`.
/// `matrix[a][b]` is the effect of community `b` on community `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianStep {
    /// Week of the predicted state `x(t)`.
    pub week: usize,
    pub intercepts: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl JacobianStep {
    pub fn predict(&self, prev: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.intercepts)
            .map(|(row, c0)| c0 + row.iter().zip(prev).map(|(c, x)| c * x).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianSequence {
    pub cluster: String,
    pub communities: Vec<String>,
    pub steps: Vec<JacobianStep>,
}

fn elastic_options(hp: &SmapHyperparameters) -> ElasticNetOptions {
    ElasticNetOptions::new(hp.lambda, hp.alpha)
}

/// Fits the weighted elastic net for every target coordinate around step `target`.
pub fn fit_local_regression(
    traj: &StateTrajectory,
    target: usize,
    hp: &SmapHyperparameters,
    exclude_target: bool,
) -> Result<JacobianStep> {
    hp.validate()?;
    let weights = kernel_weights(traj, target, hp.theta, exclude_target)?;
    let rows: Vec<Vec<f64>> = weights
        .iter()
        .map(|&(t, _)| traj.state(t - 1).unwrap().to_vec())
        .collect();
    let design = WeightedDesign::new(rows, weights.iter().map(|w| w.1).collect())?;
    let opts = elastic_options(hp);
    let n = traj.dim();
    let mut intercepts = Vec::with_capacity(n);
    let mut matrix = Vec::with_capacity(n);
    for j in 0..n {
        let y: Vec<f64> = weights.iter().map(|&(t, _)| traj.state(t).unwrap()[j]).collect();
        let fit = design.fit(&y, &opts)?;
        intercepts.push(fit.intercept);
        matrix.push(fit.coef);
    }
    Ok(JacobianStep {
        week: traj.start_week + target,
        intercepts,
        matrix,
    })
}

/// One local fit per observed transition, each using every transition
/// (including its own) as data.
pub fn jacobian_sequence(traj: &StateTrajectory, hp: &SmapHyperparameters) -> Result<JacobianSequence> {
    let steps = traj
        .transitions()
        .into_par_iter()
        .map(|t| fit_local_regression(traj, t, hp, false))
        .collect::<Result<Vec<_>>>()?;
    Ok(JacobianSequence {
        cluster: traj.cluster.clone(),
        communities: traj.communities.clone(),
        steps,
    })
}

impl JacobianSequence {
    pub fn dim(&self) -> usize {
        self.communities.len()
    }

    pub fn index_of(&self, community: &str) -> Option<usize> {
        self.communities.iter().position(|c| c == community)
    }

    /// Value of entry `(target, source)` per week from the first to the last
    /// fitted week; weeks without a fit are `None`.
    pub fn entry_series(&self, target: usize, source: usize) -> (usize, Vec<Option<f64>>) {
        let Some(first) = self.steps.first().map(|s| s.week) else {
            return (0, Vec::new());
        };
        let last = self.steps.last().unwrap().week;
        let mut out = vec![None; last - first + 1];
        for s in &self.steps {
            out[s.week - first] = Some(s.matrix[target][source]);
        }
        (first, out)
    }

    /// Converts coefficients from standardized units back to the transformed
    /// (e.g. log) scale: `C'[a][b] = C[a][b] σ_a / σ_b`.
    pub fn unstandardized(&self, traj: &StateTrajectory) -> JacobianSequence {
        let tr = &traj.transform;
        let steps = self
            .steps
            .iter()
            .map(|s| {
                let matrix: Vec<Vec<f64>> = s
                    .matrix
                    .iter()
                    .enumerate()
                    .map(|(a, row)| row.iter().enumerate().map(|(b, c)| c * tr[a].sd / tr[b].sd).collect())
                    .collect();
                let intercepts = (0..s.intercepts.len())
                    .map(|a| {
                        tr[a].mean + tr[a].sd * s.intercepts[a]
                            - (0..tr.len()).map(|b| matrix[a][b] * tr[b].mean).sum::<f64>()
                    })
                    .collect();
                JacobianStep {
                    week: s.week,
                    intercepts,
                    matrix,
                }
            })
            .collect();
        JacobianSequence {
            cluster: self.cluster.clone(),
            communities: self.communities.clone(),
            steps,
        }
    }
}

/// CSV `cluster,week,source,target,c_value` for several sequences.
pub fn write_jacobian_csv<W: Write>(sequences: &[JacobianSequence], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cluster", "week", "source", "target", "c_value"])?;
    for seq in sequences {
        for step in &seq.steps {
            for (a, row) in step.matrix.iter().enumerate() {
                for (b, v) in row.iter().enumerate() {
                    wtr.write_record([
                        seq.cluster.clone(),
                        step.week.to_string(),
                        seq.communities[b].clone(),
                        seq.communities[a].clone(),
                        v.to_string(),
                    ])?;
                }
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads sequences back from the Jacobian CSV. Community order within a
/// cluster follows first appearance; intercepts are not stored and read as 0.
pub fn read_jacobian_csv<R: Read>(r: R) -> Result<Vec<JacobianSequence>> {
    #[derive(Deserialize)]
    struct Row {
        cluster: String,
        week: usize,
        source: String,
        target: String,
        c_value: f64,
    }
    let mut rows_by_cluster: Vec<(String, Vec<Row>)> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: Row = row?;
        match rows_by_cluster.iter_mut().find(|(c, _)| *c == row.cluster) {
            Some((_, v)) => v.push(row),
            None => rows_by_cluster.push((row.cluster.clone(), vec![row])),
        }
    }
    let mut out = Vec::new();
    for (cluster, rows) in rows_by_cluster {
        let mut communities: Vec<String> = Vec::new();
        for r in &rows {
            for c in [&r.target, &r.source] {
                if !communities.contains(c) {
                    communities.push(c.clone());
                }
            }
        }
        let n = communities.len();
        let idx = |c: &str| communities.iter().position(|x| x == c).unwrap();
        let mut steps: Vec<JacobianStep> = Vec::new();
        for r in &rows {
            if steps.last().map(|s| s.week) != Some(r.week) {
                steps.push(JacobianStep {
                    week: r.week,
                    intercepts: vec![0.0; n],
                    matrix: vec![vec![0.0; n]; n],
                });
            }
            let s = steps.last_mut().unwrap();
            s.matrix[idx(&r.target)][idx(&r.source)] = r.c_value;
        }
        steps.sort_by_key(|s| s.week);
        out.push(JacobianSequence {
            cluster,
            communities,
            steps,
        });
    }
    Ok(out)
}
