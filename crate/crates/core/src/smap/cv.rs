use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enet::{ElasticNetOptions, WeightedDesign};
use super::kernel::kernel_weights;
use super::sequence::SmapHyperparameters;
use super::transform::StateTrajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmapGrid {
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl Default for SmapGrid {
    fn default() -> Self {
        Self {
            thetas: vec![0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0],
            alphas: vec![0.05, 0.5, 0.95],
            lambdas: (0..7).map(|k| 10f64.powf(-4.0 + 5.0 * k as f64 / 6.0)).collect(),
        }
    }
}

impl SmapGrid {
    pub fn triples(&self) -> Vec<SmapHyperparameters> {
        let mut out = Vec::new();
        for &theta in &self.thetas {
            for &alpha in &self.alphas {
                for &lambda in &self.lambdas {
                    out.push(SmapHyperparameters { theta, alpha, lambda });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub theta: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// `None` when some fit for this triple failed.
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub cluster: String,
    pub grid: Vec<CvCell>,
    pub selected: CvCell,
    pub per_coordinate_rmse: Vec<f64>,
}

impl CvReport {
    pub fn selected_hyperparameters(&self) -> SmapHyperparameters {
        SmapHyperparameters {
            theta: self.selected.theta,
            alpha: self.selected.alpha,
            lambda: self.selected.lambda,
        }
    }
}

/// Squared leave-one-out forecast errors per coordinate for every (α, λ)
/// pair at one θ and one held-out step. `None` marks a failed fit.
fn held_out_errors(
    traj: &StateTrajectory,
    target: usize,
    theta: f64,
    penalties: &[(f64, f64)],
) -> Result<Vec<Option<Vec<f64>>>> {
    let weights = kernel_weights(traj, target, theta, true)?;
    let rows: Vec<Vec<f64>> = weights
        .iter()
        .map(|&(t, _)| traj.state(t - 1).unwrap().to_vec())
        .collect();
    let design = WeightedDesign::new(rows, weights.iter().map(|w| w.1).collect())?;
    let n = traj.dim();
    let responses: Vec<Vec<f64>> = (0..n)
        .map(|j| weights.iter().map(|&(t, _)| traj.state(t).unwrap()[j]).collect())
        .collect();
    let prev = traj.state(target - 1).unwrap();
    let actual = traj.state(target).unwrap();
    Ok(penalties
        .iter()
        .map(|&(alpha, lambda)| {
            let opts = ElasticNetOptions::new(lambda, alpha);
            (0..n)
                .map(|j| {
                    let fit = design.fit(&responses[j], &opts).ok()?;
                    let pred = fit.intercept + fit.coef.iter().zip(prev).map(|(c, x)| c * x).sum::<f64>();
                    Some((pred - actual[j]).powi(2))
                })
                .collect()
        })
        .collect())
}

/// Leave-one-out forecast RMSE for every grid triple, pooled over coordinates
/// and held-out steps. The minimum wins; ties go to smaller θ, then larger λ.
pub fn loocv_grid_search(traj: &StateTrajectory, grid: &SmapGrid) -> Result<CvReport> {
    let triples = grid.triples();
    if triples.is_empty() {
        return Err(Error::invalid("empty S-Map hyperparameter grid"));
    }
    for hp in &triples {
        hp.validate()?;
    }
    let penalties: Vec<(f64, f64)> = grid
        .alphas
        .iter()
        .flat_map(|&a| grid.lambdas.iter().map(move |&l| (a, l)))
        .collect();
    let targets = traj.transitions();
    if targets.len() < 2 {
        return Err(Error::invalid("need at least two transitions for cross-validation"));
    }
    let n = traj.dim();
    let jobs: Vec<(usize, usize)> = (0..grid.thetas.len())
        .flat_map(|ti| targets.iter().map(move |&t| (ti, t)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(ti, t)| held_out_errors(traj, t, grid.thetas[ti], &penalties).map(|e| (ti, e)))
        .collect::<Result<Vec<_>>>()?;

    // sums[theta][penalty] = per-coordinate squared error sums, None once any fit failed
    let mut sums: Vec<Vec<Option<Vec<f64>>>> = vec![vec![Some(vec![0.0; n]); penalties.len()]; grid.thetas.len()];
    for (ti, errs) in results {
        for (pi, e) in errs.into_iter().enumerate() {
            let slot = &mut sums[ti][pi];
            match (slot.as_mut(), e) {
                (Some(acc), Some(e)) => acc.iter_mut().zip(e).for_each(|(a, x)| *a += x),
                _ => *slot = None,
            }
        }
    }
    let count = targets.len() as f64;
    let mut cells = Vec::with_capacity(triples.len());
    let mut per_coord = Vec::with_capacity(triples.len());
    for (ti, &theta) in grid.thetas.iter().enumerate() {
        for (pi, &(alpha, lambda)) in penalties.iter().enumerate() {
            let rmse = sums[ti][pi].as_ref().map(|s| (s.iter().sum::<f64>() / (count * n as f64)).sqrt());
            if rmse.is_none() {
                log::warn!("cluster {}: fit failed for theta={theta} alpha={alpha} lambda={lambda}", traj.cluster);
            }
            per_coord.push(sums[ti][pi].as_ref().map(|s| s.iter().map(|x| (x / count).sqrt()).collect::<Vec<_>>()));
            cells.push(CvCell {
                theta,
                alpha,
                lambda,
                rmse,
            });
        }
    }
    let best = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.rmse.is_some())
        .min_by(|(ia, a), (ib, b)| {
            a.rmse
                .unwrap()
                .total_cmp(&b.rmse.unwrap())
                .then(a.theta.total_cmp(&b.theta))
                .then(b.lambda.total_cmp(&a.lambda))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical(format!("cluster {}: every grid triple failed to fit", traj.cluster)))?;
    Ok(CvReport {
        cluster: traj.cluster.clone(),
        selected: cells[best],
        per_coordinate_rmse: per_coord[best].clone().unwrap(),
        grid: cells,
    })
}
