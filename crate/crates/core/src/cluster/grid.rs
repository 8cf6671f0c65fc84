use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::CosineDistances;
use super::hdbscan::{hdbscan, HdbscanParams};
use super::silhouette::{silhouette, SilhouetteReport, SilhouetteSampling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseCeiling {
    /// Noise count must be strictly below this.
    Count(usize),
    /// Noise count must be strictly below this fraction of points.
    Fraction(f64),
}

impl NoiseCeiling {
    pub fn admits(&self, n_noise: usize, n_points: usize) -> bool {
        match *self {
            NoiseCeiling::Count(c) => n_noise < c,
            NoiseCeiling::Fraction(f) => (n_noise as f64) < f * n_points as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpec {
    pub dimensions: Vec<usize>,
    pub min_cluster_sizes: Vec<usize>,
    pub min_samples: Vec<usize>,
    pub noise_ceiling: NoiseCeiling,
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() || self.min_cluster_sizes.is_empty() || self.min_samples.is_empty() {
            return Err(Error::invalid("cluster grid has an empty axis"));
        }
        let positive = match self.noise_ceiling {
            NoiseCeiling::Count(c) => c > 0,
            NoiseCeiling::Fraction(f) => f > 0.0,
        };
        if !positive {
            return Err(Error::invalid("noise ceiling must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridParams {
    pub dimension: usize,
    pub min_cluster_size: usize,
    pub min_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub params: GridParams,
    pub silhouette: Option<f64>,
    pub n_clusters: usize,
    pub n_noise: usize,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub best: GridCell,
    pub labels: Vec<Option<usize>>,
    pub report: SilhouetteReport,
    pub cells: Vec<GridCell>,
}

/// Evaluates every (dimension, min_cluster_size, min_samples) cell and keeps
/// the highest silhouette whose noise count is under the ceiling. Ties go
/// to fewer noise points, then the smaller dimension, then grid order.
pub fn grid_search(
    spec: &GridSearchSpec,
    points_by_dimension: &BTreeMap<usize, Vec<Vec<f64>>>,
    sampling: &SilhouetteSampling,
) -> Result<GridSearchOutcome> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &dimension in &spec.dimensions {
        let Some(points) = points_by_dimension.get(&dimension) else {
            return Err(Error::invalid(format!("no vectors for LSA dimension {dimension}")));
        };
        for &min_cluster_size in &spec.min_cluster_sizes {
            for &min_samples in &spec.min_samples {
                jobs.push((
                    GridParams {
                        dimension,
                        min_cluster_size,
                        min_samples,
                    },
                    points,
                ));
            }
        }
    }
    let distances: BTreeMap<usize, CosineDistances> = points_by_dimension
        .iter()
        .filter(|(d, _)| spec.dimensions.contains(d))
        .map(|(&d, p)| (d, CosineDistances::new(p.clone())))
        .collect();

    let evaluated: Vec<(GridCell, Vec<Option<usize>>, Option<SilhouetteReport>)> = jobs
        .par_iter()
        .map(|(params, points)| {
            let d = &distances[&params.dimension];
            let labels = hdbscan(
                d,
                &HdbscanParams {
                    min_cluster_size: params.min_cluster_size,
                    min_samples: params.min_samples,
                },
            );
            let n_noise = labels.iter().filter(|l| l.is_none()).count();
            let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
            let report = silhouette(&labels, d, sampling).ok();
            let feasible = report.is_some() && spec.noise_ceiling.admits(n_noise, points.len());
            (
                GridCell {
                    params: *params,
                    silhouette: report.as_ref().map(|r| r.mean),
                    n_clusters,
                    n_noise,
                    feasible,
                },
                labels,
                report,
            )
        })
        .collect();

    let best = evaluated
        .iter()
        .enumerate()
        .filter(|(_, (c, _, _))| c.feasible)
        .min_by(|(ia, (a, _, _)), (ib, (b, _, _))| {
            b.silhouette
                .unwrap()
                .total_cmp(&a.silhouette.unwrap())
                .then(a.n_noise.cmp(&b.n_noise))
                .then(a.params.dimension.cmp(&b.params.dimension))
                .then(ia.cmp(ib))
        })
        .map(|(i, _)| i);
    let cells: Vec<GridCell> = evaluated.iter().map(|e| e.0.clone()).collect();
    match best {
        Some(i) => {
            let (cell, labels, report) = evaluated.into_iter().nth(i).unwrap();
            Ok(GridSearchOutcome {
                best: cell,
                labels,
                report: report.unwrap(),
                cells,
            })
        }
        None => {
            let mut misses: Vec<&GridCell> = cells.iter().filter(|c| c.silhouette.is_some()).collect();
            misses.sort_by_key(|c| c.n_noise);
            let desc: Vec<String> = misses
                .iter()
                .take(3)
                .map(|c| {
                    format!(
                        "dim={} mcs={} ms={} noise={} silhouette={:.3}",
                        c.params.dimension,
                        c.params.min_cluster_size,
                        c.params.min_samples,
                        c.n_noise,
                        c.silhouette.unwrap()
                    )
                })
                .collect();
            Err(Error::invalid(format!(
                "no cluster grid cell satisfies the noise ceiling; nearest misses: [{}]",
                desc.join("; ")
            )))
        }
    }
}
