use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::Distances;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub mean: f64,
    /// `(cluster label, mean silhouette of its scored members)`.
    pub per_cluster: Vec<(usize, f64)>,
    pub sample_size: usize,
}

/// Points scored: all of them up to `exact_limit`, otherwise a seeded uniform sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteSampling {
    pub exact_limit: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for SilhouetteSampling {
    fn default() -> Self {
        Self {
            exact_limit: 5_000,
            sample_size: 5_000,
            seed: 0,
        }
    }
}

/// Per-point `(b - a) / max(a, b)` over non-noise points; members of
/// singleton clusters score 0.
pub fn silhouette<D: Distances>(
    labels: &[Option<usize>],
    d: &D,
    sampling: &SilhouetteSampling,
) -> Result<SilhouetteReport> {
    let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &members {
        *sizes.entry(labels[i].unwrap()).or_default() += 1;
    }
    if sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "silhouette needs at least 2 clusters, found {}",
            sizes.len()
        )));
    }
    let scored: Vec<usize> = if members.len() <= sampling.exact_limit {
        members.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut idx: Vec<usize> = sample(&mut rng, members.len(), sampling.sample_size.min(members.len()))
            .into_iter()
            .map(|k| members[k])
            .collect();
        idx.sort_unstable();
        idx
    };
    let scores: Vec<(usize, f64)> = scored
        .par_iter()
        .map(|&i| {
            let own = labels[i].unwrap();
            if sizes[&own] == 1 {
                return (own, 0.0);
            }
            let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
            for &j in &members {
                if j != i {
                    *sums.entry(labels[j].unwrap()).or_default() += d.dist(i, j);
                }
            }
            let a = sums.get(&own).copied().unwrap_or(0.0) / (sizes[&own] - 1) as f64;
            let b = sums
                .iter()
                .filter(|(&c, _)| c != own)
                .map(|(c, s)| s / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            (own, if denom > 0.0 { (b - a) / denom } else { 0.0 })
        })
        .collect();
    let mut per: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for &(c, s) in &scores {
        let e = per.entry(c).or_default();
        e.0 += s;
        e.1 += 1;
    }
    Ok(SilhouetteReport {
        mean: scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64,
        per_cluster: per.into_iter().map(|(c, (s, k))| (c, s / k as f64)).collect(),
        sample_size: scores.len(),
    })
}
