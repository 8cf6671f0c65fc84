//! Density-based clustering of communities and its validation.

pub mod distance;
pub mod grid;
pub mod hdbscan;
pub mod silhouette;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distance::{CosineDistances, Distances, EuclideanDistances, PrecomputedDistances};
pub use grid::{grid_search, GridCell, GridParams, GridSearchOutcome, GridSearchSpec, NoiseCeiling};
pub use hdbscan::{hdbscan, HdbscanParams};
pub use silhouette::{silhouette, SilhouetteReport, SilhouetteSampling};

/// Cluster label (or noise) per community, in community order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub communities: Vec<String>,
    pub labels: Vec<Option<usize>>,
}

impl ClusterAssignment {
    pub fn new(communities: Vec<String>, labels: Vec<Option<usize>>) -> Result<Self> {
        if communities.len() != labels.len() {
            return Err(Error::invalid("one label per community required"));
        }
        Ok(Self { communities, labels })
    }

    pub fn n_noise(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters().len()
    }

    /// Members per cluster label, in community order.
    pub fn clusters(&self) -> BTreeMap<usize, Vec<String>> {
        let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (c, l) in self.communities.iter().zip(&self.labels) {
            if let Some(l) = l {
                out.entry(*l).or_default().push(c.clone());
            }
        }
        out
    }

    /// CSV `community,cluster`, `-1` for noise.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["community", "cluster"])?;
        for (c, l) in self.communities.iter().zip(&self.labels) {
            let label = l.map_or(-1, |l| l as i64);
            wtr.write_record([c.clone(), label.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut communities = Vec::new();
        let mut labels = Vec::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let (c, l): (String, i64) = row?;
            communities.push(c);
            labels.push((l >= 0).then_some(l as usize));
        }
        Self::new(communities, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapReport {
    pub removed_clusters: usize,
    pub removed_members: usize,
}

/// Clusters larger than `max_size` become noise; surviving labels are unchanged.
pub fn cap_cluster_size(assignment: &ClusterAssignment, max_size: usize) -> (ClusterAssignment, CapReport) {
    let sizes: BTreeMap<usize, usize> = assignment.clusters().into_iter().map(|(l, m)| (l, m.len())).collect();
    let mut report = CapReport {
        removed_clusters: sizes.values().filter(|&&s| s > max_size).count(),
        removed_members: 0,
    };
    let labels = assignment
        .labels
        .iter()
        .map(|l| match l {
            Some(l) if sizes[l] > max_size => {
                report.removed_members += 1;
                None
            }
            other => *other,
        })
        .collect();
    (
        ClusterAssignment {
            communities: assignment.communities.clone(),
            labels,
        },
        report,
    )
}
