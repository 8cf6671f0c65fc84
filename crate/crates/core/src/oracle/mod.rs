//! Synthetic ecosystems with known Jacobians, and synthetic corpora.

mod corpus;
mod models;
mod recovery;
mod scenarios;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{constant_activity, synthetic_corpus, PairSchedule, SyntheticCorpusSpec};
pub use models::{finite_difference_jacobian, simulate, spectral_radius, GroundTruth, MapFamily, SyntheticModel};
pub use scenarios::{benchmark_scenarios, BenchmarkScenario};
pub use recovery::{detect_sign_flip, recovery_score, truth_in_coordinates, RecoveryScore};

/// Corpus settings of a scenario; weekly activity is the simulated state
/// times `activity_scale`, rounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScenario {
    pub start: chrono::NaiveDate,
    pub activity_scale: f64,
    pub authors_per_pool: usize,
    pub tokens_per_pool: usize,
    pub words_per_post: usize,
    #[serde(default)]
    pub schedule: Vec<PairSchedule>,
}

/// Scenario file: `{family, params, n, T, noise, seed, x0, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(flatten)]
    pub model: SyntheticModel,
    /// Community names; defaults to `s0, s1, ...`.
    #[serde(default)]
    pub names: Vec<String>,
    #[serde(default)]
    pub corpus: Option<CorpusScenario>,
}

impl Scenario {
    pub fn names(&self) -> Vec<String> {
        if self.names.is_empty() {
            (0..self.n).map(|i| format!("s{i}")).collect()
        } else {
            self.names.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.map.dim() != self.n {
            return Err(Error::invalid(format!("n = {} but the model has {} species", self.n, self.model.map.dim())));
        }
        if !self.names.is_empty() && self.names.len() != self.n {
            return Err(Error::invalid("one name per species required"));
        }
        Ok(())
    }

    pub fn simulate(&self) -> Result<GroundTruth> {
        self.validate()?;
        simulate(&self.model, self.t, &self.names())
    }

    /// Corpus spec realizing the simulated trajectory as weekly activity.
    pub fn corpus_spec(&self, truth: &GroundTruth) -> Result<Option<SyntheticCorpusSpec>> {
        let Some(c) = &self.corpus else { return Ok(None) };
        if !(c.activity_scale > 0.0) {
            return Err(Error::invalid("activity scale must be positive"));
        }
        let activity: Vec<Vec<usize>> = (0..self.n)
            .map(|i| truth.trajectory.iter().map(|x| (x[i] * c.activity_scale).round().max(0.0) as usize).collect())
            .collect();
        Ok(Some(SyntheticCorpusSpec {
            communities: self.names(),
            start: c.start,
            weeks: self.t,
            authors_per_pool: c.authors_per_pool,
            tokens_per_pool: c.tokens_per_pool,
            words_per_post: c.words_per_post,
            activity,
            schedule: c.schedule.clone(),
            seed: self.model.seed.wrapping_add(1),
        }))
    }
}
