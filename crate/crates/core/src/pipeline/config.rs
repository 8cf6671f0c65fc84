use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{GridSearchSpec, NoiseCeiling, SilhouetteSampling};
use crate::corpus::{EligibilityThresholds, StudyWindow};
use crate::episodes::HistogramOptions;
use crate::panel::{HypothesisOptions, InteractionMode};
use crate::smap::{PreprocessOptions, SmapGrid};
use crate::vectorize::PhraseConfig;

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Line-delimited JSON corpus, optionally zstd-compressed (`.zst`).
    #[serde(default)]
    pub input: Option<PathBuf>,
    pub workdir: PathBuf,
    /// Synthetic scenario JSON used by `simulate`.
    #[serde(default)]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VocabularyConfig {
    pub max_len: usize,
    pub pmi_min: f64,
    pub min_count: u64,
    pub min_df: usize,
    /// Fraction of documents used for phrase detection.
    pub sample_rate: f64,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        let p = PhraseConfig::default();
        Self {
            max_len: p.max_len,
            pmi_min: p.pmi_min,
            min_count: p.min_count,
            min_df: p.min_df,
            sample_rate: 0.1,
        }
    }
}

impl VocabularyConfig {
    pub fn phrase_config(&self) -> PhraseConfig {
        PhraseConfig {
            max_len: self.max_len,
            pmi_min: self.pmi_min,
            min_count: self.min_count,
            min_df: self.min_df,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsaSection {
    /// Dimension of the author model used for user overlap.
    pub author_dimension: usize,
    pub topic_dimension: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
}

impl Default for LsaSection {
    fn default() -> Self {
        Self {
            author_dimension: 2_000,
            topic_dimension: 1_000,
            oversampling: 15,
            power_iterations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    /// Author-LSA dimensions tried by the grid search.
    pub dimensions: Vec<usize>,
    pub min_cluster_sizes: Vec<usize>,
    pub min_samples: Vec<usize>,
    pub noise_ceiling: NoiseCeiling,
    pub max_cluster_size: usize,
    pub silhouette_exact_limit: usize,
    pub silhouette_sample_size: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            dimensions: vec![10, 50, 100, 500, 1_000, 2_000],
            min_cluster_sizes: vec![2, 3, 5, 10],
            min_samples: vec![1, 2, 3, 5],
            noise_ceiling: NoiseCeiling::Count(10_000),
            max_cluster_size: 15,
            silhouette_exact_limit: 5_000,
            silhouette_sample_size: 5_000,
        }
    }
}

impl ClusterSection {
    pub fn grid(&self) -> GridSearchSpec {
        GridSearchSpec {
            dimensions: self.dimensions.clone(),
            min_cluster_sizes: self.min_cluster_sizes.clone(),
            min_samples: self.min_samples.clone(),
            noise_ceiling: self.noise_ceiling,
        }
    }

    pub fn sampling(&self, seed: u64) -> SilhouetteSampling {
        SilhouetteSampling {
            exact_limit: self.silhouette_exact_limit,
            sample_size: self.silhouette_sample_size,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmapSection {
    pub thetas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub log_transform: bool,
    pub min_observations: Option<usize>,
    /// Truth magnitudes below this are skipped when scoring recovery.
    pub recovery_floor: f64,
}

impl Default for SmapSection {
    fn default() -> Self {
        let g = SmapGrid::default();
        Self {
            thetas: g.thetas,
            alphas: g.alphas,
            lambdas: g.lambdas,
            log_transform: true,
            min_observations: None,
            recovery_floor: 0.05,
        }
    }
}

impl SmapSection {
    pub fn grid(&self) -> SmapGrid {
        SmapGrid {
            thetas: self.thetas.clone(),
            alphas: self.alphas.clone(),
            lambdas: self.lambdas.clone(),
        }
    }

    pub fn preprocess(&self) -> PreprocessOptions {
        PreprocessOptions {
            log_transform: self.log_transform,
            min_observations: self.min_observations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeSection {
    pub max_duration: usize,
    pub strength_bin: f64,
    pub max_strength: f64,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let h = HistogramOptions::default();
        Self {
            max_duration: h.max_duration,
            strength_bin: h.strength_bin,
            max_strength: h.max_strength,
        }
    }
}

impl EpisodeSection {
    pub fn histogram(&self) -> HistogramOptions {
        HistogramOptions {
            max_duration: self.max_duration,
            strength_bin: self.strength_bin,
            max_strength: self.max_strength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelSection {
    pub mode: InteractionMode,
    pub standardize: bool,
    pub include_variants: bool,
}

impl Default for PanelSection {
    fn default() -> Self {
        let h = HypothesisOptions::default();
        Self {
            mode: InteractionMode::default(),
            standardize: h.standardize,
            include_variants: h.include_variants,
        }
    }
}

impl PanelSection {
    pub fn hypotheses(&self) -> HypothesisOptions {
        HypothesisOptions {
            standardize: self.standardize,
            include_variants: self.include_variants,
        }
    }
}

/// The whole pipeline configuration. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 or absent means all available cores.
    #[serde(default)]
    pub threads: usize,
    pub paths: Paths,
    /// Optional when the scenario carries a corpus; then it spans the scenario weeks.
    #[serde(default)]
    pub window: Option<WindowConfig>,
    #[serde(default)]
    pub eligibility: EligibilityThresholds,
    #[serde(default)]
    pub vocabulary: VocabularyConfig,
    #[serde(default)]
    pub lsa: LsaSection,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub smap: SmapSection,
    #[serde(default)]
    pub episodes: EpisodeSection,
    #[serde(default)]
    pub panel: PanelSection,
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Reads a config file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let path = std::path::absolute(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("/")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.workdir);
        if let Some(p) = self.paths.input.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.scenario.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        for (what, p) in [("input", &self.paths.input), ("scenario", &self.paths.scenario)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(config_err(format!("{what} path {} does not exist", p.display())));
                }
            }
        }
        if let Some(w) = self.window {
            StudyWindow::new(w.start, w.end).map_err(|e| config_err(e.to_string()))?;
        }
        let e = &self.eligibility;
        if !(0.0..=1.0).contains(&e.min_active_week_fraction) || !(0.0..=1.0).contains(&e.max_nsfw_fraction) {
            return Err(config_err("eligibility fractions must lie in [0, 1]"));
        }
        let v = &self.vocabulary;
        if !(v.sample_rate > 0.0 && v.sample_rate <= 1.0) {
            return Err(config_err("vocabulary.sample_rate must lie in (0, 1]"));
        }
        if v.max_len == 0 || v.min_df < 2 {
            return Err(config_err("vocabulary.max_len must be >= 1 and min_df >= 2"));
        }
        if self.lsa.author_dimension == 0 || self.lsa.topic_dimension == 0 {
            return Err(config_err("LSA dimensions must be positive"));
        }
        self.cluster.grid().validate().map_err(|e| config_err(e.to_string()))?;
        if self.cluster.max_cluster_size < 2 {
            return Err(config_err("cluster.max_cluster_size must be >= 2"));
        }
        for hp in self.smap.grid().triples() {
            hp.validate().map_err(|e| config_err(e.to_string()))?;
        }
        if self.smap.grid().triples().is_empty() {
            return Err(config_err("S-Map grid has an empty axis"));
        }
        let ep = &self.episodes;
        if ep.max_duration == 0 || !(ep.strength_bin > 0.0) || !(ep.max_strength > 0.0) {
            return Err(config_err("episode histogram caps must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn lsa_config(&self, dimension: usize) -> crate::vectorize::LsaConfig {
        crate::vectorize::LsaConfig {
            dimension,
            oversampling: self.lsa.oversampling,
            power_iterations: self.lsa.power_iterations,
            seed: self.seed,
        }
    }
}

/// SHA-256 hex digest of bytes.
pub fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Digest of the JSON form of a config slice.
pub fn hash_value<T: Serialize>(v: &T) -> String {
    digest(&serde_json::to_vec(v).expect("config serializes"))
}
