//! Resumable stage runner over a working directory.
//!
//! Every stage reads files from the workdir, writes its own, and records a
//! manifest entry with the hash of its config slice, of each input and of
//! each output. A stage refuses to run on inputs whose producer is stale.

pub mod config;
pub mod report;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;
pub use report::{flatten_report, round_floats, ReportFormat};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage dependency error: {0}")]
    Dependency(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Dependency(_) => 3,
            PipelineError::Numerical(_) => 4,
            PipelineError::Other(_) => 1,
        }
    }
}

impl From<crate::Error> for PipelineError {
    fn from(e: crate::Error) -> Self {
        if e.is_numerical() {
            PipelineError::Numerical(e.to_string())
        } else {
            PipelineError::Other(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Simulate,
    Ingest,
    Vectorize,
    Cluster,
    Smap,
    Episodes,
    Panel,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Ingest,
        Stage::Vectorize,
        Stage::Cluster,
        Stage::Smap,
        Stage::Episodes,
        Stage::Panel,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Vectorize => "vectorize",
            Stage::Cluster => "cluster",
            Stage::Smap => "smap",
            Stage::Episodes => "episodes",
            Stage::Panel => "panel",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: Stage,
    pub config_hash: String,
    /// Input name (workdir file, or absolute path for external files) to hash.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: BTreeMap<Stage, StageEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self, PipelineError> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read(&path).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&text).map_err(|e| PipelineError::Other(format!("corrupt manifest: {e}")))
    }

    pub fn save(&self, workdir: &Path) -> Result<(), PipelineError> {
        let path = workdir.join(MANIFEST_FILE);
        let text = serde_json::to_vec_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))
    }

    /// The stage whose recorded outputs include `file`.
    pub fn producer_of(&self, file: &str) -> Option<&StageEntry> {
        self.entries.values().find(|e| e.outputs.contains_key(file))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// Files a stage reads. Optional inputs are used only when present.
#[derive(Debug, Clone, Default)]
pub(crate) struct StageInputs {
    pub workdir: Vec<String>,
    pub optional: Vec<String>,
    pub external: Vec<PathBuf>,
}

pub(crate) fn file_hash(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| config::digest(&b))
}

/// Which stage is expected to produce a file when nothing has yet.
fn expected_producer(file: &str) -> &'static str {
    match file {
        "activity.csv" | "records.ndjson" | "ingest.json" => "ingest",
        "clusters.csv" | "cluster_report.json" => "cluster",
        "jacobians.csv" | "cv.json" | "smap_summary.json" => "smap",
        "episode_stats.json" | "episodes.csv" => "episodes",
        "panel_fits.json" | "overlap_summary.json" => "panel",
        "corpus.ndjson" | "truth.json" | "state.csv" => "simulate",
        _ => "vectorize",
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        std::fs::create_dir_all(&config.paths.workdir)
            .map_err(|e| PipelineError::Config(format!("cannot create workdir {}: {e}", config.paths.workdir.display())))?;
        Ok(Self { config, force: false })
    }

    pub fn workdir(&self) -> &Path {
        &self.config.paths.workdir
    }

    /// True when the entry's config, inputs and outputs all still match, recursively.
    fn is_fresh(&self, manifest: &Manifest, entry: &StageEntry, seen: &mut BTreeSet<Stage>) -> Result<bool, PipelineError> {
        if !seen.insert(entry.stage) {
            return Ok(true);
        }
        if entry.config_hash != stages::config_hash(self, entry.stage)? {
            return Ok(false);
        }
        for (name, hash) in &entry.outputs {
            if file_hash(&self.workdir().join(name)).as_deref() != Some(hash.as_str()) {
                return Ok(false);
            }
        }
        for (name, hash) in &entry.inputs {
            let path = if Path::new(name).is_absolute() {
                PathBuf::from(name)
            } else {
                self.workdir().join(name)
            };
            if file_hash(&path).as_deref() != Some(hash.as_str()) {
                return Ok(false);
            }
            if let Some(up) = manifest.producer_of(name) {
                if up.stage != entry.stage && !self.is_fresh(manifest, up, seen)? {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Runs one stage after dependency and staleness checks.
    pub fn run(&self, stage: Stage) -> Result<StageStatus, PipelineError> {
        let mut manifest = Manifest::load(self.workdir())?;
        let inputs = stages::inputs(self, stage, &manifest)?;
        let mut hashes = BTreeMap::new();
        for name in inputs.workdir.iter().chain(inputs.optional.iter()) {
            let path = self.workdir().join(name);
            let required = inputs.workdir.contains(name);
            match file_hash(&path) {
                Some(h) => {
                    hashes.insert(name.clone(), h);
                }
                None if required => {
                    return Err(PipelineError::Dependency(format!(
                        "`{stage}` needs {name}; run `{}` first",
                        expected_producer(name)
                    )))
                }
                None => {}
            }
        }
        for path in &inputs.external {
            let h = file_hash(path)
                .ok_or_else(|| PipelineError::Config(format!("cannot read input {}", path.display())))?;
            hashes.insert(path.display().to_string(), h);
        }
        if !self.force {
            for name in &inputs.workdir {
                if manifest.producer_of(name).is_none() {
                    return Err(PipelineError::Dependency(format!(
                        "{name} exists but no stage recorded writing it; run `{}` or pass --force",
                        expected_producer(name)
                    )));
                }
            }
            for name in hashes.keys() {
                let Some(up) = manifest.producer_of(name) else { continue };
                if up.stage == stage {
                    continue;
                }
                if up.outputs.get(name) != hashes.get(name) {
                    return Err(PipelineError::Dependency(format!(
                        "{name} was modified after `{}` wrote it; rerun `{}` or pass --force",
                        up.stage, up.stage
                    )));
                }
                if !self.is_fresh(&manifest, up, &mut BTreeSet::new())? {
                    return Err(PipelineError::Dependency(format!(
                        "`{}` output {name} is stale (its config or inputs changed); rerun `{}` or pass --force",
                        up.stage, up.stage
                    )));
                }
            }
            if let Some(own) = manifest.entries.get(&stage) {
                if own.inputs == hashes && self.is_fresh(&manifest, own, &mut BTreeSet::new())? {
                    log::info!("{stage}: up to date");
                    return Ok(StageStatus::UpToDate);
                }
            }
        }
        let config_hash = stages::config_hash(self, stage)?;
        let started = Instant::now();
        let written = stages::execute(self, stage)?;
        let mut outputs = BTreeMap::new();
        for name in written {
            let h = file_hash(&self.workdir().join(&name))
                .ok_or_else(|| PipelineError::Other(format!("{stage} did not write {name}")))?;
            outputs.insert(name, h);
        }
        for other in manifest.entries.values_mut() {
            other.outputs.retain(|name, _| !outputs.contains_key(name));
        }
        manifest.entries.insert(
            stage,
            StageEntry {
                stage,
                config_hash,
                inputs: hashes,
                outputs,
                runtime_secs: started.elapsed().as_secs_f64(),
            },
        );
        manifest.save(self.workdir())?;
        log::info!("{stage}: done in {:.2}s", started.elapsed().as_secs_f64());
        Ok(StageStatus::Ran)
    }
}
