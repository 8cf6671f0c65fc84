use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::hash_value;
use super::report;
use super::{Manifest, Pipeline, PipelineError, Stage, StageInputs};
use crate::cluster::{cap_cluster_size, grid_search, CapReport, ClusterAssignment, GridCell, SilhouetteReport};
use crate::corpus::{
    build_panel, filter_eligible, ingest_ndjson, write_ndjson, IngestManifest, StudyWindow, WeeklyActivityPanel,
};
use crate::episodes::{emit_distribution_tables, extract_all, measurement_count, summarize, write_episodes_csv};
use crate::oracle::{detect_sign_flip, recovery_score, truth_in_coordinates, GroundTruth, RecoveryScore, Scenario};
use crate::panel::{build_dyad_panel, fit_panel_model, hypothesis_specs, PanelFit};
use crate::smap::{
    jacobian_sequence, loocv_grid_search, preprocess, read_jacobian_csv, write_jacobian_csv, CvReport, JacobianSequence,
    JacobianStep,
};
use crate::stats::spearman;
use crate::vectorize::lsa::LsaModel;
use crate::vectorize::overlap::{write_overlap_csv, OverlapSeries};
use crate::vectorize::phrases::{documents, sample_documents, term_counts};
use crate::vectorize::sparse::{author_counts, build_author_matrix_in};
use crate::vectorize::{build_author_matrix, build_tfidf, detect_phrases, fit_lsa, weekly_overlap_series, FittedOn, PhraseVocabulary};

type StageResult<T> = Result<T, PipelineError>;

fn other(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Other(format!("{}: {e}", path.display()))
}

fn open(dir: &Path, name: &str) -> StageResult<BufReader<File>> {
    let path = dir.join(name);
    File::open(&path).map(BufReader::new).map_err(|e| other(&path, e))
}

fn create(dir: &Path, name: &str) -> StageResult<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| other(&path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> StageResult<T> {
    serde_json::from_reader(open(dir, name)?).map_err(|e| other(&dir.join(name), e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) -> StageResult<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v).map_err(|e| other(&dir.join(name), e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| other(&dir.join(name), e))
}

fn load_scenario(p: &Pipeline) -> StageResult<Scenario> {
    let path = p
        .config
        .paths
        .scenario
        .as_ref()
        .ok_or_else(|| PipelineError::Config("paths.scenario is not set".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let s: Scenario =
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    s.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    Ok(s)
}

/// The configured window, or the span of a scenario corpus when none is set.
pub(crate) fn study_window(p: &Pipeline) -> StageResult<StudyWindow> {
    if let Some(w) = p.config.window {
        return StudyWindow::new(w.start, w.end).map_err(|e| PipelineError::Config(e.to_string()));
    }
    let s = load_scenario(p)?;
    let c = s
        .corpus
        .as_ref()
        .ok_or_else(|| PipelineError::Config("no [window] and the scenario has no corpus".into()))?;
    StudyWindow::new(c.start, c.start + chrono::Days::new(7 * s.t as u64)).map_err(|e| PipelineError::Config(e.to_string()))
}

/// The corpus `ingest` reads: the configured input or the simulated corpus.
fn ingest_source(p: &Pipeline) -> Option<&Path> {
    p.config.paths.input.as_deref()
}

pub(crate) fn config_hash(p: &Pipeline, stage: Stage) -> StageResult<String> {
    let c = &p.config;
    Ok(match stage {
        Stage::Simulate => hash_value(&"simulate"),
        Stage::Ingest => hash_value(&(study_window(p)?, &c.eligibility)),
        Stage::Vectorize => hash_value(&(c.seed, &c.vocabulary, &c.lsa, &c.cluster.dimensions)),
        Stage::Cluster => hash_value(&(c.seed, &c.cluster)),
        Stage::Smap => hash_value(&c.smap),
        Stage::Episodes => hash_value(&c.episodes),
        Stage::Panel => hash_value(&c.panel),
        Stage::Report => hash_value(&"report"),
    })
}

fn vectors_file(d: usize) -> String {
    format!("vectors_authors_{d}.csv")
}

const OPTIONAL_REPORT_INPUTS: [&str; 6] = [
    "ingest.json",
    "cluster_report.json",
    "recovery.json",
    "panel_fits.json",
    "overlap_summary.json",
    "smap_summary.json",
];

pub(crate) fn inputs(p: &Pipeline, stage: Stage, manifest: &Manifest) -> StageResult<StageInputs> {
    let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    // A scenario without a corpus feeds its state straight to smap.
    let state_only = || p.config.paths.input.is_none() && load_scenario(p).is_ok_and(|s| s.corpus.is_none());
    let simulated_state = !manifest.entries.contains_key(&Stage::Ingest)
        && (manifest.producer_of("state.csv").is_some_and(|e| e.stage == Stage::Simulate) || state_only());
    Ok(match stage {
        Stage::Simulate => StageInputs {
            external: vec![p.config.paths.scenario.clone().ok_or_else(|| PipelineError::Config("paths.scenario is not set".into()))?],
            ..Default::default()
        },
        Stage::Ingest => match ingest_source(p) {
            Some(path) => StageInputs {
                external: vec![path.to_path_buf()],
                ..Default::default()
            },
            None => StageInputs {
                workdir: own(&["corpus.ndjson"]),
                ..Default::default()
            },
        },
        Stage::Vectorize => StageInputs {
            workdir: own(&["records.ndjson", "activity.csv", "ingest.json"]),
            ..Default::default()
        },
        Stage::Cluster => StageInputs {
            workdir: p.config.cluster.dimensions.iter().map(|&d| vectors_file(d)).collect(),
            ..Default::default()
        },
        Stage::Smap => StageInputs {
            workdir: if simulated_state {
                own(&["state.csv", "clusters.csv"])
            } else {
                own(&["activity.csv", "clusters.csv"])
            },
            optional: own(&["truth.json"]),
            ..Default::default()
        },
        Stage::Episodes => StageInputs {
            workdir: own(&["jacobians.csv"]),
            ..Default::default()
        },
        Stage::Panel => StageInputs {
            workdir: own(&[
                "jacobians.csv",
                "records.ndjson",
                "ingest.json",
                "lsa_authors.bin",
                "lsa_topics.bin",
                "vocabulary.tsv",
            ]),
            ..Default::default()
        },
        Stage::Report => StageInputs {
            workdir: own(&["episode_stats.json", "cv.json"]),
            optional: own(&OPTIONAL_REPORT_INPUTS),
            ..Default::default()
        },
    })
}

pub(crate) fn execute(p: &Pipeline, stage: Stage) -> StageResult<Vec<String>> {
    match stage {
        Stage::Simulate => simulate(p),
        Stage::Ingest => ingest(p),
        Stage::Vectorize => vectorize(p),
        Stage::Cluster => cluster(p),
        Stage::Smap => smap(p),
        Stage::Episodes => episodes(p),
        Stage::Panel => panel(p),
        Stage::Report => report::build(p.workdir()),
    }
}

/// Simulated truth as stored in the workdir; `scale` maps model units to
/// weekly group sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    pub scale: f64,
    pub truth: GroundTruth,
}

fn simulate(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let scenario = load_scenario(p)?;
    let truth = scenario.simulate()?;
    let mut written = vec!["truth.json".to_string(), "truth_jacobians.csv".to_string()];
    write_jacobian_csv(std::slice::from_ref(&truth.jacobians), create(dir, "truth_jacobians.csv")?)?;
    let scale = match scenario.corpus_spec(&truth)? {
        Some(spec) => {
            let records = crate::oracle::synthetic_corpus(&spec)?;
            let mut w = create(dir, "corpus.ndjson")?;
            write_ndjson(&records, &mut w)?;
            w.flush().map_err(|e| other(&dir.join("corpus.ndjson"), e))?;
            written.push("corpus.ndjson".into());
            scenario.corpus.as_ref().map_or(1.0, |c| c.activity_scale)
        }
        None => {
            let names = scenario.names();
            let mut wtr = csv::Writer::from_writer(create(dir, "state.csv")?);
            wtr.write_record(["community", "week", "value"]).map_err(crate::Error::from)?;
            for (c, name) in names.iter().enumerate() {
                for (w, x) in truth.trajectory.iter().enumerate() {
                    wtr.write_record([name.clone(), w.to_string(), x[c].to_string()])
                        .map_err(crate::Error::from)?;
                }
            }
            wtr.flush().map_err(|e| other(&dir.join("state.csv"), e))?;
            let assignment = ClusterAssignment::new(names.clone(), vec![Some(0); names.len()])?;
            assignment.write_csv(create(dir, "clusters.csv")?)?;
            written.extend(["state.csv".to_string(), "clusters.csv".to_string()]);
            1.0
        }
    };
    write_json(dir, "truth.json", &TruthFile { scale, truth })?;
    Ok(written)
}

fn ingest(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let window = study_window(p)?;
    let path = ingest_source(p).map_or_else(|| dir.join("corpus.ndjson"), Path::to_path_buf);
    let file = File::open(&path).map_err(|e| other(&path, e))?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "zst") {
        Box::new(zstd::Decoder::new(file).map_err(|e| other(&path, e))?)
    } else {
        Box::new(file)
    };
    let ingested = ingest_ndjson(BufReader::new(reader), &window)?;
    let seen: BTreeSet<&str> = ingested.records.iter().map(|r| r.community.as_str()).collect();
    let eligible = filter_eligible(&ingested.records, &window, &p.config.eligibility);
    if eligible.is_empty() {
        return Err(PipelineError::Other("no community passes the eligibility thresholds".into()));
    }
    let kept: Vec<_> = ingested
        .records
        .iter()
        .filter(|r| eligible.contains(&r.community))
        .cloned()
        .collect();
    let panel = build_panel(&kept, &eligible, &window)?;
    panel.write_csv(create(dir, "activity.csv")?)?;
    let mut w = create(dir, "records.ndjson")?;
    write_ndjson(&kept, &mut w)?;
    w.flush().map_err(|e| other(&dir.join("records.ndjson"), e))?;
    write_json(
        dir,
        "ingest.json",
        &IngestManifest {
            window,
            weeks: window.weeks(),
            thresholds: p.config.eligibility,
            dropped: ingested.dropped.clone(),
            records_kept: kept.len() as u64,
            communities_seen: seen.len(),
            communities_eligible: eligible.len(),
        },
    )?;
    log::info!(
        "ingest: {} records kept, {} communities eligible of {}, {} lines dropped",
        kept.len(),
        eligible.len(),
        seen.len(),
        ingested.dropped.total()
    );
    Ok(vec!["activity.csv".into(), "records.ndjson".into(), "ingest.json".into()])
}

struct Loaded {
    window: StudyWindow,
    records: Vec<crate::corpus::ContributionRecord>,
}

fn load_records(dir: &Path) -> StageResult<Loaded> {
    let manifest: IngestManifest = read_json(dir, "ingest.json")?;
    let ingested = ingest_ndjson(open(dir, "records.ndjson")?, &manifest.window)?;
    Ok(Loaded {
        window: manifest.window,
        records: ingested.records,
    })
}

fn write_model(dir: &Path, name: &str, model: &LsaModel) -> StageResult<()> {
    let mut w = create(dir, name)?;
    model.write_to(&mut w)?;
    w.flush().map_err(|e| other(&dir.join(name), e))
}

fn read_model(dir: &Path, name: &str) -> StageResult<LsaModel> {
    Ok(LsaModel::read_from(open(dir, name)?)?)
}

fn vectorize(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let cfg = &p.config;
    let Loaded { window, records } = load_records(dir)?;
    let activity = WeeklyActivityPanel::read_csv(open(dir, "activity.csv")?)?;
    let communities: BTreeSet<String> = activity.communities.iter().cloned().collect();

    let (full, _) = author_counts(&records, &communities, &window);
    let authors = build_author_matrix(&full)?;
    let mut written = Vec::new();
    let mut models: BTreeMap<usize, LsaModel> = BTreeMap::new();
    let mut dims: BTreeSet<usize> = cfg.cluster.dimensions.iter().copied().collect();
    dims.insert(cfg.lsa.author_dimension);
    for &d in &dims {
        models.insert(d, fit_lsa(&authors, &cfg.lsa_config(d), FittedOn::Authors)?);
    }
    for &d in &cfg.cluster.dimensions {
        let model = &models[&d];
        let projected = model.project(&authors)?;
        let name = vectors_file(d);
        let mut wtr = csv::Writer::from_writer(create(dir, &name)?);
        let mut header = vec!["community".to_string()];
        header.extend((0..model.dimension).map(|k| format!("v{k}")));
        wtr.write_record(&header).map_err(crate::Error::from)?;
        for (id, v) in authors.row_ids().iter().zip(&projected) {
            let mut row = vec![id.clone()];
            row.extend(v.iter().map(|x| x.to_string()));
            wtr.write_record(&row).map_err(crate::Error::from)?;
        }
        wtr.flush().map_err(|e| other(&dir.join(&name), e))?;
        written.push(name);
    }
    write_model(dir, "lsa_authors.bin", &models[&cfg.lsa.author_dimension])?;
    written.push("lsa_authors.bin".into());

    let docs = documents(&records, &communities, &window);
    let sample = sample_documents(&docs, cfg.vocabulary.sample_rate, cfg.seed);
    let vocab = detect_phrases(&sample, &cfg.vocabulary.phrase_config());
    if vocab.is_empty() {
        return Err(PipelineError::Other("phrase detection kept no terms; lower the vocabulary thresholds".into()));
    }
    let mut w = create(dir, "vocabulary.tsv")?;
    vocab.write_tsv(&mut w)?;
    w.flush().map_err(|e| other(&dir.join("vocabulary.tsv"), e))?;
    let (terms, _) = term_counts(&docs, &vocab.matcher(), &communities, window.weeks());
    let tfidf = build_tfidf(&terms, &vocab)?;
    let topics = fit_lsa(&tfidf, &cfg.lsa_config(cfg.lsa.topic_dimension), FittedOn::Topics)?;
    write_model(dir, "lsa_topics.bin", &topics)?;
    written.extend(["vocabulary.tsv".to_string(), "lsa_topics.bin".to_string()]);
    log::info!(
        "vectorize: {} communities, {} authors, {} vocabulary terms",
        authors.n_rows(),
        authors.n_features(),
        vocab.len()
    );
    Ok(written)
}

fn read_vectors(dir: &Path, name: &str) -> StageResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut ids = Vec::new();
    let mut points = Vec::new();
    for row in csv::Reader::from_reader(open(dir, name)?).records() {
        let row = row.map_err(crate::Error::from)?;
        ids.push(row[0].to_string());
        let v: Result<Vec<f64>, _> = row.iter().skip(1).map(str::parse).collect();
        points.push(v.map_err(|e| other(&dir.join(name), e))?);
    }
    Ok((ids, points))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReport {
    pub best: GridCell,
    pub silhouette: SilhouetteReport,
    pub cap: CapReport,
    pub n_clusters: usize,
    pub n_noise: usize,
}

fn cluster(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let cfg = &p.config.cluster;
    let mut communities: Option<Vec<String>> = None;
    let mut points = BTreeMap::new();
    for &d in &cfg.dimensions {
        let (ids, v) = read_vectors(dir, &vectors_file(d))?;
        match &communities {
            Some(c) if *c != ids => {
                return Err(PipelineError::Other("vector files list different communities".into()))
            }
            _ => communities = Some(ids),
        }
        points.insert(d, v);
    }
    let communities = communities.unwrap_or_default();
    let outcome = grid_search(&cfg.grid(), &points, &cfg.sampling(p.config.seed))?;
    let assignment = ClusterAssignment::new(communities, outcome.labels.clone())?;
    let (capped, cap) = cap_cluster_size(&assignment, cfg.max_cluster_size);
    capped.write_csv(create(dir, "clusters.csv")?)?;
    write_json(dir, "cluster_grid.json", &outcome.cells)?;
    write_json(
        dir,
        "cluster_report.json",
        &ClusterReport {
            best: outcome.best.clone(),
            silhouette: outcome.report.clone(),
            cap,
            n_clusters: capped.n_clusters(),
            n_noise: capped.n_noise(),
        },
    )?;
    log::info!(
        "cluster: silhouette {:.3}, {} clusters after the size cap",
        outcome.report.mean,
        capped.n_clusters()
    );
    Ok(vec!["clusters.csv".into(), "cluster_grid.json".into(), "cluster_report.json".into()])
}

/// Weekly state series by community, from group sizes or a simulated state file.
fn load_series(dir: &Path, simulated: bool) -> StageResult<BTreeMap<String, Vec<Option<f64>>>> {
    if !simulated {
        let panel = WeeklyActivityPanel::read_csv(open(dir, "activity.csv")?)?;
        return Ok(panel
            .communities
            .iter()
            .zip(&panel.group_size)
            .map(|(c, g)| (c.clone(), g.iter().map(|&v| Some(v as f64)).collect()))
            .collect());
    }
    #[derive(Deserialize)]
    struct Row {
        community: String,
        week: usize,
        value: f64,
    }
    let mut out: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for row in csv::Reader::from_reader(open(dir, "state.csv")?).deserialize() {
        let r: Row = row.map_err(crate::Error::from)?;
        let s = out.entry(r.community).or_default();
        if s.len() <= r.week {
            s.resize(r.week + 1, None);
        }
        s[r.week] = Some(r.value);
    }
    let weeks = out.values().map(Vec::len).max().unwrap_or(0);
    out.values_mut().for_each(|s| s.resize(weeks, None));
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedCluster {
    pub cluster: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmapSummary {
    pub fitted: Vec<String>,
    pub skipped: Vec<SkippedCluster>,
    pub weeks: usize,
}

/// Location of a true single sign change of an off-diagonal entry, and
/// where the estimate puts it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlipCheck {
    pub target: String,
    pub source: String,
    pub truth_week: usize,
    pub estimated_week: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterRecovery {
    pub cluster: String,
    pub score: RecoveryScore,
    pub flips: Vec<FlipCheck>,
}

/// Truth restricted to (and ordered as) `names`, in group-size units. A
/// cluster covering part of the system is scored against its own block.
fn truth_for(tf: &TruthFile, names: &[String]) -> Option<GroundTruth> {
    let all = &tf.truth.jacobians.communities;
    let idx: Vec<usize> = names.iter().map(|n| all.iter().position(|c| c == n)).collect::<Option<_>>()?;
    let trajectory = tf
        .truth
        .trajectory
        .iter()
        .map(|x| idx.iter().map(|&k| x[k] * tf.scale).collect())
        .collect();
    let steps = tf
        .truth
        .jacobians
        .steps
        .iter()
        .map(|s| JacobianStep {
            week: s.week,
            intercepts: idx.iter().map(|&a| s.intercepts[a] * tf.scale).collect(),
            matrix: idx.iter().map(|&a| idx.iter().map(|&b| s.matrix[a][b]).collect()).collect(),
        })
        .collect();
    Some(GroundTruth {
        trajectory,
        jacobians: JacobianSequence {
            cluster: tf.truth.jacobians.cluster.clone(),
            communities: names.to_vec(),
            steps,
        },
    })
}

/// Position of the single sign change in a series that has one, else `None`.
fn true_flip(values: &[Option<f64>]) -> Option<usize> {
    let signs: Vec<bool> = values.iter().flatten().filter(|v| **v != 0.0).map(|v| *v > 0.0).collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    (changes == 1).then(|| detect_sign_flip(values)).flatten()
}

fn smap(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let cfg = &p.config.smap;
    let manifest = Manifest::load(dir)?;
    let simulated = inputs(p, Stage::Smap, &manifest)?.workdir.iter().any(|f| f == "state.csv");
    let series = load_series(dir, simulated)?;
    let assignment = ClusterAssignment::read_csv(open(dir, "clusters.csv")?)?;
    let truth: Option<TruthFile> = if dir.join("truth.json").exists() {
        Some(read_json(dir, "truth.json")?)
    } else {
        None
    };
    let weeks = series.values().map(Vec::len).max().unwrap_or(0);
    let mut summary = SmapSummary {
        fitted: Vec::new(),
        skipped: Vec::new(),
        weeks,
    };
    let mut sequences = Vec::new();
    let mut reports: Vec<CvReport> = Vec::new();
    let mut recoveries = Vec::new();
    for (label, members) in assignment.clusters() {
        let name = label.to_string();
        let mut present = Vec::new();
        let mut data = Vec::new();
        for m in &members {
            match series.get(m) {
                Some(s) => {
                    present.push(m.clone());
                    data.push(s.clone());
                }
                None => log::warn!("cluster {name}: no activity series for {m}"),
            }
        }
        if present.len() < 2 {
            summary.skipped.push(SkippedCluster {
                cluster: name,
                reason: "fewer than two communities with activity".into(),
            });
            continue;
        }
        let fitted = preprocess(&name, &present, &data, 0, &cfg.preprocess()).and_then(|traj| {
            let cv = loocv_grid_search(&traj, &cfg.grid())?;
            let seq = jacobian_sequence(&traj, &cv.selected_hyperparameters())?;
            Ok((traj, cv, seq))
        });
        let (traj, cv, seq) = match fitted {
            Ok(v) => v,
            Err(e) if matches!(e, crate::Error::InvalidInput(_) | crate::Error::ZeroVariance(_)) => {
                log::warn!("cluster {name} skipped: {e}");
                summary.skipped.push(SkippedCluster {
                    cluster: name,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(tf) = &truth {
            if let Some(g) = truth_for(tf, &present) {
                let tc = truth_in_coordinates(&g, &traj.transform)?;
                let score = recovery_score(&seq, &tc, cfg.recovery_floor)?;
                let mut flips = Vec::new();
                for a in 0..present.len() {
                    for b in 0..present.len() {
                        if a == b {
                            continue;
                        }
                        let (t0, tv) = tc.entry_series(a, b);
                        let Some(truth_week) = true_flip(&tv).map(|k| k + t0) else { continue };
                        let (e0, ev) = seq.entry_series(a, b);
                        flips.push(FlipCheck {
                            target: present[a].clone(),
                            source: present[b].clone(),
                            truth_week,
                            estimated_week: detect_sign_flip(&ev).map(|k| k + e0),
                        });
                    }
                }
                recoveries.push(ClusterRecovery {
                    cluster: name.clone(),
                    score,
                    flips,
                });
            }
        }
        summary.fitted.push(name);
        sequences.push(seq);
        reports.push(cv);
    }
    write_jacobian_csv(&sequences, create(dir, "jacobians.csv")?)?;
    write_json(dir, "cv.json", &reports)?;
    write_json(dir, "smap_summary.json", &summary)?;
    let mut written = vec!["jacobians.csv".to_string(), "cv.json".to_string(), "smap_summary.json".to_string()];
    if truth.is_some() {
        write_json(dir, "recovery.json", &recoveries)?;
        written.push("recovery.json".into());
    }
    log::info!("smap: {} clusters fitted, {} skipped", summary.fitted.len(), summary.skipped.len());
    Ok(written)
}

fn episodes(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let sequences = read_jacobian_csv(open(dir, "jacobians.csv")?)?;
    let episodes: Vec<_> = sequences.iter().flat_map(extract_all).collect();
    let measurements: u64 = sequences.iter().map(measurement_count).sum();
    let stats = summarize(&episodes, Some(measurements))?;
    write_episodes_csv(&episodes, create(dir, "episodes.csv")?)?;
    write_json(dir, "episode_stats.json", &stats)?;
    let tables = emit_distribution_tables(&episodes, &p.config.episodes.histogram());
    tables.write_duration_csv(create(dir, "episode_duration.csv")?)?;
    tables.write_strength_csv(create(dir, "episode_strength.csv")?)?;
    tables.write_joint_csv(create(dir, "episode_joint.csv")?)?;
    Ok(vec![
        "episodes.csv".into(),
        "episode_stats.json".into(),
        "episode_duration.csv".into(),
        "episode_strength.csv".into(),
        "episode_joint.csv".into(),
    ])
}

/// Per-pair overlap trend: Spearman correlation with the week index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapTrend {
    pub i: String,
    pub j: String,
    pub static_overlap: Option<f64>,
    pub mean_user: Option<f64>,
    pub mean_topic: Option<f64>,
    pub user_trend: Option<f64>,
    pub topic_trend: Option<f64>,
}

fn trend(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let (w, v): (Vec<f64>, Vec<f64>) = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|x| (k as f64, x)))
        .unzip();
    (crate::stats::mean(&v), spearman(&w, &v))
}

fn overlap_trends(series: &[OverlapSeries]) -> Vec<OverlapTrend> {
    series
        .iter()
        .map(|s| {
            let (mean_user, user_trend) = trend(&s.user);
            let (mean_topic, topic_trend) = trend(&s.topic);
            OverlapTrend {
                i: s.i.clone(),
                j: s.j.clone(),
                static_overlap: s.static_overlap,
                mean_user,
                mean_topic,
                user_trend,
                topic_trend,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedFit {
    pub model: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelReport {
    pub rows: usize,
    pub dyads: usize,
    pub dropped: usize,
    pub fits: Vec<PanelFit>,
    pub failed: Vec<FailedFit>,
}

fn panel(p: &Pipeline) -> StageResult<Vec<String>> {
    let dir = p.workdir();
    let sequences = read_jacobian_csv(open(dir, "jacobians.csv")?)?;
    let Loaded { window, records } = load_records(dir)?;
    let user_model = read_model(dir, "lsa_authors.bin")?;
    let topic_model = read_model(dir, "lsa_topics.bin")?;
    let vocab = PhraseVocabulary::read_tsv(open(dir, "vocabulary.tsv")?)?;
    let communities: BTreeSet<String> = sequences.iter().flat_map(|s| s.communities.iter().cloned()).collect();

    let (full, weekly) = author_counts(&records, &communities, &window);
    let user_full = build_author_matrix_in(&full, &user_model.features)?;
    let user_weekly = weekly
        .iter()
        .map(|t| build_author_matrix_in(t, &user_model.features))
        .collect::<crate::Result<Vec<_>>>()?;
    let docs = documents(&records, &communities, &window);
    let (_, weekly_terms) = term_counts(&docs, &vocab.matcher(), &communities, window.weeks());
    let topic_weekly = weekly_terms
        .iter()
        .map(|t| build_tfidf(t, &vocab))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for s in &sequences {
        for (k, a) in s.communities.iter().enumerate() {
            for b in &s.communities[k + 1..] {
                pairs.push((a.clone(), b.clone()));
            }
        }
    }
    let overlaps = weekly_overlap_series(&user_model, &user_full, &user_weekly, &topic_model, &topic_weekly, &pairs)?;
    write_overlap_csv(&overlaps, create(dir, "overlap.csv")?)?;
    write_json(dir, "overlap_summary.json", &overlap_trends(&overlaps))?;

    let dyads = build_dyad_panel(&sequences, &overlaps, p.config.panel.mode)?;
    dyads.write_csv(create(dir, "dyad_panel.csv")?)?;
    let mut report = PanelReport {
        rows: dyads.rows.len(),
        dyads: dyads.dyads.len(),
        dropped: dyads.dropped,
        fits: Vec::new(),
        failed: Vec::new(),
    };
    for spec in hypothesis_specs(&p.config.panel.hypotheses()) {
        match fit_panel_model(&dyads, &spec) {
            Ok(fit) => report.fits.push(fit),
            Err(e) if e.is_numerical() || matches!(e, crate::Error::InvalidInput(_)) => {
                log::warn!("panel model {} not estimable: {e}", spec.name);
                report.failed.push(FailedFit {
                    model: spec.name.clone(),
                    error: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_json(dir, "panel_fits.json", &report)?;
    Ok(vec![
        "overlap.csv".into(),
        "overlap_summary.json".into(),
        "dyad_panel.csv".into(),
        "panel_fits.json".into(),
    ])
}
