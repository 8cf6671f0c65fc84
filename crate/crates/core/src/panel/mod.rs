//! Dyad-week panel, fixed-effects OLS and dyadic cluster-robust inference.

mod fe;
mod models;
mod vcov;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smap::JacobianSequence;
use crate::vectorize::{pair_key, OverlapSeries};

pub use fe::{ols_fit, within_transform, Demeaned, OlsFit};
pub use models::{
    fit_panel_model, hypothesis_specs, run_hypothesis_models, Direction, HypothesisOptions, PanelFit,
    PanelModelSpec, Series, Term,
};
pub use vcov::{dyadic_meat, dyadic_robust_vcov, Relation, Vcov};

/// How the two directed entries of an unordered dyad enter the panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionMode {
    /// One row per directed pair (`i` = source, `j` = target).
    #[default]
    Directed,
    /// One row per unordered pair with the mean of both directions.
    Averaged,
}

/// One dyad-week. `c_value` is the effect of `i` on `j` at `week`, the week of
/// the state predicted by the local map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadObservation {
    /// Index of the unordered pair in [`DyadPanel::dyads`].
    pub dyad_id: usize,
    pub i: String,
    pub j: String,
    pub week: usize,
    pub c_value: f64,
    pub topic_overlap: f64,
    pub user_overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DyadPanel {
    pub rows: Vec<DyadObservation>,
    /// Unordered pairs, sorted; position is the dyad id.
    pub dyads: Vec<(String, String)>,
    /// Candidate rows dropped for a missing interaction or overlap value.
    pub dropped: usize,
}

/// Joins interaction sequences with overlap series on the week index.
pub fn build_dyad_panel(
    sequences: &[JacobianSequence],
    overlaps: &[OverlapSeries],
    mode: InteractionMode,
) -> Result<DyadPanel> {
    let by_pair: BTreeMap<(String, String), &OverlapSeries> =
        overlaps.iter().map(|s| (pair_key(&s.i, &s.j), s)).collect();
    let mut candidates: Vec<(String, String, usize, Option<f64>, Option<f64>, Option<f64>)> = Vec::new();
    for seq in sequences {
        let n = seq.dim();
        for a in 0..n {
            for b in 0..n {
                if a == b || (mode == InteractionMode::Averaged && seq.communities[b] > seq.communities[a]) {
                    continue;
                }
                let (src, tgt) = (&seq.communities[b], &seq.communities[a]);
                let series = by_pair.get(&pair_key(src, tgt));
                for step in &seq.steps {
                    let c = match mode {
                        InteractionMode::Directed => step.matrix[a][b],
                        InteractionMode::Averaged => 0.5 * (step.matrix[a][b] + step.matrix[b][a]),
                    };
                    let at = |v: &Vec<Option<f64>>| v.get(step.week).copied().flatten();
                    let topic = series.and_then(|s| at(&s.topic));
                    let user = series.and_then(|s| at(&s.user));
                    let c = Some(c).filter(|c| c.is_finite());
                    candidates.push((src.clone(), tgt.clone(), step.week, c, topic, user));
                }
            }
        }
    }
    let mut dyads: Vec<(String, String)> = candidates.iter().map(|c| pair_key(&c.0, &c.1)).collect();
    dyads.sort();
    dyads.dedup();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for (i, j, week, c, t, u) in candidates {
        match (c, t, u) {
            (Some(c_value), Some(topic_overlap), Some(user_overlap)) => {
                let dyad_id = dyads.binary_search(&pair_key(&i, &j)).unwrap();
                rows.push(DyadObservation {
                    dyad_id,
                    i,
                    j,
                    week,
                    c_value,
                    topic_overlap,
                    user_overlap,
                });
            }
            _ => dropped += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid("dyad panel is empty after joining interactions with overlaps"));
    }
    // Keep only dyads that contribute rows so ids stay dense.
    let used: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.dyad_id).collect();
    let remap: BTreeMap<usize, usize> = used.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let dyads: Vec<(String, String)> = used.iter().map(|&d| dyads[d].clone()).collect();
    for r in &mut rows {
        r.dyad_id = remap[&r.dyad_id];
    }
    rows.sort_by(|a, b| (a.dyad_id, &a.i, &a.j, a.week).cmp(&(b.dyad_id, &b.i, &b.j, b.week)));
    Ok(DyadPanel { rows, dyads, dropped })
}

impl DyadPanel {
    /// Distinct communities appearing in the panel.
    pub fn nodes(&self) -> Vec<String> {
        let mut v: Vec<String> = self.dyads.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads rows back; `dropped` is not stored in the file and reads as 0.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows: Vec<DyadObservation> = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<Result<_, csv::Error>>()?;
        let mut dyads: BTreeMap<usize, (String, String)> = BTreeMap::new();
        for r in &rows {
            let key = pair_key(&r.i, &r.j);
            if let Some(prev) = dyads.insert(r.dyad_id, key.clone()) {
                if prev != key {
                    return Err(Error::invalid(format!("dyad id {} names two different pairs", r.dyad_id)));
                }
            }
        }
        if dyads.keys().enumerate().any(|(k, &d)| k != d) {
            return Err(Error::invalid("dyad ids are not dense"));
        }
        Ok(Self {
            rows,
            dyads: dyads.into_values().collect(),
            dropped: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smap::JacobianStep;

    fn seq(cluster: &str, names: &[&str], weeks: &[usize]) -> JacobianSequence {
        let n = names.len();
        JacobianSequence {
            cluster: cluster.into(),
            communities: names.iter().map(|s| s.to_string()).collect(),
            steps: weeks
                .iter()
                .map(|&w| JacobianStep {
                    week: w,
                    intercepts: vec![0.0; n],
                    matrix: (0..n).map(|a| (0..n).map(|b| (a * 10 + b) as f64 + w as f64 / 100.0).collect()).collect(),
                })
                .collect(),
        }
    }

    fn overlap(i: &str, j: &str, weeks: usize, missing: &[usize]) -> OverlapSeries {
        let v: Vec<Option<f64>> = (0..weeks).map(|w| (!missing.contains(&w)).then_some(0.5)).collect();
        OverlapSeries {
            i: i.into(),
            j: j.into(),
            static_overlap: Some(0.5),
            user: v.clone(),
            topic: v,
        }
    }

    #[test]
    fn two_cluster_hand_count() {
        let seqs = vec![seq("k1", &["a", "b", "c"], &[1, 2, 3]), seq("k2", &["d", "e"], &[1, 2, 3])];
        let ov = vec![
            overlap("a", "b", 4, &[]),
            overlap("a", "c", 4, &[2]),
            // b-c has no overlap series at all
            overlap("d", "e", 4, &[0, 1, 2, 3]),
            // cross-cluster pair is never used
            overlap("a", "d", 4, &[]),
        ];
        let p = build_dyad_panel(&seqs, &ov, InteractionMode::Directed).unwrap();
        // a-b: 2 directions x 3 weeks; a-c: 2 x 2; b-c and d-e: nothing.
        assert_eq!(p.rows.len(), 10);
        assert_eq!(p.dropped, 2 + 6 + 6);
        assert_eq!(p.dyads, vec![("a".into(), "b".into()), ("a".into(), "c".into())]);
        let r = p.rows.iter().find(|r| r.i == "b" && r.j == "a" && r.week == 2).unwrap();
        assert_eq!(r.c_value, 1.02);
        let avg = build_dyad_panel(&seqs, &ov, InteractionMode::Averaged).unwrap();
        assert_eq!(avg.rows.len(), 5);
        let r = avg.rows.iter().find(|r| r.dyad_id == 0 && r.week == 1).unwrap();
        assert!((r.c_value - (1.01 + 10.01) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_panel_is_error() {
        let seqs = vec![seq("k", &["a", "b"], &[1])];
        assert!(build_dyad_panel(&seqs, &[overlap("a", "b", 4, &[1])], InteractionMode::Directed).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let seqs = vec![seq("k", &["a", "b", "c"], &[1, 2])];
        let ov = vec![overlap("a", "b", 3, &[]), overlap("b", "c", 3, &[])];
        let p = build_dyad_panel(&seqs, &ov, InteractionMode::Directed).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("dyad_id,i,j,week,c_value,topic_overlap,user_overlap"));
        let back = DyadPanel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, p.rows);
        assert_eq!(back.dyads, p.dyads);
        assert_eq!(back.nodes(), vec!["a", "b", "c"]);
    }
}
