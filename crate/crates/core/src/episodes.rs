//! Directed competition and mutualism episodes and their summary statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smap::JacobianSequence;
use crate::stats::{mean, quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionSign {
    Mutualism,
    Competition,
}

impl InteractionSign {
    pub fn of(v: f64) -> Option<Self> {
        if v > 0.0 {
            Some(Self::Mutualism)
        } else if v < 0.0 {
            Some(Self::Competition)
        } else {
            None
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Mutualism => "mutualism",
            Self::Competition => "competition",
        }
    }
}

/// Maximal run of same-signed values of `C[target][source]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub cluster: String,
    pub source: String,
    pub target: String,
    pub start_week: usize,
    pub duration: usize,
    pub sign: InteractionSign,
    /// Mean of `|C|` over the run.
    pub mean_strength: f64,
    /// Mean of the signed values over the run.
    pub mean_value: f64,
}

/// A run found in a weekly series; exact zeros and missing weeks end runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Run {
    pub start: usize,
    pub len: usize,
    pub sign: InteractionSign,
    pub mean_strength: f64,
    pub mean_value: f64,
}

pub fn sign_runs(values: &[Option<f64>]) -> Vec<Run> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let Some(sign) = values[i].and_then(InteractionSign::of) else {
            i += 1;
            continue;
        };
        let start = i;
        let (mut sum, mut abs_sum) = (0.0, 0.0);
        while i < values.len() && values[i].and_then(InteractionSign::of) == Some(sign) {
            let v = values[i].unwrap();
            sum += v;
            abs_sum += v.abs();
            i += 1;
        }
        let len = i - start;
        out.push(Run {
            start,
            len,
            sign,
            mean_strength: abs_sum / len as f64,
            mean_value: sum / len as f64,
        });
    }
    out
}

/// Episodes of the effect of `source` on `target` within one cluster.
pub fn extract_episodes(seq: &JacobianSequence, target: &str, source: &str) -> Result<Vec<Episode>> {
    let a = seq
        .index_of(target)
        .ok_or_else(|| Error::UnknownCommunity(target.to_string()))?;
    let b = seq
        .index_of(source)
        .ok_or_else(|| Error::UnknownCommunity(source.to_string()))?;
    let (first_week, values) = seq.entry_series(a, b);
    Ok(sign_runs(&values)
        .into_iter()
        .map(|r| Episode {
            cluster: seq.cluster.clone(),
            source: source.to_string(),
            target: target.to_string(),
            start_week: first_week + r.start,
            duration: r.len,
            sign: r.sign,
            mean_strength: r.mean_strength,
            mean_value: r.mean_value,
        })
        .collect())
}

/// Episodes for every ordered off-diagonal pair of a cluster.
pub fn extract_all(seq: &JacobianSequence) -> Vec<Episode> {
    let mut out = Vec::new();
    for target in &seq.communities {
        for source in &seq.communities {
            if target != source {
                out.extend(extract_episodes(seq, target, source).expect("members of the sequence"));
            }
        }
    }
    out
}

/// Number of observed off-diagonal Jacobian entries.
pub fn measurement_count(seq: &JacobianSequence) -> u64 {
    let n = seq.dim() as u64;
    seq.steps.len() as u64 * n * n.saturating_sub(1)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignStats {
    pub count: usize,
    pub share: f64,
    pub mean_duration: Option<f64>,
    pub duration_p80: Option<f64>,
    pub duration_p95: Option<f64>,
    pub duration_p99: Option<f64>,
    pub mean_strength: Option<f64>,
    pub strength_p50: Option<f64>,
    pub strength_p95: Option<f64>,
    pub mean_value_p50: Option<f64>,
    /// 95th percentile of `|mean value|`, signed back to the class sign.
    pub mean_value_extreme_p95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub total_episodes: usize,
    pub measurement_count: Option<u64>,
    pub mutualism: SignStats,
    pub competition: SignStats,
    pub mean_duration: f64,
    pub grand_mean_value: f64,
    /// Mutualism share among the 5% longest episodes.
    pub mutualism_share_top5_longest: f64,
    /// Competition share among the 5% strongest episodes.
    pub competition_share_top5_strongest: f64,
}

fn sign_stats(episodes: &[&Episode], total: usize, sign: InteractionSign) -> SignStats {
    let durations: Vec<f64> = episodes.iter().map(|e| e.duration as f64).collect();
    let strengths: Vec<f64> = episodes.iter().map(|e| e.mean_strength).collect();
    let values: Vec<f64> = episodes.iter().map(|e| e.mean_value).collect();
    let s = if sign == InteractionSign::Mutualism { 1.0 } else { -1.0 };
    SignStats {
        count: episodes.len(),
        share: episodes.len() as f64 / total as f64,
        mean_duration: mean(&durations),
        duration_p80: quantile(&durations, 0.80),
        duration_p95: quantile(&durations, 0.95),
        duration_p99: quantile(&durations, 0.99),
        mean_strength: mean(&strengths),
        strength_p50: quantile(&strengths, 0.50),
        strength_p95: quantile(&strengths, 0.95),
        mean_value_p50: quantile(&values, 0.50),
        mean_value_extreme_p95: quantile(&strengths, 0.95).map(|q| s * q),
    }
}

/// Share of `sign` among the top `fraction` of episodes ranked by `key`
/// (ceil of the count, at least one).
fn top_share(episodes: &[Episode], fraction: f64, sign: InteractionSign, key: impl Fn(&Episode) -> f64) -> f64 {
    let mut ranked: Vec<&Episode> = episodes.iter().collect();
    ranked.sort_by(|a, b| key(b).total_cmp(&key(a)));
    let k = ((episodes.len() as f64 * fraction).ceil() as usize).clamp(1, episodes.len());
    ranked[..k].iter().filter(|e| e.sign == sign).count() as f64 / k as f64
}

pub fn summarize(episodes: &[Episode], measurement_count: Option<u64>) -> Result<EpisodeStats> {
    if episodes.is_empty() {
        return Err(Error::invalid("no episodes to summarize"));
    }
    let total = episodes.len();
    let by = |s: InteractionSign| episodes.iter().filter(|e| e.sign == s).collect::<Vec<_>>();
    let durations: Vec<f64> = episodes.iter().map(|e| e.duration as f64).collect();
    let values: Vec<f64> = episodes.iter().map(|e| e.mean_value).collect();
    Ok(EpisodeStats {
        total_episodes: total,
        measurement_count,
        mutualism: sign_stats(&by(InteractionSign::Mutualism), total, InteractionSign::Mutualism),
        competition: sign_stats(&by(InteractionSign::Competition), total, InteractionSign::Competition),
        mean_duration: mean(&durations).unwrap(),
        grand_mean_value: mean(&values).unwrap(),
        mutualism_share_top5_longest: top_share(episodes, 0.05, InteractionSign::Mutualism, |e| e.duration as f64),
        competition_share_top5_strongest: top_share(episodes, 0.05, InteractionSign::Competition, |e| e.mean_strength),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramOptions {
    /// Durations above this are omitted from the tables.
    pub max_duration: usize,
    pub strength_bin: f64,
    /// Strengths at or above this are omitted from the tables.
    pub max_strength: f64,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        Self {
            max_duration: 20,
            strength_bin: 0.05,
            max_strength: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTables {
    /// `(duration, mutualism, competition)` for durations `1..=max_duration`.
    pub duration: Vec<(usize, u64, u64)>,
    /// `(lo, hi, mutualism, competition)` over `[0, max_strength)`.
    pub strength: Vec<(f64, f64, u64, u64)>,
    /// `(duration, lo, hi, mutualism, competition)`.
    pub joint: Vec<(usize, f64, f64, u64, u64)>,
    pub omitted: u64,
}

pub fn emit_distribution_tables(episodes: &[Episode], opts: &HistogramOptions) -> DistributionTables {
    let n_bins = (opts.max_strength / opts.strength_bin).ceil() as usize;
    let bounds = |k: usize| (k as f64 * opts.strength_bin, ((k + 1) as f64 * opts.strength_bin).min(opts.max_strength));
    let mut dur = vec![(0u64, 0u64); opts.max_duration];
    let mut strength = vec![(0u64, 0u64); n_bins];
    let mut joint = vec![vec![(0u64, 0u64); n_bins]; opts.max_duration];
    let mut omitted = 0;
    let bump = |cell: &mut (u64, u64), sign: InteractionSign| match sign {
        InteractionSign::Mutualism => cell.0 += 1,
        InteractionSign::Competition => cell.1 += 1,
    };
    for e in episodes {
        let d_ok = e.duration >= 1 && e.duration <= opts.max_duration;
        let s_ok = e.mean_strength < opts.max_strength;
        let bin = ((e.mean_strength / opts.strength_bin).floor() as usize).min(n_bins.saturating_sub(1));
        if d_ok {
            bump(&mut dur[e.duration - 1], e.sign);
        }
        if s_ok {
            bump(&mut strength[bin], e.sign);
        }
        if d_ok && s_ok {
            bump(&mut joint[e.duration - 1][bin], e.sign);
        } else {
            omitted += 1;
        }
    }
    DistributionTables {
        duration: dur.iter().enumerate().map(|(i, &(m, c))| (i + 1, m, c)).collect(),
        strength: strength
            .iter()
            .enumerate()
            .map(|(k, &(m, c))| {
                let (lo, hi) = bounds(k);
                (lo, hi, m, c)
            })
            .collect(),
        joint: joint
            .iter()
            .enumerate()
            .flat_map(|(d, row)| {
                row.iter().enumerate().map(move |(k, &(m, c))| {
                    let (lo, hi) = bounds(k);
                    (d + 1, lo, hi, m, c)
                })
            })
            .collect(),
        omitted,
    }
}

impl DistributionTables {
    pub fn write_duration_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["duration", "mutualism", "competition"])?;
        for (d, m, c) in &self.duration {
            wtr.write_record([d.to_string(), m.to_string(), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_strength_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["strength_lo", "strength_hi", "mutualism", "competition"])?;
        for (lo, hi, m, c) in &self.strength {
            wtr.write_record([lo.to_string(), hi.to_string(), m.to_string(), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_joint_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["duration", "strength_lo", "strength_hi", "mutualism", "competition"])?;
        for (d, lo, hi, m, c) in &self.joint {
            wtr.write_record([d.to_string(), lo.to_string(), hi.to_string(), m.to_string(), c.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// CSV `cluster,source,target,start_week,duration,sign,mean_strength,mean_value`.
pub fn write_episodes_csv<W: Write>(episodes: &[Episode], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cluster",
        "source",
        "target",
        "start_week",
        "duration",
        "sign",
        "mean_strength",
        "mean_value",
    ])?;
    for e in episodes {
        wtr.write_record([
            e.cluster.clone(),
            e.source.clone(),
            e.target.clone(),
            e.start_week.to_string(),
            e.duration.to_string(),
            e.sign.as_str().to_string(),
            e.mean_strength.to_string(),
            e.mean_value.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_episodes_csv<R: std::io::Read>(r: R) -> Result<Vec<Episode>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smap::JacobianStep;

    fn vals(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().map(|&x| Some(x)).collect()
    }

    fn episode(sign: InteractionSign, duration: usize, value: f64) -> Episode {
        Episode {
            cluster: "k".into(),
            source: "b".into(),
            target: "a".into(),
            start_week: 0,
            duration,
            sign,
            mean_strength: value.abs(),
            mean_value: value,
        }
    }

    #[test]
    fn single_run() {
        let r = sign_runs(&vals(&[0.1, 0.2, 0.3]));
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].len, r[0].sign), (3, InteractionSign::Mutualism));
        assert!((r[0].mean_value - 0.2).abs() < 1e-15);
    }

    #[test]
    fn alternation() {
        let r = sign_runs(&vals(&[0.1, -0.2, 0.3]));
        assert_eq!(r.iter().map(|r| r.len).collect::<Vec<_>>(), vec![1, 1, 1]);
    }

    #[test]
    fn zeros_and_gaps_break_runs() {
        let r = sign_runs(&vals(&[0.5, 0.0, 0.5, -0.1, -0.3]));
        let got: Vec<_> = r.iter().map(|r| (r.start, r.len, r.sign)).collect();
        use InteractionSign::*;
        assert_eq!(got, vec![(0, 1, Mutualism), (2, 1, Mutualism), (3, 2, Competition)]);
        let r = sign_runs(&[Some(1.0), None, Some(1.0)]);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn extraction_uses_target_row_and_week_offsets() {
        let seq = JacobianSequence {
            cluster: "k".into(),
            communities: vec!["a".into(), "b".into()],
            steps: [(5, 0.3), (6, 0.2), (8, -0.4)]
                .iter()
                .map(|&(week, v)| JacobianStep {
                    week,
                    intercepts: vec![0.0, 0.0],
                    matrix: vec![vec![1.0, v], vec![-v, 1.0]],
                })
                .collect(),
        };
        let e = extract_episodes(&seq, "a", "b").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].start_week, e[0].duration, e[0].sign), (5, 2, InteractionSign::Mutualism));
        assert_eq!((e[1].start_week, e[1].duration), (8, 1));
        let rev = extract_episodes(&seq, "b", "a").unwrap();
        assert_eq!(rev[0].sign, InteractionSign::Competition);
        assert!(extract_episodes(&seq, "a", "zz").is_err());
        assert_eq!(measurement_count(&seq), 6);
    }

    #[test]
    fn empty_summary_is_error() {
        assert!(summarize(&[], None).is_err());
    }

    #[test]
    fn degenerate_summary() {
        let s = summarize(&[episode(InteractionSign::Mutualism, 5, 0.3)], Some(10)).unwrap();
        assert_eq!(s.mean_duration, 5.0);
        assert_eq!(s.mutualism.mean_duration, Some(5.0));
        assert_eq!(s.mutualism.duration_p80, Some(5.0));
        assert_eq!(s.mutualism.duration_p99, Some(5.0));
        assert_eq!(s.mutualism.share, 1.0);
        assert_eq!(s.competition.count, 0);
        assert_eq!(s.competition.mean_duration, None);
        assert_eq!(s.mutualism_share_top5_longest, 1.0);
    }

    #[test]
    fn all_mutualism_histogram() {
        let eps: Vec<_> = (1..=4).map(|d| episode(InteractionSign::Mutualism, d, 0.1)).collect();
        let t = emit_distribution_tables(&eps, &HistogramOptions::default());
        assert!(t.duration.iter().all(|&(_, _, c)| c == 0));
        assert!(t.strength.iter().all(|&(_, _, _, c)| c == 0));
    }

    #[test]
    fn six_episode_hand_count() {
        use InteractionSign::*;
        let eps = vec![
            episode(Mutualism, 1, 0.02),
            episode(Mutualism, 1, 0.07),
            episode(Mutualism, 3, 0.12),
            episode(Competition, 1, -0.03),
            episode(Competition, 2, -0.06),
            episode(Competition, 30, -0.5),
        ];
        let opts = HistogramOptions {
            max_duration: 4,
            strength_bin: 0.05,
            max_strength: 0.2,
        };
        let t = emit_distribution_tables(&eps, &opts);
        assert_eq!(t.duration, vec![(1, 2, 1), (2, 0, 1), (3, 1, 0), (4, 0, 0)]);
        let counts: Vec<(u64, u64)> = t.strength.iter().map(|s| (s.2, s.3)).collect();
        assert_eq!(counts, vec![(1, 1), (1, 1), (1, 0), (0, 0)]);
        assert_eq!(t.omitted, 1);
        assert_eq!(t.joint.len(), 16);
        let j: u64 = t.joint.iter().map(|r| r.3 + r.4).sum();
        assert_eq!(j, 5);
    }

    #[test]
    fn episodes_csv_roundtrip() {
        let eps = vec![episode(InteractionSign::Competition, 2, -0.25)];
        let mut buf = Vec::new();
        write_episodes_csv(&eps, &mut buf).unwrap();
        assert_eq!(read_episodes_csv(buf.as_slice()).unwrap(), eps);
    }
}
