//! Static and weekly cosine overlap between community pairs.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lsa::LsaModel;
use super::sparse::SparseCountMatrix;
use crate::error::{Error, Result};

/// Raw cosine in `[-1, 1]`; `None` when either vector is zero.
pub fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> Option<f64> {
    // Same accumulation order for all three sums, so identical vectors give exactly 1.
    let aa = a.dot(a);
    let bb = b.dot(b);
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((a.dot(b) / (aa * bb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine of two projected rows, unclamped.
pub fn cosine_overlap(model: &LsaModel, row_i: &[(usize, f64)], row_j: &[(usize, f64)]) -> Option<f64> {
    cosine(&model.project_row(row_i), &model.project_row(row_j))
}

/// Overlap values are reported in `[0, 1]`.
pub fn clamp_overlap(raw: Option<f64>) -> Option<f64> {
    raw.map(|v| v.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSeries {
    /// Unordered pair stored with `i < j`.
    pub i: String,
    pub j: String,
    pub static_overlap: Option<f64>,
    pub user: Vec<Option<f64>>,
    pub topic: Vec<Option<f64>>,
}

/// Canonical unordered pair.
pub fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Per-week cosines through a frozen full-period model. A community with no
/// (or an empty) row in a week yields a missing value for that week.
pub fn weekly_cosines(
    model: &LsaModel,
    weekly: &[SparseCountMatrix],
    pairs: &[(String, String)],
) -> Result<Vec<Vec<Option<f64>>>> {
    let per_week: Vec<Vec<Option<f64>>> = weekly
        .par_iter()
        .map(|m| {
            let projected = model.project(m)?;
            Ok(pairs
                .iter()
                .map(|(a, b)| {
                    let (ia, ib) = (m.row_index(a)?, m.row_index(b)?);
                    if m.row(ia).is_empty() || m.row(ib).is_empty() {
                        return None;
                    }
                    let raw = cosine(&projected[ia], &projected[ib]);
                    if let Some(v) = raw.filter(|v| *v < 0.0) {
                        log::debug!("negative cosine {v} for {a}/{b} clamped to 0");
                    }
                    raw
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..pairs.len())
        .map(|p| per_week.iter().map(|w| w[p]).collect())
        .collect())
}

/// Builds overlap series for `pairs` from user and topic models and weekly matrices.
pub fn weekly_overlap_series(
    user_model: &LsaModel,
    user_full: &SparseCountMatrix,
    user_weekly: &[SparseCountMatrix],
    topic_model: &LsaModel,
    topic_weekly: &[SparseCountMatrix],
    pairs: &[(String, String)],
) -> Result<Vec<OverlapSeries>> {
    if user_weekly.len() != topic_weekly.len() {
        return Err(Error::invalid("user and topic weekly matrices cover different week counts"));
    }
    let known: BTreeSet<&str> = user_full.row_ids().iter().map(String::as_str).collect();
    let mut canonical = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        for c in [a, b] {
            if !known.contains(c.as_str()) {
                return Err(Error::UnknownCommunity(c.clone()));
            }
        }
        canonical.push(pair_key(a, b));
    }
    let users = weekly_cosines(user_model, user_weekly, &canonical)?;
    let topics = weekly_cosines(topic_model, topic_weekly, &canonical)?;
    let full = user_model.project(user_full)?;
    Ok(canonical
        .into_iter()
        .zip(users.into_iter().zip(topics))
        .map(|((i, j), (u, t))| {
            let si = user_full.row_index(&i).unwrap();
            let sj = user_full.row_index(&j).unwrap();
            OverlapSeries {
                static_overlap: clamp_overlap(cosine(&full[si], &full[sj])),
                user: u.into_iter().map(clamp_overlap).collect(),
                topic: t.into_iter().map(clamp_overlap).collect(),
                i,
                j,
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV `i,j,week,user_overlap,topic_overlap`; missing values are empty fields.
pub fn write_overlap_csv<W: Write>(series: &[OverlapSeries], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["i", "j", "week", "user_overlap", "topic_overlap"])?;
    for s in series {
        for week in 0..s.user.len().max(s.topic.len()) {
            wtr.write_record([
                s.i.clone(),
                s.j.clone(),
                week.to_string(),
                opt(s.user.get(week).copied().flatten()),
                opt(s.topic.get(week).copied().flatten()),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_overlap_csv<R: std::io::Read>(r: R) -> Result<Vec<OverlapSeries>> {
    #[derive(Deserialize)]
    struct Row {
        i: String,
        j: String,
        week: usize,
        user_overlap: Option<f64>,
        topic_overlap: Option<f64>,
    }
    let mut out: Vec<OverlapSeries> = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize() {
        let row: Row = row?;
        let (i, j) = pair_key(&row.i, &row.j);
        if out.last().map(|s| (&s.i, &s.j)) != Some((&i, &j)) {
            out.push(OverlapSeries {
                i,
                j,
                static_overlap: None,
                user: Vec::new(),
                topic: Vec::new(),
            });
        }
        let s = out.last_mut().unwrap();
        if s.user.len() <= row.week {
            s.user.resize(row.week + 1, None);
            s.topic.resize(row.week + 1, None);
        }
        s.user[row.week] = row.user_overlap;
        s.topic[row.week] = row.topic_overlap;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::lsa::{fit_lsa, FittedOn, LsaConfig};
    use crate::vectorize::sparse::{FeatureSpace, RowNormalization};
    use nalgebra::DMatrix;

    fn matrix(rows: &[&str], data: Vec<Vec<(usize, f64)>>, nfeat: usize) -> SparseCountMatrix {
        SparseCountMatrix::new(
            rows.iter().map(|s| s.to_string()).collect(),
            FeatureSpace::new((0..nfeat).map(|c| format!("f{c}")).collect()).unwrap(),
            data,
            RowNormalization::MaxNormalized,
        )
        .unwrap()
    }

    fn identity_model(nfeat: usize) -> LsaModel {
        LsaModel {
            dimension: nfeat,
            features: FeatureSpace::new((0..nfeat).map(|c| format!("f{c}")).collect()).unwrap(),
            basis: DMatrix::identity(nfeat, nfeat),
            singular_values: vec![1.0; nfeat],
            seed: 0,
            fitted_on: FittedOn::Authors,
        }
    }

    #[test]
    fn identical_and_orthogonal_rows() {
        let model = identity_model(3);
        let r = [(0, 1.0), (2, 0.5)];
        assert_eq!(cosine_overlap(&model, &r, &r), Some(1.0));
        assert_eq!(cosine_overlap(&model, &[(0, 1.0)], &[(1, 1.0)]), Some(0.0));
        assert_eq!(cosine_overlap(&model, &[], &[(1, 1.0)]), None);
        assert_eq!(cosine_overlap(&model, &[], &[]), None);
    }

    #[test]
    fn negative_values_clamped() {
        assert_eq!(clamp_overlap(Some(-0.3)), Some(0.0));
        assert_eq!(clamp_overlap(None), None);
    }

    #[test]
    fn weekly_missingness_and_identity() {
        let full = matrix(&["a", "b"], vec![vec![(0, 1.0), (1, 1.0)], vec![(0, 1.0), (2, 1.0)]], 3);
        let model = fit_lsa(&full, &LsaConfig::new(2, 1), FittedOn::Authors).unwrap();
        let weeks = vec![
            matrix(&["a", "b"], vec![vec![(0, 1.0)], vec![(0, 1.0)]], 3),
            matrix(&["a"], vec![vec![(0, 1.0)]], 3),
            matrix(&["a", "b"], vec![vec![(1, 1.0)], vec![]], 3),
        ];
        let pairs = vec![("b".to_string(), "a".to_string())];
        let s = weekly_overlap_series(&model, &full, &weeks, &model, &weeks, &pairs).unwrap();
        assert_eq!(s[0].i, "a");
        assert!((s[0].user[0].unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(s[0].user[1], None);
        assert_eq!(s[0].user[2], None);
        assert!(s[0].static_overlap.is_some());
    }

    #[test]
    fn unknown_pair_member() {
        let full = matrix(&["a"], vec![vec![(0, 1.0)]], 1);
        let model = identity_model(1);
        let pairs = vec![("a".to_string(), "zz".to_string())];
        assert!(matches!(
            weekly_overlap_series(&model, &full, &[], &model, &[], &pairs),
            Err(Error::UnknownCommunity(c)) if c == "zz"
        ));
    }

    #[test]
    fn two_by_three_fixture_through_rank_two_model() {
        // Full-period rows span features {f0, f1, f2}; the model keeps two
        // directions. Hand values: project onto the model basis and take cosines.
        let full = matrix(&["a", "b"], vec![vec![(0, 1.0), (1, 0.5)], vec![(1, 1.0), (2, 1.0)]], 3);
        let model = fit_lsa(&full, &LsaConfig::new(2, 9), FittedOn::Authors).unwrap();
        let weeks = vec![
            matrix(&["a", "b"], vec![vec![(0, 1.0)], vec![(2, 1.0)]], 3),
            matrix(&["a", "b"], vec![vec![(1, 1.0)], vec![(1, 1.0), (2, 1.0)]], 3),
            matrix(&["a", "b"], vec![vec![(0, 1.0), (1, 0.5)], vec![(0, 1.0), (1, 0.5)]], 3),
        ];
        let pairs = vec![("a".to_string(), "b".to_string())];
        let s = weekly_overlap_series(&model, &full, &weeks, &model, &weeks, &pairs).unwrap();
        // The model's row space is span{(1, .5, 0), (0, 1, 1)}; project the
        // weekly rows onto it with the orthonormal basis computed by hand.
        let e1 = DVector::from_vec(vec![1.0, 0.5, 0.0]) / 1.25f64.sqrt();
        let w = DVector::from_vec(vec![0.0, 1.0, 1.0]);
        let w = &w - &e1 * e1.dot(&w);
        let e2 = &w / w.norm();
        let proj = |v: [f64; 3]| {
            let v = DVector::from_vec(v.to_vec());
            DVector::from_vec(vec![e1.dot(&v), e2.dot(&v)])
        };
        let hand = |x: [f64; 3], y: [f64; 3]| cosine(&proj(x), &proj(y)).unwrap().clamp(0.0, 1.0);
        let expected = [
            hand([1.0, 0.0, 0.0], [0.0, 0.0, 1.0]),
            hand([0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
            1.0,
        ];
        for w in 0..3 {
            assert!((s[0].user[w].unwrap() - expected[w]).abs() < 1e-10, "week {w}");
        }
    }

    #[test]
    fn csv_roundtrip_with_missing() {
        let s = vec![OverlapSeries {
            i: "a".into(),
            j: "b".into(),
            static_overlap: None,
            user: vec![Some(0.5), None],
            topic: vec![None, Some(0.25)],
        }];
        let mut buf = Vec::new();
        write_overlap_csv(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8_lossy(&buf),
            "i,j,week,user_overlap,topic_overlap\na,b,0,0.5,\na,b,1,,0.25\n"
        );
        assert_eq!(read_overlap_csv(buf.as_slice()).unwrap(), s);
    }
}
