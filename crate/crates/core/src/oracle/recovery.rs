use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::models::GroundTruth;
use crate::error::{Error, Result};
use crate::smap::{CoordinateTransform, JacobianSequence, JacobianStep};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryScore {
    /// Share of scored off-diagonal cells with matching strict sign.
    pub sign_accuracy: f64,
    /// Pooled Pearson correlation over scored cells.
    pub correlation: f64,
    /// Slope of the estimate regressed on the truth over scored cells.
    pub scale: f64,
    pub cells: usize,
}

/// Compares off-diagonal entries week by week, scoring cells with
/// `|truth| > floor`.
pub fn recovery_score(estimated: &JacobianSequence, truth: &JacobianSequence, floor: f64) -> Result<RecoveryScore> {
    if estimated.communities != truth.communities {
        return Err(Error::invalid("estimate and truth cover different communities"));
    }
    let n = truth.dim();
    let by_week: BTreeMap<usize, &JacobianStep> = truth.steps.iter().map(|s| (s.week, s)).collect();
    let (mut est, mut tru) = (Vec::new(), Vec::new());
    for s in &estimated.steps {
        let Some(t) = by_week.get(&s.week) else { continue };
        for a in 0..n {
            for b in 0..n {
                if a != b && t.matrix[a][b].abs() > floor {
                    est.push(s.matrix[a][b]);
                    tru.push(t.matrix[a][b]);
                }
            }
        }
    }
    if tru.is_empty() {
        return Err(Error::invalid(format!("no truth cell exceeds the floor {floor}")));
    }
    let k = tru.len() as f64;
    let agree = est.iter().zip(&tru).filter(|(e, t)| e.signum() == t.signum() && **e != 0.0).count();
    let (me, mt) = (est.iter().sum::<f64>() / k, tru.iter().sum::<f64>() / k);
    let (mut see, mut stt, mut set) = (0.0, 0.0, 0.0);
    for (e, t) in est.iter().zip(&tru) {
        see += (e - me) * (e - me);
        stt += (t - mt) * (t - mt);
        set += (e - me) * (t - mt);
    }
    let correlation = if see > 0.0 && stt > 0.0 { set / (see * stt).sqrt() } else { f64::NAN };
    // Through-origin slope when the truth has no spread.
    let scale = if stt > 0.0 {
        set / stt
    } else {
        est.iter().zip(&tru).map(|(e, t)| e * t).sum::<f64>() / tru.iter().map(|t| t * t).sum::<f64>()
    };
    Ok(RecoveryScore {
        sign_accuracy: agree as f64 / k,
        correlation,
        scale,
        cells: tru.len(),
    })
}

/// Expresses raw-scale truth in the coordinates an S-Map estimate lives in:
/// `J'_ab = g_a'(f_a(x)) J_ab / g_b'(x_b)` for per-coordinate transforms `g`.
pub fn truth_in_coordinates(truth: &GroundTruth, transforms: &[CoordinateTransform]) -> Result<JacobianSequence> {
    let n = truth.jacobians.dim();
    if transforms.len() != n {
        return Err(Error::invalid("one transform per community required"));
    }
    let steps = truth
        .jacobians
        .steps
        .iter()
        .map(|s| {
            let prev = &truth.trajectory[s.week - 1];
            let det: Vec<f64> = (0..n)
                .map(|a| s.intercepts[a] + (0..n).map(|b| s.matrix[a][b] * prev[b]).sum::<f64>())
                .collect();
            let matrix = (0..n)
                .map(|a| {
                    (0..n)
                        .map(|b| transforms[a].derivative(det[a]) * s.matrix[a][b] / transforms[b].derivative(prev[b]))
                        .collect()
                })
                .collect();
            JacobianStep {
                week: s.week,
                intercepts: vec![0.0; n],
                matrix,
            }
        })
        .collect();
    Ok(JacobianSequence {
        cluster: truth.jacobians.cluster.clone(),
        communities: truth.jacobians.communities.clone(),
        steps,
    })
}

/// Index of the single sign change that best explains `values`: the split
/// maximizing agreement with one strict sign before and the opposite after.
/// Missing and zero values count against every split equally.
pub fn detect_sign_flip(values: &[Option<f64>]) -> Option<usize> {
    let s: Vec<i32> = values
        .iter()
        .map(|v| v.map_or(0, |x| if x > 0.0 { 1 } else if x < 0.0 { -1 } else { 0 }))
        .collect();
    if s.len() < 2 {
        return None;
    }
    let total_pos = s.iter().filter(|&&v| v > 0).count() as i64;
    let total_neg = s.iter().filter(|&&v| v < 0).count() as i64;
    let (mut pos_before, mut neg_before) = (0i64, 0i64);
    let mut best: Option<(i64, usize)> = None;
    for k in 1..s.len() {
        match s[k - 1] {
            1 => pos_before += 1,
            -1 => neg_before += 1,
            _ => {}
        }
        let up = neg_before + (total_pos - pos_before);
        let down = pos_before + (total_neg - neg_before);
        let score = up.max(down);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, k));
        }
    }
    best.map(|(_, k)| k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[[f64; 4]]) -> JacobianSequence {
        JacobianSequence {
            cluster: "k".into(),
            communities: vec!["a".into(), "b".into()],
            steps: values
                .iter()
                .enumerate()
                .map(|(w, v)| JacobianStep {
                    week: w + 1,
                    intercepts: vec![0.0; 2],
                    matrix: vec![vec![v[0], v[1]], vec![v[2], v[3]]],
                })
                .collect(),
        }
    }

    #[test]
    fn identity_and_scaled_estimates() {
        let truth = seq(&[[1.0, 0.3, -0.2, 1.0], [1.0, 0.5, -0.4, 1.0], [1.0, -0.1, 0.2, 1.0]]);
        let s = recovery_score(&truth, &truth, 0.0).unwrap();
        assert_eq!((s.sign_accuracy, s.cells), (1.0, 6));
        assert!((s.correlation - 1.0).abs() < 1e-12 && (s.scale - 1.0).abs() < 1e-12);
        let mut twice = truth.clone();
        twice.steps.iter_mut().flat_map(|s| s.matrix.iter_mut().flatten()).for_each(|v| *v *= 2.0);
        let s = recovery_score(&twice, &truth, 0.0).unwrap();
        assert_eq!(s.sign_accuracy, 1.0);
        assert!((s.scale - 2.0).abs() < 1e-12);
        assert!(recovery_score(&truth, &truth, 10.0).is_err());
    }

    #[test]
    fn flip_detection() {
        let v: Vec<Option<f64>> = (0..40).map(|t| Some(if t < 23 { -0.2 } else { 0.1 })).collect();
        assert_eq!(detect_sign_flip(&v), Some(23));
        let mut noisy = v.clone();
        noisy[5] = Some(0.3);
        noisy[30] = None;
        assert_eq!(detect_sign_flip(&noisy), Some(23));
    }
}
