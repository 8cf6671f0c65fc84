use proptest::prelude::*;

use commeco::episodes::{extract_all, extract_episodes, measurement_count, sign_runs, summarize, InteractionSign};
use commeco::smap::{JacobianSequence, JacobianStep};

fn value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        1 => Just(Some(0.0)),
        4 => (0.01f64..2.0).prop_map(Some),
        4 => (-2.0f64..-0.01).prop_map(Some),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Runs tile the strictly signed values and are maximal.
    #[test]
    fn runs_partition_signed_values(values in prop::collection::vec(value(), 0..80)) {
        let runs = sign_runs(&values);
        let signed = values.iter().filter(|v| v.is_some_and(|x| x != 0.0)).count();
        prop_assert_eq!(runs.iter().map(|r| r.len).sum::<usize>(), signed);
        for r in &runs {
            for v in &values[r.start..r.start + r.len] {
                prop_assert_eq!(InteractionSign::of(v.unwrap()), Some(r.sign));
            }
            prop_assert!(r.mean_strength >= r.mean_value.abs() - 1e-12);
        }
        for w in runs.windows(2) {
            let touching = w[0].start + w[0].len == w[1].start;
            prop_assert!(!touching || w[0].sign != w[1].sign);
        }
    }

    /// Negating every value swaps the signs of runs and nothing else.
    #[test]
    fn negation_swaps_signs(values in prop::collection::vec(value(), 0..80)) {
        let neg: Vec<Option<f64>> = values.iter().map(|v| v.map(|x| -x)).collect();
        let (a, b) = (sign_runs(&values), sign_runs(&neg));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.start, x.len), (y.start, y.len));
            prop_assert_ne!(x.sign, y.sign);
            prop_assert_eq!(x.mean_strength, y.mean_strength);
        }
    }
}

fn sequence(weeks: &[usize], n: usize, seed: u64) -> JacobianSequence {
    let mut state = seed;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 33) % 7) as f64 - 3.0
    };
    JacobianSequence {
        cluster: "k".into(),
        communities: (0..n).map(|c| format!("c{c}")).collect(),
        steps: weeks
            .iter()
            .map(|&week| JacobianStep {
                week,
                intercepts: vec![0.0; n],
                matrix: (0..n).map(|_| (0..n).map(|_| next()).collect()).collect(),
            })
            .collect(),
    }
}

/// Episodes come from row `target`, column `source`, with weekly gaps breaking runs.
#[test]
fn sequence_extraction_uses_entry_series_with_gaps() {
    let weeks = [3, 4, 5, 7, 8, 9, 10, 14, 15];
    let seq = sequence(&weeks, 3, 42);
    for target in 0..3 {
        for source in 0..3 {
            if target == source {
                continue;
            }
            let mut values = vec![None; 15 - 3 + 1];
            for s in &seq.steps {
                values[s.week - 3] = Some(s.matrix[target][source]);
            }
            let expected = sign_runs(&values);
            let got = extract_episodes(&seq, &format!("c{target}"), &format!("c{source}")).unwrap();
            assert_eq!(got.len(), expected.len());
            for (e, r) in got.iter().zip(&expected) {
                assert_eq!((e.start_week, e.duration, e.sign), (r.start + 3, r.len, r.sign));
            }
        }
    }
    assert!(extract_episodes(&seq, "c0", "nope").is_err());
}

#[test]
fn summary_counts_are_consistent() {
    let seq = sequence(&(0..40).collect::<Vec<_>>(), 4, 9);
    let episodes = extract_all(&seq);
    let stats = summarize(&episodes, Some(measurement_count(&seq))).unwrap();
    assert_eq!(measurement_count(&seq), 40 * 4 * 3);
    let total: u64 = episodes.iter().map(|e| e.duration as u64).sum();
    let nonzero = seq
        .steps
        .iter()
        .flat_map(|s| (0..4).flat_map(move |i| (0..4).filter(move |&j| j != i).map(move |j| s.matrix[i][j])))
        .filter(|v| *v != 0.0)
        .count() as u64;
    assert_eq!(total, nonzero);
    assert_eq!(stats.total_episodes, episodes.len());
    assert_eq!(stats.mutualism.count + stats.competition.count, episodes.len());
    assert!((stats.mutualism.share + stats.competition.share - 1.0).abs() < 1e-12);
    let mean = total as f64 / episodes.len() as f64;
    assert!((stats.mean_duration - mean).abs() < 1e-12);
}
