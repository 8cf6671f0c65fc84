use std::collections::BTreeMap;

use super::phrases::{PhraseVocabulary, TermCounts};
use super::sparse::{FeatureSpace, RowNormalization, SparseCountMatrix};
use crate::error::{Error, Result};

/// Feature space of a vocabulary: one feature per phrase, in vocabulary order.
pub fn vocabulary_space(vocab: &PhraseVocabulary) -> Result<FeatureSpace> {
    FeatureSpace::new(vocab.entries.iter().map(|e| e.phrase()).collect())
}

/// `(count(c,t) / max_t' count(c,t')) / ln(df(t))`, with `df` taken from the
/// vocabulary (full-period document frequency).
pub fn build_tfidf(counts: &TermCounts, vocab: &PhraseVocabulary) -> Result<SparseCountMatrix> {
    let space = vocabulary_space(vocab)?;
    let mut idf_divisor = Vec::with_capacity(vocab.len());
    for e in &vocab.entries {
        if e.df < 2 {
            return Err(Error::Invariant(format!(
                "term `{}` has document frequency {} < 2; ln(df) would not be positive",
                e.phrase(),
                e.df
            )));
        }
        idf_divisor.push((e.df as f64).ln());
    }
    let mut rows = Vec::with_capacity(counts.len());
    let mut data = Vec::with_capacity(counts.len());
    for (community, row) in counts {
        let row: BTreeMap<usize, u64> = row
            .iter()
            .filter(|(&t, &n)| t < vocab.len() && n > 0)
            .map(|(&t, &n)| (t, n))
            .collect();
        let max = row.values().copied().max().unwrap_or(0);
        rows.push(community.clone());
        data.push(
            row.into_iter()
                .map(|(t, n)| (t, (n as f64 / max as f64) / idf_divisor[t]))
                .collect(),
        );
    }
    SparseCountMatrix::new(rows, space, data, RowNormalization::Tfidf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::phrases::PhraseEntry;

    fn vocab(entries: &[(&str, usize)]) -> PhraseVocabulary {
        PhraseVocabulary {
            entries: entries
                .iter()
                .map(|(p, df)| PhraseEntry {
                    tokens: p.split(' ').map(str::to_string).collect(),
                    count: 100,
                    df: *df,
                    pmi: 0.0,
                })
                .collect(),
        }
    }

    fn counts(rows: &[(&str, &[(usize, u64)])]) -> TermCounts {
        rows.iter()
            .map(|(c, r)| (c.to_string(), r.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn idf_divisor_and_tf_normalization() {
        let v = vocab(&[("a", 3), ("b", 2)]);
        let m = build_tfidf(&counts(&[("x", &[(0, 4), (1, 2)])]), &v).unwrap();
        let row = m.row(0);
        assert!((row[0].1 - 1.0 / 3f64.ln()).abs() < 1e-15);
        assert!((3f64.ln() - 1.0986).abs() < 1e-4);
        assert!((row[1].1 - 0.5 / 2f64.ln()).abs() < 1e-15);
        // tf component of the most frequent token is exactly 1
        assert_eq!(row[0].1 * 3f64.ln(), 1.0);
    }

    #[test]
    fn four_community_fixture() {
        let v = vocab(&[("p", 4), ("q", 2), ("r s", 3)]);
        let m = build_tfidf(
            &counts(&[
                ("c1", &[(0, 2), (2, 8)]),
                ("c2", &[(0, 5), (1, 5)]),
                ("c3", &[(0, 1), (2, 1)]),
                ("c4", &[(0, 3), (1, 1), (2, 6)]),
            ]),
            &v,
        )
        .unwrap();
        let l4 = 4f64.ln();
        let l2 = 2f64.ln();
        let l3 = 3f64.ln();
        let expected = [
            [0.25 / l4, 0.0, 1.0 / l3],
            [1.0 / l4, 1.0 / l2, 0.0],
            [1.0 / l4, 0.0, 1.0 / l3],
            [0.5 / l4, (1.0 / 6.0) / l2, 1.0 / l3],
        ];
        let dense = m.to_dense();
        for r in 0..4 {
            for c in 0..3 {
                assert!((dense[(r, c)] - expected[r][c]).abs() < 1e-15, "({r},{c})");
            }
        }
    }

    #[test]
    fn df_below_two_is_fatal() {
        let v = vocab(&[("a", 1)]);
        assert!(matches!(
            build_tfidf(&counts(&[("x", &[(0, 1)])]), &v),
            Err(Error::Invariant(_))
        ));
    }
}
