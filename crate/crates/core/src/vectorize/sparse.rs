use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContributionRecord, StudyWindow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowNormalization {
    Raw,
    MaxNormalized,
    Tfidf,
}

/// Ordered feature ids with a reverse index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate feature id `{n}`")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Community × feature matrix stored as sorted sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCountMatrix {
    rows: Vec<String>,
    features: FeatureSpace,
    data: Vec<Vec<(usize, f64)>>,
    normalization: RowNormalization,
}

impl SparseCountMatrix {
    /// Validates and normalizes row storage: entries are sorted by column,
    /// explicit zeros are removed, row ids must be unique.
    pub fn new(
        rows: Vec<String>,
        features: FeatureSpace,
        mut data: Vec<Vec<(usize, f64)>>,
        normalization: RowNormalization,
    ) -> Result<Self> {
        if rows.len() != data.len() {
            return Err(Error::invalid("row ids and row data differ in length"));
        }
        let unique: BTreeSet<&String> = rows.iter().collect();
        if unique.len() != rows.len() {
            return Err(Error::invalid("duplicate row id"));
        }
        for row in &mut data {
            row.retain(|&(_, v)| v != 0.0);
            row.sort_by_key(|&(c, _)| c);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid("duplicate column within a row"));
            }
            if row.iter().any(|&(c, v)| c >= features.len() || !v.is_finite() || v < 0.0) {
                return Err(Error::invalid("entry outside feature space or not a finite nonnegative weight"));
            }
        }
        Ok(Self {
            rows,
            features,
            data,
            normalization,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.rows
    }

    pub fn features(&self) -> &FeatureSpace {
        &self.features
    }

    pub fn normalization(&self) -> RowNormalization {
        self.normalization
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.data[i]
    }

    pub fn row_index(&self, id: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == id)
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[(usize, f64)]> {
        self.row_index(id).map(|i| self.row(i))
    }

    /// Rows without any entry (communities with no contributions).
    pub fn empty_rows(&self) -> Vec<&str> {
        self.rows
            .iter()
            .zip(&self.data)
            .filter(|(_, d)| d.is_empty())
            .map(|(r, _)| r.as_str())
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows(), self.n_features());
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `self · dense` where `dense` has one row per feature.
    pub fn mul_dense(&self, dense: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_rows(), dense.ncols());
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                for k in 0..dense.ncols() {
                    out[(r, k)] += v * dense[(c, k)];
                }
            }
        }
        out
    }

    /// `selfᵀ · dense` where `dense` has one row per matrix row.
    pub fn tr_mul_dense(&self, dense: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n_features(), dense.ncols());
        for (r, row) in self.data.iter().enumerate() {
            for &(c, v) in row {
                for k in 0..dense.ncols() {
                    out[(c, k)] += v * dense[(r, k)];
                }
            }
        }
        out
    }
}

pub type CountTable = BTreeMap<String, BTreeMap<String, u64>>;

/// Divides each row by its maximum count, so the largest entry of every
/// nonempty row is exactly 1. Features not present in `features` are dropped.
pub fn max_normalized(
    counts: &CountTable,
    features: &FeatureSpace,
    normalization: RowNormalization,
) -> Result<SparseCountMatrix> {
    let mut rows = Vec::with_capacity(counts.len());
    let mut data = Vec::with_capacity(counts.len());
    for (community, row) in counts {
        let kept: Vec<(usize, u64)> = row
            .iter()
            .filter(|(_, &n)| n > 0)
            .filter_map(|(f, &n)| features.get(f).map(|c| (c, n)))
            .collect();
        let max = kept.iter().map(|&(_, n)| n).max().unwrap_or(0);
        if max == 0 && !row.is_empty() {
            log::debug!("community {community} has no in-space features");
        }
        rows.push(community.clone());
        data.push(
            kept.into_iter()
                .map(|(c, n)| (c, n as f64 / max as f64))
                .collect(),
        );
    }
    SparseCountMatrix::new(rows, features.clone(), data, normalization)
}

/// Author-frequency matrix: `count(c, a) / max_a' count(c, a')`.
pub fn build_author_matrix(counts: &CountTable) -> Result<SparseCountMatrix> {
    let features: BTreeSet<&String> = counts.values().flat_map(|r| r.keys()).collect();
    let space = FeatureSpace::new(features.into_iter().cloned().collect())?;
    let m = max_normalized(counts, &space, RowNormalization::MaxNormalized)?;
    for empty in m.empty_rows() {
        log::warn!("community {empty} has no contributions; its row is empty");
    }
    Ok(m)
}

/// Author matrix restricted to an existing feature space (weekly matrices).
pub fn build_author_matrix_in(counts: &CountTable, space: &FeatureSpace) -> Result<SparseCountMatrix> {
    max_normalized(counts, space, RowNormalization::MaxNormalized)
}

/// Full-period and per-week `(community, author) -> contributions` tables.
pub fn author_counts(
    records: &[ContributionRecord],
    communities: &BTreeSet<String>,
    window: &StudyWindow,
) -> (CountTable, Vec<CountTable>) {
    let mut full: CountTable = communities.iter().map(|c| (c.clone(), BTreeMap::new())).collect();
    let mut weekly: Vec<CountTable> = vec![CountTable::new(); window.weeks()];
    for r in records {
        if !communities.contains(&r.community) {
            continue;
        }
        let Some(w) = window.week_index_of(r.timestamp) else {
            continue;
        };
        *full
            .get_mut(&r.community)
            .unwrap()
            .entry(r.author.clone())
            .or_default() += 1;
        *weekly[w]
            .entry(r.community.clone())
            .or_default()
            .entry(r.author.clone())
            .or_default() += 1;
    }
    (full, weekly)
}
