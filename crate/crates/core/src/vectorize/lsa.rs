//! Latent semantic analysis via seeded randomized truncated SVD.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::sparse::{FeatureSpace, SparseCountMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FittedOn {
    Authors,
    Topics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsaConfig {
    pub dimension: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl LsaConfig {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self {
            dimension,
            oversampling: 15,
            power_iterations: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsaModel {
    pub dimension: usize,
    pub features: FeatureSpace,
    /// `n_features × dimension`, orthonormal columns.
    pub basis: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub seed: u64,
    pub fitted_on: FittedOn,
}

fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Randomized range finder with power iterations, followed by an exact SVD of
/// the small projected matrix. `k` is reduced to the numerical rank.
pub fn fit_lsa(matrix: &SparseCountMatrix, cfg: &LsaConfig, fitted_on: FittedOn) -> Result<LsaModel> {
    let (m, n) = (matrix.n_rows(), matrix.n_features());
    if cfg.dimension == 0 {
        return Err(Error::invalid("LSA dimension must be positive"));
    }
    if m == 0 || n == 0 || matrix.nnz() == 0 {
        return Err(Error::invalid("cannot fit LSA on an empty matrix"));
    }
    let max_rank = m.min(n);
    let mut k = cfg.dimension;
    if k > max_rank {
        log::warn!("LSA dimension {k} exceeds min(rows, cols) = {max_rank}; reducing");
        k = max_rank;
    }
    let width = (k + cfg.oversampling).min(max_rank);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = DMatrix::from_fn(n, width, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(&matrix.mul_dense(&omega));
    for _ in 0..cfg.power_iterations {
        let z = orthonormalize(&matrix.tr_mul_dense(&q));
        q = orthonormalize(&matrix.mul_dense(&z));
    }
    // B = Qᵀ A, held transposed as Aᵀ Q (n × width).
    let bt = matrix.tr_mul_dense(&q);
    let svd = SVD::new(bt, true, false);
    let u = svd.u.ok_or_else(|| Error::Numerical("SVD did not return vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let sigma_max = svd.singular_values[order[0]];
    let tol = sigma_max * (m.max(n) as f64) * f64::EPSILON * 16.0;
    let rank = order
        .iter()
        .take_while(|&&i| svd.singular_values[i] > tol)
        .count();
    if k > rank {
        log::warn!("LSA dimension {k} exceeds numerical rank {rank}; reducing");
        k = rank;
    }
    if k == 0 {
        return Err(Error::Numerical("matrix has numerical rank 0".into()));
    }
    // Left singular vectors of Bᵀ are right singular vectors of A.
    let mut basis = DMatrix::zeros(n, k);
    let mut singular_values = Vec::with_capacity(k);
    for (j, &i) in order.iter().take(k).enumerate() {
        basis.set_column(j, &u.column(i));
        singular_values.push(svd.singular_values[i]);
    }
    Ok(LsaModel {
        dimension: k,
        features: matrix.features().clone(),
        basis,
        singular_values,
        seed: cfg.seed,
        fitted_on,
    })
}

pub fn feature_hash(space: &FeatureSpace) -> String {
    let mut h = Sha256::new();
    for name in space.names() {
        h.update(name.as_bytes());
        h.update([0u8]);
    }
    format!("{:x}", h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dimension: usize,
    n_features: usize,
    feature_hash: String,
    seed: u64,
    fitted_on: FittedOn,
    features: Vec<String>,
}

const FORMAT: &str = "commeco-lsa/1";

impl LsaModel {
    /// Projection `row · basis` of a sparse row over this model's features.
    pub fn project_row(&self, row: &[(usize, f64)]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dimension);
        for &(c, v) in row {
            for k in 0..self.dimension {
                out[k] += v * self.basis[(c, k)];
            }
        }
        out
    }

    /// Projects every row of `matrix`, which must share this model's feature space.
    pub fn project(&self, matrix: &SparseCountMatrix) -> Result<Vec<DVector<f64>>> {
        if matrix.features() != &self.features {
            return Err(Error::invalid(
                "matrix feature space differs from the LSA model's; build it with the model's features",
            ));
        }
        Ok((0..matrix.n_rows()).map(|i| self.project_row(matrix.row(i))).collect())
    }

    /// JSON header line, then little-endian f64 singular values and the
    /// row-major `n_features × dimension` basis.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            dimension: self.dimension,
            n_features: self.features.len(),
            feature_hash: feature_hash(&self.features),
            seed: self.seed,
            fitted_on: self.fitted_on,
            features: self.features.names().to_vec(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.singular_values {
            w.write_all(&s.to_le_bytes())?;
        }
        for r in 0..self.basis.nrows() {
            for c in 0..self.basis.ncols() {
                w.write_all(&self.basis[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.format != FORMAT {
            return Err(Error::invalid(format!("unsupported LSA model format `{}`", header.format)));
        }
        let features = FeatureSpace::new(header.features)?;
        if features.len() != header.n_features || feature_hash(&features) != header.feature_hash {
            return Err(Error::invalid("LSA model header feature hash mismatch"));
        }
        let mut read_f64 = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let k = header.dimension;
        let singular_values = (0..k).map(|_| read_f64()).collect::<Result<Vec<_>>>()?;
        let mut basis = DMatrix::zeros(features.len(), k);
        for row in 0..features.len() {
            for col in 0..k {
                basis[(row, col)] = read_f64()?;
            }
        }
        Ok(Self {
            dimension: k,
            features,
            basis,
            singular_values,
            seed: header.seed,
            fitted_on: header.fitted_on,
        })
    }
}
