use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Which observation pairs contribute residual cross-products.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Dyads sharing at least one node.
    SharedNode,
    /// Same dyad only (one-way clustering on the dyad).
    SameDyad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vcov {
    pub matrix: DMatrix<f64>,
    /// Smallest eigenvalue of the symmetrized meat before flooring.
    pub min_meat_eigenvalue: f64,
    /// True when negative meat eigenvalues were floored at zero.
    pub floored: bool,
}

impl Vcov {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|k| self.matrix[(k, k)].max(0.0).sqrt()).collect()
    }
}

fn canonical((a, b): (usize, usize)) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Meat `Σ x_r e_r e_s x_sᵀ` over related observation pairs, computed as
/// `Σ_node S_k S_kᵀ − Σ_dyad D_d D_dᵀ` so each same-dyad pair counts once.
pub fn dyadic_meat(x: &DMatrix<f64>, residuals: &DVector<f64>, nodes: &[(usize, usize)], relation: Relation) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if residuals.len() != n || nodes.len() != n {
        return Err(Error::invalid("design, residuals and node tags disagree in length"));
    }
    if nodes.iter().any(|&(a, b)| a == b) {
        return Err(Error::invalid("a dyad must join two distinct nodes"));
    }
    let score = |r: usize| x.row(r).transpose() * residuals[r];
    let mut by_dyad: BTreeMap<(usize, usize), DVector<f64>> = BTreeMap::new();
    for r in 0..n {
        *by_dyad.entry(canonical(nodes[r])).or_insert_with(|| DVector::zeros(p)) += score(r);
    }
    let mut meat = DMatrix::zeros(p, p);
    for d in by_dyad.values() {
        meat += d * d.transpose();
    }
    if relation == Relation::SharedNode {
        let mut by_node: BTreeMap<usize, DVector<f64>> = BTreeMap::new();
        for (&(a, b), d) in &by_dyad {
            for k in [a, b] {
                *by_node.entry(k).or_insert_with(|| DVector::zeros(p)) += d;
            }
        }
        meat = -meat;
        for s in by_node.values() {
            meat += s * s.transpose();
        }
    }
    Ok(meat)
}

/// Sandwich `(XᵀX)⁻¹ M (XᵀX)⁻¹` with the dyadic meat and no small-sample
/// correction.
pub fn dyadic_robust_vcov(x: &DMatrix<f64>, residuals: &DVector<f64>, nodes: &[(usize, usize)], relation: Relation) -> Result<Vcov> {
    let meat = dyadic_meat(x, residuals, nodes, relation)?;
    let meat = (&meat + meat.transpose()) * 0.5;
    let bread = (x.transpose() * x)
        .cholesky()
        .ok_or_else(|| Error::Numerical("XᵀX is not positive definite".into()))?
        .inverse();
    let eig = meat.clone().symmetric_eigen();
    let min_meat_eigenvalue = eig.eigenvalues.min();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let floored = min_meat_eigenvalue < -1e-12 * scale;
    let meat = if floored {
        log::warn!("dyadic meat is not positive semidefinite (min eigenvalue {min_meat_eigenvalue:.3e}); flooring at 0");
        let vals = eig.eigenvalues.map(|v| v.max(0.0));
        &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
    } else {
        meat
    };
    let matrix = &bread * meat * &bread;
    Ok(Vcov {
        matrix: (&matrix + matrix.transpose()) * 0.5,
        min_meat_eigenvalue,
        floored,
    })
}
