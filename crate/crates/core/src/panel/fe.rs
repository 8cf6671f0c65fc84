use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Design after subtracting group means. Rows of groups with a single
/// observation, or whose demeaned values are all zero, are removed.
#[derive(Debug, Clone, PartialEq)]
pub struct Demeaned {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    /// Original row index of each kept row.
    pub kept: Vec<usize>,
}

pub fn within_transform(y: &[f64], columns: &[(String, Vec<f64>)], groups: &[usize]) -> Result<Demeaned> {
    let n = y.len();
    if groups.len() != n || columns.iter().any(|(_, c)| c.len() != n) {
        return Err(Error::invalid("outcome, regressors and groups differ in length"));
    }
    if columns.is_empty() {
        return Err(Error::invalid("no regressors"));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (r, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(r);
    }
    let p = columns.len();
    let mut kept = Vec::new();
    let mut ys = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); p];
    for rows in members.values() {
        if rows.len() < 2 {
            continue;
        }
        let m = rows.len() as f64;
        let demean = |v: &[f64]| {
            let mu = rows.iter().map(|&r| v[r]).sum::<f64>() / m;
            rows.iter().map(|&r| v[r] - mu).collect::<Vec<f64>>()
        };
        let dy = demean(y);
        let dx: Vec<Vec<f64>> = columns.iter().map(|(_, c)| demean(c)).collect();
        if dy.iter().chain(dx.iter().flatten()).all(|&v| v == 0.0) {
            continue;
        }
        kept.extend_from_slice(rows);
        ys.extend(dy);
        for (k, d) in dx.into_iter().enumerate() {
            xs[k].extend(d);
        }
    }
    if kept.is_empty() {
        return Err(Error::invalid("no group has two or more informative rows"));
    }
    for (k, (name, raw)) in columns.iter().enumerate() {
        let scale = raw.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if xs[k].iter().all(|v| v.abs() <= 1e-12 * scale) {
            return Err(Error::ZeroVariance(name.clone()));
        }
    }
    let rows = kept.len();
    Ok(Demeaned {
        y: DVector::from_vec(ys),
        x: DMatrix::from_fn(rows, p, |r, k| xs[k][r]),
        names: columns.iter().map(|(n, _)| n.clone()).collect(),
        kept,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
}

/// Relative pivot size below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Least squares through a column-pivoted QR.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(Error::invalid("design, outcome and names disagree in shape"));
    }
    if n < p {
        return Err(Error::RankDeficient { columns: names.to_vec() });
    }
    let qr = x.clone().col_piv_qr();
    let r = qr.r();
    let mut order = DMatrix::from_fn(1, p, |_, k| k as f64);
    qr.p().permute_columns(&mut order);
    let lead = r[(0, 0)].abs();
    let rank = (0..p).take_while(|&k| r[(k, k)].abs() > RANK_TOL * lead.max(f64::MIN_POSITIVE)).count();
    if rank < p {
        let mut columns: Vec<String> = (rank..p).map(|k| names[order[(0, k)] as usize].clone()).collect();
        columns.sort();
        return Err(Error::RankDeficient { columns });
    }
    // A P = Q R, so R z = Qᵀ y and coef[P k] = z[k].
    let qty = qr.q().transpose() * y;
    let z = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let mut coef = DVector::zeros(p);
    for k in 0..p {
        coef[order[(0, k)] as usize] = z[k];
    }
    let residuals = y - x * &coef;
    Ok(OlsFit { coef, residuals })
}
