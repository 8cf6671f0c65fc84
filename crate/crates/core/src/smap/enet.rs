//! Weighted elastic net by cyclic coordinate descent.
//!
//! Minimizes over intercept `c0` and slopes `c`
//!
//! ```text
//! Σ_t w_t (y_t - c0 - x_tᵀ c)² / (2 Σ_t w_t) + λ (α ‖c‖₁ + (1 - α) ‖c‖₂² / 2)
//! ```
//!
//! The intercept is unpenalized and eliminated by weighted centering, so the
//! sweeps run on the weighted covariance of the centered design.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetOptions {
    pub lambda: f64,
    /// l1 share of the penalty, in [0, 1].
    pub alpha: f64,
    /// Stop when the largest coefficient change in a sweep falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl ElasticNetOptions {
    pub fn new(lambda: f64, alpha: f64) -> Self {
        Self {
            lambda,
            alpha,
            tol: 1e-7,
            max_sweeps: 10_000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub sweeps: usize,
    /// Penalized objective after each sweep (only when traced).
    pub trace: Vec<f64>,
}

/// A weighted design shared by several responses: weighted means and the
/// weighted covariance `G = Σ v_t x̃_t x̃_tᵀ` with `v = w / Σw`.
#[derive(Debug, Clone)]
pub struct WeightedDesign {
    rows: Vec<Vec<f64>>,
    weights: Vec<f64>,
    x_mean: Vec<f64>,
    gram: Vec<Vec<f64>>,
}

impl WeightedDesign {
    pub fn new(rows: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows.len() != weights.len() {
            return Err(Error::invalid("design needs one weight per row and at least one row"));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::invalid("ragged design rows"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative with a positive sum"));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut x_mean = vec![0.0; p];
        for (r, &v) in rows.iter().zip(&weights) {
            for (m, x) in x_mean.iter_mut().zip(r) {
                *m += v * x;
            }
        }
        let mut gram = vec![vec![0.0; p]; p];
        for (r, &v) in rows.iter().zip(&weights) {
            for i in 0..p {
                let di = r[i] - x_mean[i];
                for k in i..p {
                    gram[i][k] += v * di * (r[k] - x_mean[k]);
                }
            }
        }
        for i in 0..p {
            for k in 0..i {
                gram[i][k] = gram[k][i];
            }
        }
        Ok(Self {
            rows,
            weights,
            x_mean,
            gram,
        })
    }

    pub fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    fn centered_response(&self, y: &[f64]) -> (f64, Vec<f64>, f64) {
        let y_mean: f64 = y.iter().zip(&self.weights).map(|(y, v)| v * y).sum();
        let p = self.n_features();
        let mut g = vec![0.0; p];
        let mut syy = 0.0;
        for ((r, &yt), &v) in self.rows.iter().zip(y).zip(&self.weights) {
            let dy = yt - y_mean;
            syy += v * dy * dy;
            for i in 0..p {
                g[i] += v * (r[i] - self.x_mean[i]) * dy;
            }
        }
        (y_mean, g, syy)
    }

    fn objective(&self, c: &[f64], g: &[f64], syy: f64, opts: &ElasticNetOptions) -> f64 {
        let p = c.len();
        let mut quad = 0.0;
        for i in 0..p {
            for k in 0..p {
                quad += c[i] * self.gram[i][k] * c[k];
            }
        }
        let lin: f64 = c.iter().zip(g).map(|(a, b)| a * b).sum();
        let l1: f64 = c.iter().map(|x| x.abs()).sum();
        let l2: f64 = c.iter().map(|x| x * x).sum();
        0.5 * (syy - 2.0 * lin + quad) + opts.lambda * (opts.alpha * l1 + (1.0 - opts.alpha) * l2 / 2.0)
    }

    pub fn fit(&self, y: &[f64], opts: &ElasticNetOptions) -> Result<ElasticNetFit> {
        self.fit_inner(y, opts, false)
    }

    /// As [`fit`](Self::fit), recording the objective after every sweep.
    pub fn fit_traced(&self, y: &[f64], opts: &ElasticNetOptions) -> Result<ElasticNetFit> {
        self.fit_inner(y, opts, true)
    }

    fn fit_inner(&self, y: &[f64], opts: &ElasticNetOptions, traced: bool) -> Result<ElasticNetFit> {
        opts.validate()?;
        if y.len() != self.rows.len() {
            return Err(Error::invalid("response length differs from design rows"));
        }
        let p = self.n_features();
        let (y_mean, g, syy) = self.centered_response(y);
        let l1 = opts.lambda * opts.alpha;
        let l2 = opts.lambda * (1.0 - opts.alpha);
        let mut c = vec![0.0; p];
        let mut trace = Vec::new();
        let mut last_change = f64::INFINITY;
        for sweep in 1..=opts.max_sweeps {
            let mut max_change: f64 = 0.0;
            for i in 0..p {
                let denom = self.gram[i][i] + l2;
                let new = if denom > 0.0 {
                    let mut z = g[i];
                    for k in 0..p {
                        if k != i {
                            z -= self.gram[i][k] * c[k];
                        }
                    }
                    soft_threshold(z, l1) / denom
                } else {
                    0.0
                };
                max_change = max_change.max((new - c[i]).abs());
                c[i] = new;
            }
            if traced {
                trace.push(self.objective(&c, &g, syy, opts));
            }
            last_change = max_change;
            if max_change < opts.tol {
                let intercept = y_mean - c.iter().zip(&self.x_mean).map(|(a, m)| a * m).sum::<f64>();
                return Ok(ElasticNetFit {
                    intercept,
                    coef: c,
                    sweeps: sweep,
                    trace,
                });
            }
        }
        Err(Error::NonConvergence {
            sweeps: opts.max_sweeps,
            max_change: last_change,
        })
    }

    /// Weighted residual correlations `Σ v_t x̃_ti r_t` at a fitted solution.
    pub fn residual_correlations(&self, y: &[f64], fit: &ElasticNetFit) -> Vec<f64> {
        let (_, g, _) = self.centered_response(y);
        (0..self.n_features())
            .map(|i| g[i] - (0..self.n_features()).map(|k| self.gram[i][k] * fit.coef[k]).sum::<f64>())
            .collect()
    }

    /// Largest violation of the elastic-net optimality conditions.
    pub fn kkt_residual(&self, y: &[f64], fit: &ElasticNetFit, opts: &ElasticNetOptions) -> f64 {
        let l1 = opts.lambda * opts.alpha;
        let l2 = opts.lambda * (1.0 - opts.alpha);
        self.residual_correlations(y, fit)
            .into_iter()
            .zip(&fit.coef)
            .map(|(corr, &c)| {
                if c != 0.0 {
                    (corr - l1 * c.signum() - l2 * c).abs()
                } else {
                    (corr.abs() - l1).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.5, 2.0), 0.0);
    }

    #[test]
    fn rejects_bad_penalties() {
        let d = WeightedDesign::new(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        assert!(d.fit(&[1.0, 2.0], &ElasticNetOptions::new(-1.0, 0.5)).is_err());
        assert!(d.fit(&[1.0, 2.0], &ElasticNetOptions::new(1.0, 1.5)).is_err());
    }

    #[test]
    fn full_shrinkage_gives_weighted_mean() {
        let rows = vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![0.0, 3.0], vec![4.0, 1.0]];
        let w = vec![1.0, 2.0, 0.5, 1.0];
        let y = [1.0, 3.0, 2.0, 5.0];
        let d = WeightedDesign::new(rows, w.clone()).unwrap();
        let fit = d.fit(&y, &ElasticNetOptions::new(1e6, 1.0)).unwrap();
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        let wmean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((fit.intercept - wmean).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_response() {
        let rows: Vec<Vec<f64>> = (0..12).map(|t| vec![t as f64, ((t * 7) % 5) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let d = WeightedDesign::new(rows, vec![1.0; 12]).unwrap();
        let fit = d.fit(&y, &ElasticNetOptions::new(0.0, 0.5)).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-6);
        assert!((fit.coef[1] + 0.5).abs() < 1e-6);
        assert!((fit.intercept - 1.5).abs() < 1e-5);
    }

    #[test]
    fn non_convergence_reported() {
        let rows: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, t as f64 + 1e-3 * (t % 2) as f64]).collect();
        let y: Vec<f64> = (0..10).map(|t| (t % 3) as f64).collect();
        let d = WeightedDesign::new(rows, vec![1.0; 10]).unwrap();
        let mut opts = ElasticNetOptions::new(0.0, 0.5);
        opts.max_sweeps = 3;
        assert!(matches!(d.fit(&y, &opts), Err(Error::NonConvergence { sweeps: 3, .. })));
    }
}
