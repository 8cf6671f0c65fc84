use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::smap::{JacobianSequence, JacobianStep};

/// Deterministic part of a synthetic map, `x(t+1) = f(x(t))` before noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum MapFamily {
    /// `x(t+1) = c + A x(t) + ε`.
    LinearVar { a: Vec<Vec<f64>>, c: Vec<f64> },
    /// `x_i(t+1) = x_i(t) exp(r_i + Σ_j A_ij x_j(t) + ε_i)`.
    Ricker { r: Vec<f64>, a: Vec<Vec<f64>> },
    /// `x_i(t+1) = x_i(t) (r_i − r_i x_i(t) − Σ_{j≠i} B_ij x_j(t)) exp(ε_i)`.
    CoupledLogistic { r: Vec<f64>, b: Vec<Vec<f64>> },
    /// `before` drives transitions into weeks `< switch_at`, `after` the rest.
    RegimeSwitch {
        before: Box<MapFamily>,
        after: Box<MapFamily>,
        switch_at: usize,
    },
}

fn square(m: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("{what} must be {n}x{n}")));
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    Ok(())
}

fn vector(v: &[f64], n: usize, what: &str) -> Result<()> {
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} must hold {n} finite values")));
    }
    Ok(())
}

pub fn spectral_radius(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

impl MapFamily {
    pub fn dim(&self) -> usize {
        match self {
            MapFamily::LinearVar { c, .. } => c.len(),
            MapFamily::Ricker { r, .. } | MapFamily::CoupledLogistic { r, .. } => r.len(),
            MapFamily::RegimeSwitch { before, .. } => before.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::invalid("model has no species"));
        }
        match self {
            MapFamily::LinearVar { a, c } => {
                square(a, n, "A")?;
                vector(c, n, "c")?;
                let rho = spectral_radius(a);
                if rho >= 1.0 {
                    return Err(Error::invalid(format!("linear model is not stationary: spectral radius {rho}")));
                }
            }
            MapFamily::Ricker { r, a } => {
                square(a, n, "A")?;
                vector(r, n, "r")?;
            }
            MapFamily::CoupledLogistic { r, b } => {
                square(b, n, "B")?;
                vector(r, n, "r")?;
            }
            MapFamily::RegimeSwitch { before, after, .. } => {
                if matches!(**before, MapFamily::RegimeSwitch { .. }) || matches!(**after, MapFamily::RegimeSwitch { .. }) {
                    return Err(Error::invalid("nested regime switches are not supported"));
                }
                before.validate()?;
                after.validate()?;
                if after.dim() != n || std::mem::discriminant(&**before) != std::mem::discriminant(&**after) {
                    return Err(Error::invalid("both regimes must share family and size"));
                }
            }
        }
        Ok(())
    }

    /// Positive-state families need strictly positive states.
    pub fn positive(&self) -> bool {
        match self {
            MapFamily::LinearVar { .. } => false,
            MapFamily::RegimeSwitch { before, .. } => before.positive(),
            _ => true,
        }
    }

    /// Regime in force for the transition into `week`.
    fn regime(&self, week: usize) -> &MapFamily {
        match self {
            MapFamily::RegimeSwitch { before, after, switch_at } => {
                if week < *switch_at {
                    before
                } else {
                    after
                }
            }
            other => other,
        }
    }

    /// Noise-free map for the transition into `week`.
    pub fn step(&self, x: &[f64], week: usize) -> Vec<f64> {
        let n = x.len();
        match self.regime(week) {
            MapFamily::LinearVar { a, c } => (0..n).map(|i| c[i] + (0..n).map(|j| a[i][j] * x[j]).sum::<f64>()).collect(),
            MapFamily::Ricker { r, a } => (0..n)
                .map(|i| x[i] * (r[i] + (0..n).map(|j| a[i][j] * x[j]).sum::<f64>()).exp())
                .collect(),
            MapFamily::CoupledLogistic { r, b } => (0..n)
                .map(|i| {
                    let comp: f64 = (0..n).filter(|&j| j != i).map(|j| b[i][j] * x[j]).sum();
                    x[i] * (r[i] - r[i] * x[i] - comp)
                })
                .collect(),
            MapFamily::RegimeSwitch { .. } => unreachable!("validated: no nested switches"),
        }
    }

    /// Analytic Jacobian `∂f_i/∂x_j` of [`step`](Self::step) at `x`.
    pub fn jacobian(&self, x: &[f64], week: usize) -> Vec<Vec<f64>> {
        let n = x.len();
        match self.regime(week) {
            MapFamily::LinearVar { a, .. } => a.clone(),
            MapFamily::Ricker { a, .. } => {
                let f = self.step(x, week);
                (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| f[i] * a[i][j] + if i == j { f[i] / x[i] } else { 0.0 })
                            .collect()
                    })
                    .collect()
            }
            MapFamily::CoupledLogistic { r, b } => (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            if i == j {
                                let comp: f64 = (0..n).filter(|&k| k != i).map(|k| b[i][k] * x[k]).sum();
                                r[i] - 2.0 * r[i] * x[i] - comp
                            } else {
                                -x[i] * b[i][j]
                            }
                        })
                        .collect()
                })
                .collect(),
            MapFamily::RegimeSwitch { .. } => unreachable!("validated: no nested switches"),
        }
    }
}

/// A seeded stochastic model: the map plus process noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    #[serde(flatten)]
    pub map: MapFamily,
    /// Noise sd: additive for linear models, in log space otherwise.
    pub noise: f64,
    pub seed: u64,
    pub x0: Vec<f64>,
}

/// Simulated trajectory with the analytic Jacobian at every visited state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub trajectory: Vec<Vec<f64>>,
    /// `J` at `x(w−1)` keyed by the predicted week `w`, as in S-Map output.
    pub jacobians: JacobianSequence,
}

impl GroundTruth {
    pub fn signs(&self) -> Vec<Vec<Vec<i8>>> {
        self.jacobians
            .steps
            .iter()
            .map(|s| s.matrix.iter().map(|row| row.iter().map(|v| v.partial_cmp(&0.0).map_or(0, |o| o as i8)).collect()).collect())
            .collect()
    }

    /// Per-community series `series[c][t]` for use as group sizes.
    pub fn series(&self) -> Vec<Vec<Option<f64>>> {
        let n = self.trajectory.first().map_or(0, Vec::len);
        (0..n).map(|c| self.trajectory.iter().map(|x| Some(x[c])).collect()).collect()
    }
}

const DIVERGENCE_BOUND: f64 = 1e12;

pub fn simulate(model: &SyntheticModel, t: usize, names: &[String]) -> Result<GroundTruth> {
    if t < 20 {
        return Err(Error::invalid(format!("need at least 20 time steps, got {t}")));
    }
    model.map.validate()?;
    let n = model.map.dim();
    vector(&model.x0, n, "x0")?;
    if names.len() != n {
        return Err(Error::invalid(format!("{} names for {n} species", names.len())));
    }
    if !(model.noise >= 0.0) {
        return Err(Error::invalid("noise sd must be >= 0"));
    }
    let positive = model.map.positive();
    if positive && model.x0.iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("initial state must be positive"));
    }
    let normal = Normal::new(0.0, model.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let mut traj = vec![model.x0.clone()];
    let mut steps = Vec::with_capacity(t - 1);
    for w in 1..t {
        let prev = &traj[w - 1];
        let det = model.map.step(prev, w);
        let next: Vec<f64> = det
            .iter()
            .map(|&v| {
                let e = if model.noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                if positive {
                    v * e.exp()
                } else {
                    v + e
                }
            })
            .collect();
        let bad = next
            .iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND || (positive && *v <= 0.0));
        if bad {
            return Err(Error::Divergent {
                time: w,
                detail: format!("state {next:?} from {prev:?}; model {:?}", model.map),
            });
        }
        let matrix = model.map.jacobian(prev, w);
        let intercepts = (0..n)
            .map(|i| det[i] - (0..n).map(|j| matrix[i][j] * prev[j]).sum::<f64>())
            .collect();
        steps.push(JacobianStep { week: w, intercepts, matrix });
        traj.push(next);
    }
    Ok(GroundTruth {
        trajectory: traj,
        jacobians: JacobianSequence {
            cluster: "truth".into(),
            communities: names.to_vec(),
            steps,
        },
    })
}

/// Central-difference Jacobian of the noise-free map.
pub fn finite_difference_jacobian(map: &MapFamily, x: &[f64], week: usize, h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[j] += h;
        dn[j] -= h;
        let (fu, fd) = (map.step(&up, week), map.step(&dn, week));
        for i in 0..n {
            out[i][j] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    fn lv2(a12: f64, a21: f64) -> MapFamily {
        MapFamily::Ricker {
            r: vec![0.5, 0.4],
            a: vec![vec![-0.5, a12], vec![a21, -0.4]],
        }
    }

    #[test]
    fn decoupled_cross_jacobians_are_zero() {
        let m = SyntheticModel { map: lv2(0.0, 0.0), noise: 0.05, seed: 1, x0: vec![0.5, 0.7] };
        let g = simulate(&m, 50, &names(2)).unwrap();
        for s in &g.jacobians.steps {
            assert_eq!(s.matrix[0][1], 0.0);
            assert_eq!(s.matrix[1][0], 0.0);
        }
    }

    #[test]
    fn competitive_lv_signs_and_fd_agreement() {
        let m = SyntheticModel { map: lv2(-0.2, -0.3), noise: 0.05, seed: 2, x0: vec![0.5, 0.7] };
        let g = simulate(&m, 100, &names(2)).unwrap();
        for (s, x) in g.jacobians.steps.iter().zip(&g.trajectory) {
            assert!(s.matrix[0][1] < 0.0 && s.matrix[1][0] < 0.0);
            let fd = finite_difference_jacobian(&m.map, x, s.week, 1e-6);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((fd[i][j] - s.matrix[i][j]).abs() < 1e-4);
                }
            }
        }
    }

    #[test]
    fn regime_switch_flips_truth_sign() {
        let map = MapFamily::RegimeSwitch {
            before: Box::new(lv2(-0.2, -0.3)),
            after: Box::new(lv2(0.2, -0.3)),
            switch_at: 50,
        };
        let m = SyntheticModel { map, noise: 0.01, seed: 3, x0: vec![0.5, 0.7] };
        let g = simulate(&m, 100, &names(2)).unwrap();
        for s in &g.jacobians.steps {
            assert_eq!(s.matrix[0][1] > 0.0, s.week >= 50, "week {}", s.week);
        }
    }

    #[test]
    fn linear_fd_is_exact() {
        let a = vec![vec![0.5, 0.2], vec![-0.1, 0.3]];
        let map = MapFamily::LinearVar { a: a.clone(), c: vec![0.1, 0.0] };
        let fd = finite_difference_jacobian(&map, &[0.3, -1.2], 1, 1e-6);
        for i in 0..2 {
            for j in 0..2 {
                assert!((fd[i][j] - a[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn validation_and_divergence() {
        let explosive = MapFamily::LinearVar { a: vec![vec![1.1]], c: vec![0.0] };
        assert!(explosive.validate().is_err());
        let m = SyntheticModel {
            map: MapFamily::Ricker { r: vec![3.0], a: vec![vec![2.0]] },
            noise: 0.0,
            seed: 0,
            x0: vec![1.0],
        };
        assert!(matches!(simulate(&m, 30, &names(1)), Err(Error::Divergent { .. })));
        let short = SyntheticModel { map: lv2(0.0, 0.0), noise: 0.0, seed: 0, x0: vec![0.5, 0.5] };
        assert!(simulate(&short, 19, &names(2)).is_err());
    }

    #[test]
    fn reproducible_and_serializable() {
        let m = SyntheticModel { map: lv2(-0.1, 0.1), noise: 0.02, seed: 9, x0: vec![0.5, 0.7] };
        let a = simulate(&m, 40, &names(2)).unwrap();
        let b = simulate(&m, 40, &names(2)).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"family\":\"ricker\""));
        let back: SyntheticModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
