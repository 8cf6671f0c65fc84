//! Reference scenarios for Jacobian recovery: two families, two sizes,
//! with and without a mid-series sign flip of `C[0][1]`.

use super::models::{MapFamily, SyntheticModel};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScenario {
    pub name: String,
    pub model: SyntheticModel,
    pub t: usize,
    /// Week at which the sign of the `(0, 1)` entry flips, if any.
    pub flip_at: Option<usize>,
}

fn logistic2_chaotic() -> MapFamily {
    MapFamily::CoupledLogistic {
        r: vec![3.8, 3.5],
        b: vec![vec![0.0, 0.02 * 3.8], vec![0.1 * 3.5, 0.0]],
    }
}

fn ricker2_chaotic() -> MapFamily {
    MapFamily::Ricker {
        r: vec![2.6, 2.4],
        a: vec![vec![-2.6, -0.5], vec![-0.6, -2.4]],
    }
}

/// A chaotic pair driving three slower species.
fn logistic5_driven() -> MapFamily {
    let mut b = vec![vec![0.0; 5]; 5];
    b[0][1] = 0.076;
    b[1][0] = 0.35;
    b[2][0] = 0.3;
    b[3][0] = -0.25;
    b[4][1] = 0.3;
    b[2][1] = -0.2;
    b[3][4] = 0.2;
    MapFamily::CoupledLogistic { r: vec![3.8, 3.5, 2.8, 2.9, 3.0], b }
}

fn ricker5_driven() -> MapFamily {
    let r = vec![2.6, 2.4, 1.5, 1.5, 1.5];
    let mut a = vec![vec![0.0; 5]; 5];
    for i in 0..5 {
        a[i][i] = -r[i];
    }
    a[0][1] = -0.5;
    a[1][0] = -0.6;
    a[2][0] = 0.4;
    a[3][0] = -0.4;
    a[4][1] = 0.4;
    a[2][1] = -0.3;
    a[3][4] = 0.3;
    MapFamily::Ricker { r, a }
}

fn logistic2_switch(b01: f64) -> MapFamily {
    MapFamily::CoupledLogistic {
        r: vec![2.5, 2.5],
        b: vec![vec![0.0, b01], vec![0.4, 0.0]],
    }
}

/// Slow relaxation keeps the local slopes identifiable under noise.
fn ricker2_switch(a01: f64) -> MapFamily {
    let r = 0.5;
    MapFamily::Ricker {
        r: vec![r, r],
        a: vec![vec![-r, a01 * r], vec![-0.3 * r, -r]],
    }
}

/// Shift of the intrinsic rates at the switch, so the two regimes occupy
/// different regions of state space.
const RATE_SHIFT: [f64; 5] = [0.0, 0.0, 1.0, -1.0, 1.0];

/// Slowly relaxing logistic species; only the 0-1 pair interacts.
fn logistic5_switch(b01: f64, after: bool) -> MapFamily {
    let r: Vec<f64> = RATE_SHIFT.iter().map(|d| if after { 1.3 * (1.0 + 0.3 * d) } else { 1.3 }).collect();
    let mut b = vec![vec![0.0; 5]; 5];
    b[1][0] = 0.4;
    b[0][1] = b01;
    MapFamily::CoupledLogistic { r, b }
}

fn ricker5_switch(a01: f64, after: bool) -> MapFamily {
    let base = 0.5;
    let r: Vec<f64> = RATE_SHIFT.iter().map(|d| if after { base * (1.0 + 0.6 * d) } else { base }).collect();
    let mut a = vec![vec![0.0; 5]; 5];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = -base;
    }
    a[1][0] = -0.3 * base;
    a[0][1] = a01 * base;
    MapFamily::Ricker { r, a }
}

fn switch(before: MapFamily, after: MapFamily, at: usize) -> MapFamily {
    MapFamily::RegimeSwitch {
        before: Box::new(before),
        after: Box::new(after),
        switch_at: at,
    }
}

/// Eight scenarios at `T = 400` and log-space noise sd 0.01.
pub fn benchmark_scenarios(seed: u64) -> Vec<BenchmarkScenario> {
    const T: usize = 400;
    let half = T / 2;
    let mk = |name: &str, map: MapFamily, x0: Vec<f64>, flip_at: Option<usize>| BenchmarkScenario {
        name: name.to_string(),
        model: SyntheticModel { map, noise: 0.01, seed, x0 },
        t: T,
        flip_at,
    };
    let x5 = vec![0.4, 0.2, 0.5, 0.5, 0.5];
    vec![
        mk("logistic-2", logistic2_chaotic(), vec![0.4, 0.2], None),
        mk("ricker-2", ricker2_chaotic(), vec![0.4, 0.2], None),
        mk("logistic-5", logistic5_driven(), x5.clone(), None),
        mk("ricker-5", ricker5_driven(), x5, None),
        mk("logistic-2-flip", switch(logistic2_switch(0.5), logistic2_switch(-0.5), half), vec![0.5, 0.5], Some(half)),
        mk("ricker-2-flip", switch(ricker2_switch(-0.8), ricker2_switch(0.8), half), vec![0.5, 0.8], Some(half)),
        mk("logistic-5-flip", switch(logistic5_switch(0.8, false), logistic5_switch(-0.8, true), half), vec![0.3; 5], Some(half)),
        mk("ricker-5-flip", switch(ricker5_switch(-0.8, false), ricker5_switch(0.8, true), half), vec![0.8; 5], Some(half)),
    ]
}
