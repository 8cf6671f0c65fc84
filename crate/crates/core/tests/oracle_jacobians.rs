use proptest::prelude::*;

use commeco::oracle::{benchmark_scenarios, simulate, MapFamily, SyntheticModel};

fn central_difference(map: &MapFamily, x: &[f64], week: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let h = 1e-6;
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        let (mut up, mut dn) = (x.to_vec(), x.to_vec());
        up[j] += h;
        dn[j] -= h;
        let (fu, fd) = (map.step(&up, week), map.step(&dn, week));
        for i in 0..n {
            out[i][j] = (fu[i] - fd[i]) / (2.0 * h);
        }
    }
    out
}

fn families() -> Vec<MapFamily> {
    let mut maps: Vec<MapFamily> = benchmark_scenarios(0).into_iter().map(|s| s.model.map).collect();
    maps.push(MapFamily::LinearVar {
        a: vec![vec![0.5, -0.2, 0.1], vec![0.3, 0.4, 0.0], vec![-0.1, 0.2, 0.6]],
        c: vec![0.1, 0.2, -0.3],
    });
    maps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn analytic_jacobian_matches_finite_differences(
        which in 0usize..9,
        state in prop::collection::vec(0.05f64..1.0, 5),
        week in 0usize..400,
    ) {
        let map = &families()[which];
        let x = &state[..map.dim()];
        let analytic = map.jacobian(x, week);
        let numeric = central_difference(map, x, week);
        for (ra, rn) in analytic.iter().zip(&numeric) {
            for (a, n) in ra.iter().zip(rn) {
                prop_assert!((a - n).abs() <= 1e-6 * (1.0 + a.abs()), "{a} vs {n}");
            }
        }
    }
}

/// Truth for week `w` is the Jacobian at the state that predicts it.
#[test]
fn truth_is_keyed_by_predicted_week() {
    for sc in benchmark_scenarios(4) {
        let names: Vec<String> = (0..sc.model.map.dim()).map(|k| format!("s{k}")).collect();
        let truth = simulate(&sc.model, 60, &names).unwrap();
        assert_eq!(truth.trajectory.len(), 60);
        assert_eq!(truth.jacobians.steps.len(), 59);
        for s in &truth.jacobians.steps {
            assert_eq!(s.matrix, sc.model.map.jacobian(&truth.trajectory[s.week - 1], s.week));
        }
    }
}

#[test]
fn noise_free_linear_map_is_deterministic_recursion() {
    let a = vec![vec![0.9, 0.1], vec![-0.2, 0.8]];
    let c = vec![0.5, 1.0];
    let model = SyntheticModel {
        map: MapFamily::LinearVar { a: a.clone(), c: c.clone() },
        noise: 0.0,
        seed: 0,
        x0: vec![1.0, 2.0],
    };
    let truth = simulate(&model, 30, &["a".into(), "b".into()]).unwrap();
    for w in 1..30 {
        let p = &truth.trajectory[w - 1];
        for i in 0..2 {
            let expect = c[i] + a[i][0] * p[0] + a[i][1] * p[1];
            assert!((truth.trajectory[w][i] - expect).abs() < 1e-12);
        }
    }
}
