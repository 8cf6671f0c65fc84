use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use commeco::panel::{dyadic_meat, dyadic_robust_vcov, fit_panel_model, DyadObservation, DyadPanel, PanelModelSpec, Relation, Series, Term};

fn random_panel(seed: u64) -> DyadPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let names: Vec<String> = (0..8).map(|k| format!("n{k}")).collect();
    let mut rows = Vec::new();
    let mut dyads = Vec::new();
    for a in 0..8 {
        for b in a + 1..8 {
            let id = dyads.len();
            dyads.push((names[a].clone(), names[b].clone()));
            for (i, j) in [(a, b), (b, a)] {
                for week in 0..10 {
                    rows.push(DyadObservation {
                        dyad_id: id,
                        i: names[i].clone(),
                        j: names[j].clone(),
                        week,
                        c_value: normal.sample(&mut rng),
                        topic_overlap: rng.random(),
                        user_overlap: rng.random(),
                    });
                }
            }
        }
    }
    DyadPanel { rows, dyads, dropped: 0 }
}

fn spec(standardize: bool) -> PanelModelSpec {
    PanelModelSpec {
        name: "m".into(),
        outcome: Term::level(Series::Interaction, 1),
        regressors: vec![Term::level(Series::User, 0), Term::level(Series::Topic, 0)],
        standardize,
    }
}

#[test]
fn outcome_shift_leaves_slopes_unchanged() {
    for seed in 0..5 {
        let panel = random_panel(seed);
        let mut shifted = panel.clone();
        for r in &mut shifted.rows {
            r.c_value += 17.0;
        }
        let (a, b) = (fit_panel_model(&panel, &spec(false)).unwrap(), fit_panel_model(&shifted, &spec(false)).unwrap());
        for k in 0..2 {
            assert!((a.coef[k] - b.coef[k]).abs() < 1e-9, "{} vs {}", a.coef[k], b.coef[k]);
            assert!((a.se[k] - b.se[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn intervals_are_normal_approximations() {
    let fit = fit_panel_model(&random_panel(8), &spec(true)).unwrap();
    for k in 0..fit.coef.len() {
        assert!((fit.ci_high[k] - fit.ci_low[k] - 3.92 * fit.se[k]).abs() < 1e-12);
        assert!(((fit.ci_high[k] + fit.ci_low[k]) / 2.0 - fit.coef[k]).abs() < 1e-12);
    }
    assert_eq!(fit.n_dyads, 28);
    assert_eq!(fit.n_nodes, 8);
}

/// Same-dyad clustering is one-way cluster-robust on the dyad.
#[test]
fn same_dyad_relation_is_one_way_clustering() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let nodes: Vec<(usize, usize)> = (0..120)
        .map(|_| {
            let a = rng.random_range(0..9);
            let b = (a + rng.random_range(1..9)) % 9;
            (a, b)
        })
        .collect();
    let x = DMatrix::from_fn(120, 3, |_, _| normal.sample(&mut rng));
    let e = DVector::from_fn(120, |_, _| normal.sample(&mut rng));

    let mut clusters: BTreeMap<(usize, usize), DVector<f64>> = BTreeMap::new();
    for (r, &(a, b)) in nodes.iter().enumerate() {
        *clusters.entry((a.min(b), a.max(b))).or_insert_with(|| DVector::zeros(3)) += x.row(r).transpose() * e[r];
    }
    let meat = clusters.values().fold(DMatrix::zeros(3, 3), |m, s| m + s * s.transpose());
    let bread = (x.transpose() * &x).try_inverse().unwrap();
    let expected = &bread * &meat * &bread;

    let got = dyadic_meat(&x, &e, &nodes, Relation::SameDyad).unwrap();
    assert!((got - &meat).amax() < 1e-10);
    let vcov = dyadic_robust_vcov(&x, &e, &nodes, Relation::SameDyad).unwrap();
    assert!(!vcov.floored);
    assert!((vcov.matrix - expected).amax() < 1e-10);
}

#[test]
fn self_loops_are_rejected() {
    let x = DMatrix::from_element(2, 1, 1.0);
    let e = DVector::from_element(2, 1.0);
    assert!(dyadic_meat(&x, &e, &[(0, 1), (2, 2)], Relation::SharedNode).is_err());
}
