mod common;

use common::{five_state, learned_q, max_error, tabular_config, value_iteration};
use symstack::trainer::{masked_argmax, QEnv, TabularMdp, TabularState, Trainer};

fn chain() -> TabularMdp {
    // s0 -> s1 -> s2 -> terminal with reward 1 at the end; action 1 stays put.
    TabularMdp {
        table: vec![
            vec![Some((Some(1), 0.0)), Some((Some(0), 0.0))],
            vec![Some((Some(2), 0.0)), Some((Some(1), 0.0))],
            vec![Some((None, 1.0)), Some((Some(2), 0.0))],
        ],
        starts: vec![0, 1, 2],
        horizon: 20,
    }
}

#[test]
fn chain_matches_hand_computed_optimum() {
    let mdp = chain();
    // Q*(s2, go) = 1, Q*(s1, go) = 0.9, Q*(s0, go) = 0.81; staying costs one discount.
    let star = vec![
        vec![Some(0.81), Some(0.729)],
        vec![Some(0.9), Some(0.81)],
        vec![Some(1.0), Some(0.9)],
    ];
    let vi = value_iteration(&mdp.table, 0.9);
    for (row, srow) in vi.iter().zip(&star) {
        for (v, w) in row.iter().zip(srow) {
            assert!((v.unwrap() - w.unwrap()).abs() < 1e-12);
        }
    }
    let table = mdp.table.clone();
    let mut t = Trainer::new(tabular_config(0.9, 0.5, 3), mdp).unwrap();
    for _ in 0..20_000 {
        t.train_epoch().unwrap();
    }
    let q = learned_q(&t, 3);
    let err = max_error(&table, &q, &star);
    assert!(err < 1e-6, "max |Q - Q*| = {err}, q = {q:?}");
}

#[test]
fn five_state_policy_matches_value_iteration() {
    let mdp = five_state();
    let table = mdp.table.clone();
    let star = value_iteration(&table, 0.9);
    let mut t = Trainer::new(tabular_config(0.9, 0.5, 11), mdp).unwrap();
    for _ in 0..50_000 {
        t.train_epoch().unwrap();
    }
    let q = learned_q(&t, 5);
    for s in 0..5 {
        let mask = t.env.mask(&TabularState { state: s, steps: 0 });
        let best: Vec<f64> = star[s].iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        assert_eq!(masked_argmax(&q[s], &mask), masked_argmax(&best, &mask), "state {s}");
    }
    let err = max_error(&table, &q, &star);
    assert!(err < 1e-2, "max |Q - Q*| = {err}");
}
