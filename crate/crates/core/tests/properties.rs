use proptest::prelude::*;

use distgen_core::bounds::{fsgld_bound, RoundVariance, VarianceTable};
use distgen_core::datasets::{
    shard_indices, standardize_apply, standardize_fit, Dataset, ShardPlan,
};
use distgen_core::distributed::aggregate;
use distgen_core::features::JlMatrix;
use distgen_core::learners::{loss_margin, loss_zero_one, Hypothesis};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jl_projection_is_linear(
        x in prop::collection::vec(-5.0..5.0f64, 12),
        y in prop::collection::vec(-5.0..5.0f64, 12),
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        seed in any::<u64>(),
    ) {
        let jl = JlMatrix::sample(12, 7, seed).unwrap();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let lhs = jl.project(&mix).unwrap();
        let (px, py) = (jl.project(&x).unwrap(), jl.project(&y).unwrap());
        for i in 0..7 {
            prop_assert!(close(lhs[i], a * px[i] + b * py[i], 1e-10));
        }
    }

    #[test]
    fn aggregate_is_linear_and_order_free(
        ws in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 5), 1..8),
        c in -4.0..4.0f64,
        rot in 0usize..8,
    ) {
        let hs: Vec<Hypothesis> = ws.iter().cloned().map(Hypothesis::new).collect();
        let base = aggregate(&hs).unwrap();
        let scaled: Vec<Hypothesis> = ws
            .iter()
            .map(|w| Hypothesis::new(w.iter().map(|v| c * v).collect()))
            .collect();
        let agg_scaled = aggregate(&scaled).unwrap();
        for (s, b) in agg_scaled.w.iter().zip(&base.w) {
            prop_assert!(close(*s, c * b, 1e-12));
        }
        let doubled: Vec<Hypothesis> = ws
            .iter()
            .map(|w| Hypothesis::new(w.iter().map(|v| v + 1.0).collect()))
            .collect();
        for (s, b) in aggregate(&doubled).unwrap().w.iter().zip(&base.w) {
            prop_assert!(close(*s, b + 1.0, 1e-12));
        }
        let mut rotated = hs.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        rotated.reverse();
        prop_assert_eq!(aggregate(&rotated).unwrap(), base);
    }

    #[test]
    fn fsgld_bound_ignores_client_labels_and_round_order(
        vars in prop::collection::vec(prop::collection::vec(prop::collection::vec(0.0..3.0f64, 1..5), 3), 2..5),
        shift in 1usize..4,
    ) {
        let table = VarianceTable {
            cells: vars
                .iter()
                .map(|client| {
                    client
                        .iter()
                        .map(|cell| {
                            cell.iter()
                                .enumerate()
                                .map(|(t, &v)| RoundVariance { round: t, beta: 2.0 + t as f64, eta: 0.1, variance: v })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        };
        let reference = fsgld_bound(&table, 0.7, 2, 6).unwrap();
        let mut relabelled = table.clone();
        let k = relabelled.cells.len();
        relabelled.cells.rotate_left(shift % k);
        for client in &mut relabelled.cells {
            for cell in client.iter_mut() {
                cell.reverse();
            }
        }
        prop_assert!(close(fsgld_bound(&relabelled, 0.7, 2, 6).unwrap(), reference, 1e-12));
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance(
        rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..30),
        constant in -5.0..5.0f64,
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|mut r| { r.push(constant); r }).collect();
        let n = rows.len();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ds = Dataset::from_rows(&rows, labels).unwrap();
        let out = standardize_apply(&ds, &standardize_fit(&ds).unwrap()).unwrap();
        for j in 0..4 {
            let col: Vec<f64> = (0..n).map(|i| out.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-9);
            let spread = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)
                - rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            if spread > 1e-6 {
                prop_assert!((var - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(var < 1e-12);
            }
        }
    }

    #[test]
    fn margin_loss_is_monotone(
        s1 in -3.0..3.0f64,
        s2 in -3.0..3.0f64,
        t1 in 0.0..2.0f64,
        t2 in 0.0..2.0f64,
        y in prop::sample::select(vec![-1.0, 1.0]),
    ) {
        let h = Hypothesis::new(vec![1.0]);
        let loss = |s: f64, t: f64| loss_margin(&[y * s], y, &h, t);
        for s in [s1, s2] {
            for t in [t1, t2] {
                let v = loss(s, t);
                prop_assert!(v == 0.0 || v == 1.0);
            }
            prop_assert!(loss_zero_one(&[y * s], y, &h) == 0.0 || loss_zero_one(&[y * s], y, &h) == 1.0);
        }
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(loss(hi, t1) <= loss(lo, t1));
        let (ta, tb) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(loss(s1, ta) <= loss(s1, tb));
    }

    #[test]
    fn shards_never_repeat_within_a_client(
        pool in 5usize..60,
        clients in 1usize..6,
        seed in any::<u64>(),
    ) {
        let per = pool / 2 + 1;
        let shards = shard_indices(pool, &ShardPlan::new(clients, per, seed)).unwrap();
        prop_assert_eq!(shards.len(), clients);
        for s in &shards {
            let mut sorted = s.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), per);
            prop_assert!(sorted.iter().all(|&i| i < pool));
        }
    }
}
