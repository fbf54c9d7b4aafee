use proptest::prelude::*;
use proptest::test_runner::FileFailurePersistence;

use vec_offload::algorithm::Algorithm;
use vec_offload::instance::enumerate;
use vec_offload::lp::{build_rsu_lp, solve_lp, LinearProgram};
use vec_offload::model::validate;
use vec_offload::oracle::{random_instance, trial_rng, InstanceFamily};
use vec_offload::saround::{decompose, floor_rd};

fn family() -> impl Strategy<Value = InstanceFamily> {
    (1usize..25, 1usize..5, 2u32..40, 1u32..10).prop_map(|(n, m, b, c)| InstanceFamily {
        tasks: (1, n),
        rsus: (1, m),
        rbs: (2, b),
        cus: (1, c),
    })
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 96,
        failure_persistence: Some(Box::new(FileFailurePersistence::WithSource("regressions"))),
        ..ProptestConfig::default()
    })]

    #[test]
    fn every_algorithm_is_feasible(fam in family(), seed in any::<u64>()) {
        let inst = random_instance(&fam, &mut trial_rng(seed, 0));
        let pool = enumerate(&inst, true);
        for alg in Algorithm::ALL {
            let a = alg.run(&pool, &inst);
            let v = validate(&a, &inst);
            prop_assert!(v.is_empty(), "{alg}: {v:?}");
            let sum: f64 = a.selected.iter().map(|s| s.utility).sum();
            prop_assert!((sum - a.total_utility).abs() < 1e-9 * sum.max(1.0));
        }
    }

    #[test]
    fn decomposition_splits_weights(fam in family(), seed in any::<u64>()) {
        let inst = random_instance(&fam, &mut trial_rng(seed, 1));
        let pool = enumerate(&inst, true);
        let w = pool.base_utilities();
        for rsu in pool.all_rsus().collect::<Vec<_>>() {
            let sel = floor_rd(&pool, rsu, &w);
            let (w1, w2) = decompose(&w, &pool, rsu, &sel);
            for i in 0..w.len() {
                prop_assert!((w1[i] + w2[i] - w[i]).abs() <= 4.0 * f64::EPSILON * w[i].abs().max(w1[i].abs()));
            }
            for &id in pool.on_rsu(rsu) {
                prop_assert_eq!(w2[id], 0.0);
            }
        }
    }

    #[test]
    fn rsu_lp_solutions_are_feasible_vertices(fam in family(), seed in any::<u64>()) {
        let inst = random_instance(&fam, &mut trial_rng(seed, 2));
        let pool = enumerate(&inst, true);
        let w = pool.base_utilities();
        for rsu in pool.all_rsus().collect::<Vec<_>>() {
            let lp = build_rsu_lp(&pool, rsu, &w).unwrap();
            let sol = solve_lp(&lp.lp).unwrap();
            let x = &sol.values;
            prop_assert!(x.iter().all(|&v| v >= -1e-9));
            for (r, c) in lp.lp.constraints.iter().enumerate() {
                prop_assert!(lp.lp.row_activity(r, x) <= c.rhs + 1e-7);
            }
            let obj: f64 = lp.lp.objective.iter().zip(x).map(|(c, v)| c * v).sum();
            prop_assert!((obj - sol.objective_value).abs() < 1e-7 * obj.abs().max(1.0));
            let positive = x[..lp.vars.len()].iter().filter(|&&v| v > 1e-9).count();
            prop_assert!(positive <= lp.lp.num_rows());
        }
    }

    /// On random dense LPs with a known feasible point, the optimum is at
    /// least that point's objective.
    #[test]
    fn simplex_beats_a_feasible_point(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..5.0, 4), 1..5),
        obj in prop::collection::vec(0.0f64..3.0, 4),
        point in prop::collection::vec(0.0f64..2.0, 4),
    ) {
        let mut lp = LinearProgram::new(obj.clone());
        for r in &rows {
            let act: f64 = r.iter().zip(&point).map(|(a, x)| a * x).sum();
            lp.add_dense_row(r, act + 1.0).unwrap();
        }
        // Keep the problem bounded.
        lp.add_dense_row(&[1.0; 4], 100.0).unwrap();
        let sol = solve_lp(&lp).unwrap();
        let at_point: f64 = obj.iter().zip(&point).map(|(c, x)| c * x).sum();
        prop_assert!(sol.objective_value >= at_point - 1e-7);
    }
}
