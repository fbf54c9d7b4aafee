use vec_offload::algorithm::Algorithm;
use vec_offload::instance::enumerate;
use vec_offload::lp::build_rsu_lp;
use vec_offload::lp::solve_lp;
use vec_offload::model::validate;
use vec_offload::oracle::{
    certify_ratio, random_instance, solve_exact, solve_exact_single_rsu, trial_rng, Budget,
    CertifyTarget, InstanceFamily,
};

#[test]
fn saround_quarter_bound_holds() {
    let r = certify_ratio(
        CertifyTarget::Whole(Algorithm::SaRound),
        &InstanceFamily::default(),
        500,
        2024,
    )
    .unwrap();
    assert_eq!(r.inexact_trials, 0);
    assert!(r.passed(), "{:?}", r.violations);
    assert!(r.min_ratio.unwrap() >= 0.25);
}

#[test]
fn floor_rd_third_bound_holds() {
    let r = certify_ratio(
        CertifyTarget::FloorRd,
        &InstanceFamily::default(),
        500,
        2024,
    )
    .unwrap();
    assert!(r.passed(), "{:?}", r.violations);
    assert!(r.min_ratio.unwrap() >= 1.0 / 3.0);
}

#[test]
fn oracle_dominates_every_algorithm() {
    let fam = InstanceFamily::default();
    for t in 0..150 {
        let inst = random_instance(&fam, &mut trial_rng(99, t));
        let pool = enumerate(&inst, true);
        let opt = solve_exact(&pool, &inst, Budget::default());
        assert!(opt.exact);
        for alg in Algorithm::ALL {
            let a = alg.run(&pool, &inst);
            assert!(validate(&a, &inst).is_empty(), "{alg} trial {t}");
            assert!(a.total_utility <= opt.optimum + 1e-9, "{alg} trial {t}");
        }
        let w = pool.base_utilities();
        for rsu in pool.all_rsus().collect::<Vec<_>>() {
            let lp = build_rsu_lp(&pool, rsu, &w).unwrap();
            let relax = solve_lp(&lp.lp).unwrap().objective_value;
            let ilp = solve_exact_single_rsu(&pool, rsu, &w, Budget::default()).optimum;
            assert!(relax >= ilp - 1e-9);
        }
    }
}
