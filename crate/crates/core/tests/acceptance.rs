//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use vec_offload::algorithm::Algorithm;
use vec_offload::bench::{aggregate, run_matrix, scaling, Matrix, Source};
use vec_offload::generator::{gen_scenario, Descriptor};
use vec_offload::instance::enumerate;
use vec_offload::lp::is_fractional;
use vec_offload::model::{
    validate, Criticality, ExecutionProfile, RsuId, RsuSpec, TaskId, TaskSpec, VehicleId,
};
use vec_offload::oracle::{
    certify_ratio, random_instance, trial_rng, CertifyTarget, InstanceFamily,
};
use vec_offload::saround::{saround_traced, SaRoundConfig};
use vec_offload::scenario::{manifest, write_results, RunResult, Scenario};
use vec_offload::sim::channel::{rate_for_mcs, McsStep};
use vec_offload::sim::{run, snapshot, ChannelConfig, Mode, Quality, SimConfig, Traces};

const SEED: u64 = 2024;
const TRIALS: usize = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_quarter_bound() -> Outcome {
    let started = Instant::now();
    let r = certify_ratio(
        CertifyTarget::Whole(Algorithm::SaRound),
        &InstanceFamily::default(),
        TRIALS,
        SEED,
    )
    .unwrap();
    let secs = started.elapsed().as_secs_f64();
    let min = r.min_ratio.unwrap_or(f64::NAN);
    outcome(
        r.trials >= 500
            && r.inexact_trials == 0
            && r.violations.is_empty()
            && min >= 0.25
            && secs < 120.0,
        format!(
            "{} trials, min ratio {:.4}, mean {:.4}, {} violations, {:.1} s",
            r.trials,
            min,
            r.mean_ratio.unwrap_or(f64::NAN),
            r.violations.len(),
            secs
        ),
    )
}

fn c2_third_bound() -> Outcome {
    let r = certify_ratio(
        CertifyTarget::FloorRd,
        &InstanceFamily::default(),
        TRIALS,
        SEED,
    )
    .unwrap();
    let min = r.min_ratio.unwrap_or(f64::NAN);
    outcome(
        r.inexact_trials == 0 && r.violations.is_empty() && min >= 1.0 / 3.0,
        format!(
            "{} trials, min per-RSU ratio {:.4}, {} violations",
            r.trials,
            min,
            r.violations.len()
        ),
    )
}

fn c3_lp_structure() -> Outcome {
    let fam = InstanceFamily::default();
    let (mut lps, mut bad) = (0usize, 0usize);
    let mut worst_frac = 0usize;
    for t in 0..TRIALS {
        let inst = random_instance(&fam, &mut trial_rng(SEED, t));
        let pool = enumerate(&inst, true);
        let trace = saround_traced(&pool, &SaRoundConfig::default()).unwrap();
        for layer in &trace.layers {
            let Some(lp) = &layer.floor_rd.lp else {
                continue;
            };
            lps += 1;
            let n_tasks = lp.rsu_lp.task_rows.len();
            let values = &lp.solution.values[..lp.rsu_lp.vars.len()];
            let positive = values.iter().filter(|&&v| v > 1e-9).count();
            let frac: Vec<usize> = (0..values.len())
                .filter(|&j| is_fractional(values[j]))
                .collect();
            let frac_tasks: BTreeSet<TaskId> = frac
                .iter()
                .map(|&j| pool.get(lp.rsu_lp.vars[j]).task_id)
                .collect();
            worst_frac = worst_frac.max(frac.len());
            if positive > n_tasks + 2 || frac.len() > 4 || frac_tasks.len() > 2 {
                bad += 1;
            }
        }
    }
    outcome(
        lps >= 500 && bad == 0,
        format!("{lps} LPs, {bad} violations, at most {worst_frac} fractional variables"),
    )
}

fn c4_feasibility() -> Outcome {
    let mut checked = 0usize;
    let mut bad = Vec::new();
    let families = [
        InstanceFamily::default(),
        InstanceFamily {
            tasks: (10, 40),
            rsus: (2, 6),
            rbs: (5, 60),
            cus: (2, 10),
        },
    ];
    for (f, fam) in families.iter().enumerate() {
        for t in 0..TRIALS {
            let inst = random_instance(fam, &mut trial_rng(SEED + f as u64, t));
            let pool = enumerate(&inst, true);
            for alg in Algorithm::ALL {
                checked += 1;
                if !validate(&alg.run(&pool, &inst), &inst).is_empty() {
                    bad.push(format!("{alg} family {f} trial {t}"));
                }
            }
        }
    }
    let d = Descriptor::default();
    for s in 0..5 {
        let sc = gen_scenario(&d, s).unwrap();
        for t in [0.0, 17.3, 42.0] {
            let inst = snapshot(&sc, &sc.sim, t).unwrap();
            let pool = enumerate(&inst, true);
            for alg in Algorithm::ALL {
                checked += 1;
                if !validate(&alg.run(&pool, &inst), &inst).is_empty() {
                    bad.push(format!("{alg} scenario {s} t={t}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "{checked} assignments, {} violations {:?}",
            bad.len(),
            &bad[..bad.len().min(3)]
        ),
    )
}

const PROC_S: f64 = 0.01;

fn task(id: u32, period: f64) -> TaskSpec {
    TaskSpec {
        id: TaskId(id),
        vehicle_id: VehicleId(id),
        service_type: "svc".into(),
        period_s: period,
        input_mb: 0.1,
        local_exec_s: 0.03,
        local_power_w: 8.0,
        offload_power_w: 2.0,
        criticality: Criticality::SafetyCritical,
    }
}

fn rsu(id: u32, rbs: u32, x: f64) -> RsuSpec {
    RsuSpec {
        id: RsuId(id),
        total_rbs: rbs,
        total_cus: 8,
        hardware_class: "hw".into(),
        init_delay_s: 0.0,
        position_m: (x, 0.0),
    }
}

/// Static vehicles beside the RSUs with a frozen channel at `mcs`.
fn parked(tasks: Vec<TaskSpec>, rsus: Vec<RsuSpec>, mcs: u8, duration: f64) -> Scenario {
    let mut profiles = ExecutionProfile::new();
    for c in 1..=8 {
        profiles.insert("svc", "hw", c, PROC_S);
    }
    let mut traces = Traces::new();
    for (i, t) in tasks.iter().enumerate() {
        let x = rsus[i % rsus.len()].position_m.0 + 10.0;
        traces.insert_static(t.vehicle_id, (x, 5.0), duration + 1.0);
    }
    Scenario {
        rsus,
        tasks,
        profiles,
        traces,
        channel: ChannelConfig {
            frozen: true,
            fixed_mcs: Some(mcs),
            ..ChannelConfig::default()
        },
        sim: SimConfig {
            duration_s: duration,
            mode: Mode::SchedAll,
            ..SimConfig::default()
        },
    }
}

fn c5_closed_loop() -> Outcome {
    let tasks: Vec<TaskSpec> = (1..=10)
        .map(|i| task(i, if i % 2 == 0 { 0.05 } else { 0.1 }))
        .collect();
    let sc = parked(tasks, vec![rsu(1, 120, 0.0), rsu(2, 120, 300.0)], 14, 60.0);
    let started = Instant::now();
    let m = run(&sc, &sc.sim).unwrap().metrics;
    let secs = started.elapsed().as_secs_f64();
    let worst = m.cycles[1..]
        .iter()
        .map(|c| (c.measured_js - c.predicted_js).abs() / c.predicted_js)
        .fold(0.0, f64::max);
    outcome(
        m.predicted_js > 0.0 && worst <= 0.02 && secs < 5.0,
        format!(
            "{} cycles, worst relative gap {:.4}% after the first, {:.2} s wall",
            m.cycles.len(),
            worst * 100.0,
            secs
        ),
    )
}

fn c6_step_degradation() -> Outcome {
    let t = task(1, 0.05);
    let need = |mcs: u8| (t.input_mb / (rate_for_mcs(mcs) * (t.period_s - PROC_S))).ceil() as u32;
    let rbs = need(14) + 5;
    assert!(need(5) > rbs);
    let mut sc = parked(vec![t.clone()], vec![rsu(1, rbs, 0.0)], 14, 60.0);
    sc.sim.schedule_interval_s = 20.0;
    sc.channel.steps = vec![
        McsStep {
            at_s: 30.0,
            mcs: 5,
            vehicle_id: None,
            rsu_id: None,
        },
        McsStep {
            at_s: 35.0,
            mcs: 14,
            vehicle_id: None,
            rsu_id: None,
        },
    ];
    let out = run(&sc, &sc.sim).unwrap();
    let m = &out.metrics;
    let resume = out
        .events
        .iter()
        .find(|e| e.kind == "resume" && e.t_s >= 35.0)
        .map(|e| e.t_s);
    outcome(
        m.suspensions >= 1 && m.deadline_misses == 0 && resume.is_some(),
        format!(
            "suspensions {}, misses {}, resumed at {}",
            m.suspensions,
            m.deadline_misses,
            resume.map_or("never".into(), |t| format!("{t:.2} s"))
        ),
    )
}

fn c7_mode_effect() -> Outcome {
    let m = Matrix {
        source: Source::Generated(Descriptor::default()),
        algorithms: vec![Algorithm::SaRound],
        qualities: vec![Quality::Medium],
        modes: Mode::ALL.to_vec(),
        seeds: 20,
        master_seed: SEED,
        duration_s: None,
        timing: false,
    };
    let agg = aggregate(&run_matrix(&m).unwrap());
    let rate = |mode: Mode| {
        agg.iter()
            .find(|r| r.mode == mode)
            .unwrap()
            .offloaded_jobs_per_s
    };
    let (all, remain) = (rate(Mode::SchedAll), rate(Mode::SchedRemain));
    outcome(
        remain >= all,
        format!("offloaded jobs/s over 20 seeds: schedremain {remain:.2}, schedall {all:.2}"),
    )
}

fn c8_scaling() -> Outcome {
    let started = Instant::now();
    let rows = scaling(Algorithm::SaRound, &[25, 50, 100, 200], 5, SEED, 0.05);
    let secs = started.elapsed().as_secs_f64();
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[1].mean_s / w[0].mean_s).collect();
    outcome(
        ratios.iter().all(|&r| r <= 2.8) && secs < 300.0,
        format!(
            "doubling ratios {:?}, t(200) = {:.2} ms, sweep {:.1} s",
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            rows.last().unwrap().mean_s * 1e3,
            secs
        ),
    )
}

fn c9_dominance() -> Outcome {
    let m = Matrix {
        source: Source::Generated(Descriptor::default()),
        algorithms: Algorithm::ALL.to_vec(),
        qualities: vec![Quality::Medium],
        modes: vec![Mode::SchedAll],
        seeds: 50,
        master_seed: SEED,
        duration_s: Some(20.0),
        timing: false,
    };
    let agg = aggregate(&run_matrix(&m).unwrap());
    let mean = |a: Algorithm| agg.iter().find(|r| r.algorithm == a).unwrap().predicted_js;
    let sa = mean(Algorithm::SaRound);
    let others: Vec<String> = Algorithm::ALL[1..]
        .iter()
        .map(|&a| format!("{a} {:.2}", mean(a)))
        .collect();
    let pass = Algorithm::ALL[1..].iter().all(|&a| sa >= mean(a));
    outcome(
        pass,
        format!(
            "mean predicted J/s over 50 seeds: saround {sa:.2}, {}",
            others.join(", ")
        ),
    )
}

fn c10_determinism() -> Outcome {
    let sc = gen_scenario(
        &Descriptor {
            vehicles: 30,
            rsus: 6,
            duration_s: 30.0,
            ..Descriptor::default()
        },
        SEED,
    )
    .unwrap();
    let mut same = true;
    let mut files = 0;
    for mode in Mode::ALL {
        let mut cfg = sc.sim.clone();
        cfg.mode = mode;
        cfg.log_jobs = true;
        let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        for d in &dirs {
            let out = run(&sc, &cfg).unwrap();
            let res = RunResult {
                manifest: manifest(&sc, &cfg),
                metrics: out.metrics,
            };
            write_results(&res, Some(&out.events), &d.path().join("run")).unwrap();
        }
        for f in ["run.summary.json", "run.cycles.csv", "run.events.csv"] {
            let a = std::fs::read(dirs[0].path().join(f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(f)).unwrap();
            files += 1;
            same &= !a.is_empty() && a == b;
        }
    }
    outcome(same, format!("{files} file pairs compared byte for byte"))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("approximation bound 1/4", c1_quarter_bound),
        ("per-RSU bound 1/3", c2_third_bound),
        ("LP structure", c3_lp_structure),
        ("feasibility", c4_feasibility),
        ("closed loop", c5_closed_loop),
        ("step degradation", c6_step_degradation),
        ("mode effect", c7_mode_effect),
        ("runtime scaling", c8_scaling),
        ("baseline dominance", c9_dominance),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} ({name}): {} [{:.1} s]",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
