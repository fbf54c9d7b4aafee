use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use vec_offload::algorithm::Algorithm;
use vec_offload::bench::{aggregate, run_matrix, scaling, Matrix, Row, Source};
use vec_offload::generator::{gen_scenario, Descriptor};
use vec_offload::instance::enumerate;
use vec_offload::model::validate;
use vec_offload::oracle::{certify_ratio, CertifyTarget, InstanceFamily};
use vec_offload::scenario::{
    cycles_to_csv, load_scenario, manifest, save_scenario, scenario_to_toml, summary_path,
    write_results, write_solve, RunResult, Scenario, SolveRecord, TraceOutput,
};
use vec_offload::sim::{run, snapshot, Mode, Quality, SimConfig, SimError};

#[derive(Parser)]
#[command(
    name = "vec-offload",
    version,
    about = "Task offloading and RB/CU allocation for vehicular edge computing"
)]
struct Cli {
    /// Master seed (channel seed for solve/simulate, trial seed for certify).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "VEC_OFFLOAD_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    algorithm: Option<Algorithm>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    quality: Option<Quality>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Summary)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Machine-readable CSV rows.
    Rows,
    /// Human-readable summary.
    Summary,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one snapshot of a scenario and validate the assignment.
    Solve {
        scenario: PathBuf,
        /// Snapshot time in seconds.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Run the closed-loop simulation and write result files.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        duration: Option<f64>,
        /// Also write the event log.
        #[arg(long)]
        events: bool,
        /// Include per-job events in the log.
        #[arg(long)]
        log_jobs: bool,
        /// Charge measured scheduler wall time instead of the fixed latency.
        #[arg(long)]
        measured_latency: bool,
    },
    /// Run an algorithm x quality x mode x seed matrix.
    Bench {
        /// Use this scenario for every cell instead of generating one per seed.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<Algorithm>,
        #[arg(long, value_delimiter = ',')]
        qualities: Vec<Quality>,
        #[arg(long, value_delimiter = ',')]
        modes: Vec<Mode>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long, default_value_t = 80)]
        vehicles: usize,
        #[arg(long, default_value_t = 15)]
        rsus: usize,
        /// Add a scheduler runtime column (machine dependent).
        #[arg(long)]
        timing: bool,
        /// Time the algorithm on random instances of growing size instead.
        #[arg(long)]
        scaling: bool,
        #[arg(long, value_delimiter = ',', default_values_t = [25, 50, 100, 200])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Compare an algorithm against the exact optimum on small instances.
    Certify {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// `floor-rd` for the per-RSU rounding step.
        #[arg(long)]
        floor_rd: bool,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2, 6])]
        tasks: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1, 3])]
        rsus: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2, 6])]
        rbs: Vec<u32>,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2, 4])]
        cus: Vec<u32>,
    },
    /// Generate a synthetic scenario.
    Gen {
        #[arg(long, default_value = "scenario")]
        name: String,
        /// TOML descriptor; flags below override it.
        #[arg(long)]
        descriptor: Option<PathBuf>,
        #[arg(long)]
        vehicles: Option<usize>,
        #[arg(long)]
        rsus: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
    },
}

enum Failure {
    /// Bad input or configuration.
    Usage(String),
    /// A result broke an invariant.
    Internal(String),
}

type CmdResult = Result<(), Failure>;

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn sim_err(e: SimError) -> Failure {
    match e {
        SimError::Config(m) => Failure::Usage(m),
        other => Failure::Internal(other.to_string()),
    }
}

fn print_manifest<T: Serialize>(m: &T) {
    println!("# manifest {}", serde_json::to_string(m).unwrap());
}

fn out_dir(cli: &Cli, fallback: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Scenario config with the global flags applied.
fn effective(cli: &Cli, sc: &Scenario) -> SimConfig {
    let mut cfg = sc.sim.clone();
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    if let Some(a) = cli.algorithm {
        cfg.algorithm = a;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(q) = cli.quality {
        cfg.quality = q;
    }
    cfg
}

fn cmd_solve(cli: &Cli, path: &Path, time: f64) -> CmdResult {
    let sc = load_scenario(path).map_err(usage)?;
    let cfg = effective(cli, &sc);
    let man = manifest(&sc, &cfg);
    print_manifest(&man);
    let inst = snapshot(&sc, &cfg, time).map_err(sim_err)?;
    let pool = enumerate(&inst, true);
    let a = cfg.algorithm.run(&pool, &inst);
    let violations = validate(&a, &inst);
    match cli.format {
        Format::Rows => {
            println!("task_id,rsu_id,rbs,cus,utility");
            for s in &a.selected {
                println!(
                    "{},{},{},{},{}",
                    s.task_id, s.rsu_id, s.rbs, s.cus, s.utility
                );
            }
        }
        Format::Summary => {
            println!(
                "{} requests, {} instances, {} selected",
                inst.tasks.len(),
                pool.len(),
                a.len()
            );
            for s in &a.selected {
                println!(
                    "  task {:>4} -> rsu {:>3}  rbs {:>4}  cus {:>3}  utility {:.6}",
                    s.task_id, s.rsu_id, s.rbs, s.cus, s.utility
                );
            }
            for r in &inst.rsus {
                let u = a.usage.get(&r.id).copied().unwrap_or_default();
                println!(
                    "  rsu {:>3}: rbs {}/{}  cus {}/{}",
                    r.id, u.rbs, r.total_rbs, u.cus, r.total_cus
                );
            }
            println!("total utility {:.6} J/s", a.total_utility);
        }
    }
    if let Some(dir) = &cli.out {
        let record = SolveRecord {
            manifest: man,
            time_s: time,
            assignment: a,
        };
        let p = write_solve(&record, &dir.join(stem(path))).map_err(usage)?;
        eprintln!("wrote {}", p.display());
    }
    if violations.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        Err(Failure::Internal(format!(
            "assignment fails validation: {}",
            list.join("; ")
        )))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cli: &Cli,
    path: &Path,
    duration: Option<f64>,
    events: bool,
    log_jobs: bool,
    measured_latency: bool,
) -> CmdResult {
    let sc = load_scenario(path).map_err(usage)?;
    let mut cfg = effective(cli, &sc);
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    cfg.log_jobs |= log_jobs;
    cfg.measured_latency |= measured_latency;
    let man = manifest(&sc, &cfg);
    print_manifest(&man);
    let out = run(&sc, &cfg).map_err(sim_err)?;
    let result = RunResult {
        manifest: man,
        metrics: out.metrics,
    };
    let prefix = out_dir(cli, "results").join(stem(path));
    write_results(&result, events.then_some(&out.events[..]), &prefix).map_err(usage)?;
    let m = &result.metrics;
    match cli.format {
        Format::Rows => print!("{}", cycles_to_csv(&m.cycles)),
        Format::Summary => {
            println!(
                "{} cycles over {} s ({} / {} / {})",
                m.cycles.len(),
                m.duration_s,
                cfg.algorithm,
                cfg.mode,
                cfg.quality
            );
            println!("predicted    {:.4} J/s", m.predicted_js);
            println!("measured     {:.4} J/s", m.measured_js);
            println!("offloaded    {:.2} jobs/s", m.offloaded_jobs_per_s);
            println!(
                "jobs         {} total, {} offloaded, {} local",
                m.total_jobs, m.offloaded_jobs, m.local_jobs
            );
            println!("suspensions  {} (resumed {})", m.suspensions, m.resumptions);
            println!("misses       {}", m.deadline_misses);
            println!("results      {}", summary_path(&prefix).display());
        }
    }
    if m.deadline_misses > 0 {
        return Err(Failure::Internal(format!(
            "{} offloaded jobs missed their deadline",
            m.deadline_misses
        )));
    }
    Ok(())
}

fn rows_csv(rows: &[Row], with_seed: bool) -> String {
    let timing = rows.iter().any(|r| r.runtime_s.is_some());
    let mut s = String::new();
    s.push_str("algorithm,quality,mode,");
    if with_seed {
        s.push_str("seed,");
    }
    s.push_str("predicted_js,measured_js,offloaded_jobs_per_s,deadline_misses");
    s.push_str(if timing { ",runtime_s\n" } else { "\n" });
    for r in rows {
        let _ = write!(s, "{},{},{},", r.algorithm, r.quality, r.mode);
        if with_seed {
            let _ = write!(s, "{},", r.seed);
        }
        let _ = write!(
            s,
            "{},{},{},{}",
            r.predicted_js, r.measured_js, r.offloaded_jobs_per_s, r.deadline_misses
        );
        if let Some(t) = r.runtime_s {
            let _ = write!(s, ",{t}");
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct BenchManifest<'a> {
    version: &'a str,
    seed: u64,
    config_hash: String,
    seeds: usize,
    algorithms: Vec<String>,
    qualities: Vec<String>,
    modes: Vec<String>,
}

fn hash_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn cmd_bench(cli: &Cli, args: &Cmd) -> CmdResult {
    let Cmd::Bench {
        scenario,
        seeds,
        algorithms,
        qualities,
        modes,
        duration,
        vehicles,
        rsus,
        timing,
        scaling: do_scaling,
        sizes,
        reps,
    } = args
    else {
        unreachable!()
    };
    let master = cli.seed.unwrap_or(1);
    if *do_scaling {
        let alg = cli.algorithm.unwrap_or(Algorithm::SaRound);
        print_manifest(&serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": master,
            "algorithm": alg.name(),
            "sizes": sizes,
            "reps": reps,
        }));
        let rows = scaling(alg, sizes, *reps, master, 0.05);
        println!("tasks,mean_instances,mean_s,ratio_to_previous");
        for (i, r) in rows.iter().enumerate() {
            let ratio = if i == 0 {
                String::new()
            } else {
                format!("{:.3}", r.mean_s / rows[i - 1].mean_s)
            };
            println!("{},{},{},{}", r.tasks, r.mean_instances, r.mean_s, ratio);
        }
        return Ok(());
    }
    let pick = |v: &Vec<Algorithm>| {
        if !v.is_empty() {
            v.clone()
        } else if let Some(a) = cli.algorithm {
            vec![a]
        } else {
            Algorithm::ALL.to_vec()
        }
    };
    let algorithms = pick(algorithms);
    let qualities = match (qualities.is_empty(), cli.quality) {
        (false, _) => qualities.clone(),
        (true, Some(q)) => vec![q],
        (true, None) => Quality::ALL.to_vec(),
    };
    let modes = match (modes.is_empty(), cli.mode) {
        (false, _) => modes.clone(),
        (true, Some(m)) => vec![m],
        (true, None) => Mode::ALL.to_vec(),
    };
    let (source, basis) = match scenario {
        Some(p) => {
            let sc = load_scenario(p).map_err(usage)?;
            let text = scenario_to_toml(&sc, TraceOutput::Inline);
            (Source::Scenario(Box::new(sc)), text)
        }
        None => {
            let d = Descriptor {
                vehicles: *vehicles,
                rsus: *rsus,
                duration_s: duration.unwrap_or(Descriptor::default().duration_s),
                ..Descriptor::default()
            };
            d.check().map_err(usage)?;
            let text = toml::to_string(&d).map_err(usage)?;
            (Source::Generated(d), text)
        }
    };
    let matrix = Matrix {
        source,
        algorithms,
        qualities,
        modes,
        seeds: *seeds,
        master_seed: master,
        duration_s: *duration,
        timing: *timing,
    };
    let names = |v: Vec<String>| v;
    print_manifest(&BenchManifest {
        version: env!("CARGO_PKG_VERSION"),
        seed: master,
        config_hash: hash_hex(&format!("{basis}\nduration={:?}", duration)),
        seeds: *seeds,
        algorithms: names(matrix.algorithms.iter().map(|a| a.to_string()).collect()),
        qualities: names(matrix.qualities.iter().map(|q| q.to_string()).collect()),
        modes: names(matrix.modes.iter().map(|m| m.to_string()).collect()),
    });
    let rows = run_matrix(&matrix).map_err(sim_err)?;
    let table = match cli.format {
        Format::Rows => rows_csv(&rows, true),
        Format::Summary => rows_csv(&aggregate(&rows), false),
    };
    print!("{table}");
    let misses: u64 = rows.iter().map(|r| r.deadline_misses).sum();
    if misses > 0 {
        return Err(Failure::Internal(format!(
            "{misses} offloaded jobs missed their deadline"
        )));
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir).map_err(usage)?;
        let p = dir.join("bench.csv");
        std::fs::write(&p, rows_csv(&rows, true)).map_err(usage)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn pair<T: Copy>(v: &[T]) -> (T, T) {
    (v[0], v[1])
}

fn cmd_certify(cli: &Cli, args: &Cmd) -> CmdResult {
    let Cmd::Certify {
        trials,
        floor_rd,
        tasks,
        rsus,
        rbs,
        cus,
    } = args
    else {
        unreachable!()
    };
    let family = InstanceFamily {
        tasks: pair(tasks),
        rsus: pair(rsus),
        rbs: pair(rbs),
        cus: pair(cus),
    };
    family.check_small().map_err(usage)?;
    let target = if *floor_rd {
        CertifyTarget::FloorRd
    } else {
        CertifyTarget::Whole(cli.algorithm.unwrap_or(Algorithm::SaRound))
    };
    let seed = cli.seed.unwrap_or(1);
    print_manifest(&serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "target": target.name(),
        "trials": trials,
        "family": family,
    }));
    let report = certify_ratio(target, &family, *trials, seed).map_err(usage)?;
    match cli.format {
        Format::Rows => {
            println!("target,trials,bound,min_ratio,mean_ratio,inexact_trials,violations");
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            println!(
                "{},{},{},{},{},{},{}",
                report.target,
                report.trials,
                opt(report.bound),
                opt(report.min_ratio),
                opt(report.mean_ratio),
                report.inexact_trials,
                report.violations.len()
            );
        }
        Format::Summary => {
            println!("target      {}", report.target);
            println!("trials      {}", report.trials);
            if let Some(b) = report.bound {
                println!("bound       {b:.4}");
            }
            if let (Some(lo), Some(mean)) = (report.min_ratio, report.mean_ratio) {
                println!("min ratio   {lo:.4}");
                println!("mean ratio  {mean:.4}");
            }
            println!("inexact     {}", report.inexact_trials);
            println!("violations  {}", report.violations.len());
            for v in &report.violations {
                println!(
                    "  trial {}: {:.6} / {:.6} = {:.4}",
                    v.trial, v.achieved, v.optimum, v.ratio
                );
            }
        }
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Internal(format!(
            "{} trials below the bound",
            report.violations.len()
        )))
    }
}

fn cmd_gen(cli: &Cli, args: &Cmd) -> CmdResult {
    let Cmd::Gen {
        name,
        descriptor,
        vehicles,
        rsus,
        duration,
    } = args
    else {
        unreachable!()
    };
    let mut d = match descriptor {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(usage)?;
            toml::from_str::<Descriptor>(&text).map_err(usage)?
        }
        None => Descriptor::default(),
    };
    if let Some(v) = vehicles {
        d.vehicles = *v;
    }
    if let Some(r) = rsus {
        d.rsus = *r;
    }
    if let Some(t) = duration {
        d.duration_s = *t;
    }
    if let Some(a) = cli.algorithm {
        d.sim.algorithm = a;
    }
    if let Some(m) = cli.mode {
        d.sim.mode = m;
    }
    if let Some(q) = cli.quality {
        d.sim.quality = q;
    }
    let seed = cli.seed.unwrap_or(1);
    d.sim.rng_seed = seed;
    let sc = gen_scenario(&d, seed).map_err(usage)?;
    print_manifest(&serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config_hash": hash_hex(&toml::to_string(&d).map_err(usage)?),
    }));
    let dir = out_dir(cli, ".");
    let p = save_scenario(&sc, &dir, name).map_err(usage)?;
    println!(
        "{}: {} rsus, {} vehicles, {} s",
        p.display(),
        sc.rsus.len(),
        sc.vehicle_count(),
        sc.sim.duration_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Solve { scenario, time } => cmd_solve(&cli, scenario, *time),
        Cmd::Simulate {
            scenario,
            duration,
            events,
            log_jobs,
            measured_latency,
        } => cmd_simulate(
            &cli,
            scenario,
            *duration,
            *events,
            *log_jobs,
            *measured_latency,
        ),
        c @ Cmd::Bench { .. } => cmd_bench(&cli, c),
        c @ Cmd::Certify { .. } => cmd_certify(&cli, c),
        c @ Cmd::Gen { .. } => cmd_gen(&cli, c),
    };
    let _ = std::io::stdout().flush();
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
