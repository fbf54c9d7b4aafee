//! Benchmark matrices over algorithms, channel qualities, modes and seeds,
//! and the runtime scaling sweep.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::generator::{gen_scenario, Descriptor};
use crate::instance::enumerate;
use crate::oracle::{random_instance, trial_rng, InstanceFamily};
use crate::scenario::Scenario;
use crate::sim::{run, Mode, Quality, SimError};

/// Mixes a master seed with a cell index (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub enum Source {
    /// One scenario; seeds only drive the channel.
    Scenario(Box<Scenario>),
    /// A fresh synthetic scenario per seed.
    Generated(Descriptor),
}

#[derive(Debug, Clone)]
pub struct Matrix {
    pub source: Source,
    pub algorithms: Vec<Algorithm>,
    pub qualities: Vec<Quality>,
    pub modes: Vec<Mode>,
    pub seeds: usize,
    pub master_seed: u64,
    pub duration_s: Option<f64>,
    /// Record scheduler wall time (makes rows machine-dependent).
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub algorithm: Algorithm,
    pub quality: Quality,
    pub mode: Mode,
    pub seed: u64,
    pub predicted_js: f64,
    pub measured_js: f64,
    pub offloaded_jobs_per_s: f64,
    pub deadline_misses: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<f64>,
}

impl Matrix {
    pub fn cells(&self) -> usize {
        self.algorithms.len() * self.qualities.len() * self.modes.len() * self.seeds
    }

    pub fn seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }
}

/// Runs every cell, in parallel. Rows come back in matrix order: seed,
/// quality, mode, algorithm.
pub fn run_matrix(m: &Matrix) -> Result<Vec<Row>, SimError> {
    let scenarios: Vec<Scenario> = (0..m.seeds)
        .into_par_iter()
        .map(|s| match &m.source {
            Source::Scenario(sc) => Ok((**sc).clone()),
            Source::Generated(d) => {
                gen_scenario(d, m.seed(s)).map_err(|e| SimError::Config(e.to_string()))
            }
        })
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::with_capacity(m.cells());
    for s in 0..m.seeds {
        for &q in &m.qualities {
            for &mode in &m.modes {
                for &a in &m.algorithms {
                    cells.push((s, q, mode, a));
                }
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(s, quality, mode, algorithm)| {
            let sc = &scenarios[s];
            let mut cfg = sc.sim.clone();
            cfg.rng_seed = m.seed(s);
            cfg.quality = quality;
            cfg.mode = mode;
            cfg.algorithm = algorithm;
            cfg.record_runtime = m.timing;
            if let Some(d) = m.duration_s {
                cfg.duration_s = d;
            }
            let out = run(sc, &cfg)?;
            let met = &out.metrics;
            let runtime_s = m.timing.then(|| {
                let t: Vec<f64> = met
                    .cycles
                    .iter()
                    .filter_map(|c| c.algorithm_runtime_s)
                    .collect();
                t.iter().sum::<f64>() / t.len().max(1) as f64
            });
            Ok(Row {
                algorithm,
                quality,
                mode,
                seed: cfg.rng_seed,
                predicted_js: met.predicted_js,
                measured_js: met.measured_js,
                offloaded_jobs_per_s: met.offloaded_jobs_per_s,
                deadline_misses: met.deadline_misses,
                runtime_s,
            })
        })
        .collect()
}

/// Means over seeds per (algorithm, quality, mode), in first-seen order.
pub fn aggregate(rows: &[Row]) -> Vec<Row> {
    let mut keys: Vec<(Algorithm, Quality, Mode)> = Vec::new();
    for r in rows {
        let k = (r.algorithm, r.quality, r.mode);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(algorithm, quality, mode)| {
            let group: Vec<&Row> = rows
                .iter()
                .filter(|r| (r.algorithm, r.quality, r.mode) == (algorithm, quality, mode))
                .collect();
            let n = group.len() as f64;
            let mean = |f: fn(&Row) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            Row {
                algorithm,
                quality,
                mode,
                seed: 0,
                predicted_js: mean(|r| r.predicted_js),
                measured_js: mean(|r| r.measured_js),
                offloaded_jobs_per_s: mean(|r| r.offloaded_jobs_per_s),
                deadline_misses: group.iter().map(|r| r.deadline_misses).sum(),
                runtime_s: group
                    .iter()
                    .map(|r| r.runtime_s)
                    .sum::<Option<f64>>()
                    .map(|t| t / n),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub tasks: usize,
    pub mean_instances: f64,
    /// Mean wall time of one algorithm call.
    pub mean_s: f64,
}

/// Wall time of `algorithm` on random instances with `n` tasks on 5 RSUs of
/// 30 RBs and 8 CUs. Each size runs `reps` instances, each repeated until at
/// least `min_s` seconds have been spent so that short calls are measurable.
pub fn scaling(
    algorithm: Algorithm,
    sizes: &[usize],
    reps: usize,
    seed: u64,
    min_s: f64,
) -> Vec<ScalingRow> {
    sizes
        .iter()
        .map(|&n| {
            let fam = InstanceFamily {
                tasks: (n, n),
                rsus: (5, 5),
                rbs: (30, 30),
                cus: (8, 8),
            };
            let mut total = 0.0;
            let mut instances = 0usize;
            for r in 0..reps {
                let inst = random_instance(&fam, &mut trial_rng(seed, r));
                let pool = enumerate(&inst, true);
                instances += pool.len();
                let mut calls = 0u32;
                let started = Instant::now();
                loop {
                    std::hint::black_box(algorithm.run(&pool, &inst));
                    calls += 1;
                    if started.elapsed().as_secs_f64() >= min_s {
                        break;
                    }
                }
                total += started.elapsed().as_secs_f64() / calls as f64;
            }
            let k = reps.max(1) as f64;
            ScalingRow {
                tasks: n,
                mean_instances: instances as f64 / k,
                mean_s: total / k,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seeds: usize) -> Matrix {
        Matrix {
            source: Source::Generated(Descriptor {
                vehicles: 8,
                rsus: 2,
                duration_s: 10.0,
                ..Descriptor::default()
            }),
            algorithms: vec![Algorithm::SaRound, Algorithm::Greedy],
            qualities: vec![Quality::Medium],
            modes: Mode::ALL.to_vec(),
            seeds,
            master_seed: 3,
            duration_s: None,
            timing: false,
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn matrix_rows_are_ordered_and_repeatable() {
        let m = small(2);
        let a = run_matrix(&m).unwrap();
        assert_eq!(a.len(), m.cells());
        assert_eq!(a[0].algorithm, Algorithm::SaRound);
        assert_eq!(a[1].algorithm, Algorithm::Greedy);
        assert_eq!(a[2].mode, Mode::SchedRemain);
        assert_eq!(a[4].seed, m.seed(1));
        assert_eq!(a, run_matrix(&m).unwrap());
        let agg = aggregate(&a);
        assert_eq!(agg.len(), 4);
        let want = (a[0].predicted_js + a[4].predicted_js) / 2.0;
        assert!((agg[0].predicted_js - want).abs() < 1e-12);
    }

    #[test]
    fn scaling_rows() {
        let rows = scaling(Algorithm::Greedy, &[5, 10], 2, 1, 0.0);
        assert_eq!(rows.len(), 2);
        assert!(rows[1].mean_instances > rows[0].mean_instances);
        assert!(rows.iter().all(|r| r.mean_s > 0.0));
    }
}
