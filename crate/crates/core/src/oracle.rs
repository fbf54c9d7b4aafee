//! Exact branch-and-bound for small instances, and ratio certification of
//! the approximation algorithms against it.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::instance::{enumerate, InstancePool};
use crate::lp::{solve_lp, LinearProgram};
use crate::model::{
    Criticality, ExecutionProfile, LinkState, ProblemInstance, RsuId, RsuSpec, TaskId, TaskSpec,
    VehicleId,
};
use crate::saround::floor_rd;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_nodes: u64,
    pub max_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_nodes: 10_000_000,
            max_time: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: f64,
    pub selected: Vec<usize>,
    pub nodes_explored: u64,
    /// False when the budget ran out; `optimum` is then the best incumbent.
    pub exact: bool,
}

#[derive(Clone, Copy)]
struct Item {
    id: usize,
    w: f64,
    rsu: usize,
    b: i64,
    c: i64,
}

/// Remaining-subproblem LP bounds are only tried near the root where they
/// prune the most and the LP is still small.
const LP_BOUND_DEPTH: usize = 3;
const LP_BOUND_MAX_VARS: usize = 400;

struct Search<'a> {
    groups: &'a [Vec<Item>],
    n_rsus: usize,
    free: Vec<(i64, i64)>,
    chosen: Vec<usize>,
    value: f64,
    best: f64,
    best_set: Vec<usize>,
    nodes: u64,
    budget: Budget,
    start: Instant,
    out_of_budget: bool,
}

impl Search<'_> {
    fn greedy_bound(&self, depth: usize) -> f64 {
        self.groups[depth..]
            .iter()
            .map(|g| {
                g.iter()
                    .find(|it| it.b <= self.free[it.rsu].0 && it.c <= self.free[it.rsu].1)
                    .map_or(0.0, |it| it.w)
            })
            .sum()
    }

    fn lp_bound(&self, depth: usize) -> Option<f64> {
        let items: Vec<(usize, &Item)> = self.groups[depth..]
            .iter()
            .enumerate()
            .flat_map(|(g, v)| v.iter().map(move |it| (g, it)))
            .filter(|(_, it)| it.b <= self.free[it.rsu].0 && it.c <= self.free[it.rsu].1)
            .collect();
        if items.is_empty() {
            return Some(0.0);
        }
        if items.len() > LP_BOUND_MAX_VARS {
            return None;
        }
        let mut lp = LinearProgram::new(items.iter().map(|(_, it)| it.w).collect());
        for k in 0..self.n_rsus {
            let (rb, cu): (Vec<_>, Vec<_>) = items
                .iter()
                .enumerate()
                .filter(|(_, (_, it))| it.rsu == k)
                .map(|(j, (_, it))| ((j, it.b as f64), (j, it.c as f64)))
                .unzip();
            if !rb.is_empty() {
                lp.add_row(rb, self.free[k].0 as f64).ok()?;
                lp.add_row(cu, self.free[k].1 as f64).ok()?;
            }
        }
        let n_groups = self.groups.len() - depth;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_groups];
        for (j, (g, _)) in items.iter().enumerate() {
            rows[*g].push((j, 1.0));
        }
        for coeffs in rows.into_iter().filter(|r| !r.is_empty()) {
            lp.add_row(coeffs, 1.0).ok()?;
        }
        solve_lp(&lp).ok().map(|s| s.objective_value)
    }

    fn dfs(&mut self, depth: usize) {
        self.nodes += 1;
        if self.nodes >= self.budget.max_nodes
            || (self.nodes.is_multiple_of(1024) && self.start.elapsed() >= self.budget.max_time)
        {
            self.out_of_budget = true;
        }
        if self.value > self.best {
            self.best = self.value;
            self.best_set = self.chosen.clone();
        }
        if self.out_of_budget {
            return;
        }
        if depth == self.groups.len() {
            return;
        }
        let tol = 1e-9 * self.best.abs().max(1.0);
        if self.value + self.greedy_bound(depth) <= self.best + tol {
            return;
        }
        if depth < LP_BOUND_DEPTH {
            if let Some(ub) = self.lp_bound(depth) {
                if self.value + ub <= self.best + tol {
                    return;
                }
            }
        }
        let groups = self.groups;
        for it in &groups[depth] {
            let f = self.free[it.rsu];
            if it.b > f.0 || it.c > f.1 {
                continue;
            }
            self.free[it.rsu] = (f.0 - it.b, f.1 - it.c);
            self.chosen.push(it.id);
            self.value += it.w;
            self.dfs(depth + 1);
            self.value -= it.w;
            self.chosen.pop();
            self.free[it.rsu] = f;
            if self.out_of_budget {
                return;
            }
        }
        self.dfs(depth + 1);
    }
}

fn run_search(
    pool: &InstancePool,
    candidates: impl Iterator<Item = usize>,
    weights: &[f64],
    budget: Budget,
) -> OracleResult {
    let rsus: Vec<RsuId> = pool.all_rsus().collect();
    let rsu_idx = |r: RsuId| rsus.binary_search(&r).expect("known rsu");
    let mut by_task: std::collections::BTreeMap<TaskId, Vec<Item>> = Default::default();
    for id in candidates {
        let w = weights[id];
        if !(w > 0.0) {
            continue;
        }
        let s = pool.get(id);
        by_task.entry(s.task_id).or_default().push(Item {
            id,
            w,
            rsu: rsu_idx(s.rsu_id),
            b: s.rbs as i64,
            c: s.cus as i64,
        });
    }
    let mut groups: Vec<Vec<Item>> = by_task.into_values().collect();
    for g in &mut groups {
        g.sort_by(|a, b| b.w.total_cmp(&a.w).then(a.id.cmp(&b.id)));
    }
    groups.sort_by(|a, b| b[0].w.total_cmp(&a[0].w).then(a[0].id.cmp(&b[0].id)));
    let free = rsus
        .iter()
        .map(|&r| {
            let c = pool.capacity(r).unwrap();
            (c.rbs as i64, c.cus as i64)
        })
        .collect();
    let mut s = Search {
        groups: &groups,
        n_rsus: rsus.len(),
        free,
        chosen: Vec::new(),
        value: 0.0,
        best: 0.0,
        best_set: Vec::new(),
        nodes: 0,
        budget,
        start: Instant::now(),
        out_of_budget: false,
    };
    s.dfs(0);
    let mut selected = s.best_set;
    selected.sort_unstable();
    // Re-sum in id order so the optimum matches the selection exactly.
    let optimum = selected.iter().map(|&i| weights[i]).sum();
    OracleResult {
        optimum,
        selected,
        nodes_explored: s.nodes,
        exact: !s.out_of_budget,
    }
}

/// Optimum of the whole assignment ILP over `pool`.
pub fn solve_exact(
    pool: &InstancePool,
    _instance: &ProblemInstance,
    budget: Budget,
) -> OracleResult {
    run_search(pool, 0..pool.len(), &pool.base_utilities(), budget)
}

/// Optimum of one RSU's ILP under `weights`.
pub fn solve_exact_single_rsu(
    pool: &InstancePool,
    rsu_id: RsuId,
    weights: &[f64],
    budget: Budget,
) -> OracleResult {
    run_search(pool, pool.on_rsu(rsu_id).iter().copied(), weights, budget)
}

/// Inclusive size ranges for random instances. The default family is small
/// enough to solve exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFamily {
    pub tasks: (usize, usize),
    pub rsus: (usize, usize),
    pub rbs: (u32, u32),
    pub cus: (u32, u32),
}

impl Default for InstanceFamily {
    fn default() -> Self {
        InstanceFamily {
            tasks: (2, 6),
            rsus: (1, 3),
            rbs: (2, 6),
            cus: (2, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("family outside exact-solving caps (tasks <= 6, rsus <= 3, rbs <= 6, cus <= 4, all >= 1, min <= max)")]
pub struct FamilyTooLarge;

impl InstanceFamily {
    /// Checks the family against the exact-solving caps.
    pub fn check_small(&self) -> Result<(), FamilyTooLarge> {
        fn within<T: PartialOrd + From<u8>>(r: (T, T), cap: T) -> bool {
            r.0 >= T::from(1) && r.0 <= r.1 && r.1 <= cap
        }
        let ok = within(self.tasks, 6)
            && within(self.rsus, 3)
            && within(self.rbs, 6)
            && within(self.cus, 4);
        if ok {
            Ok(())
        } else {
            Err(FamilyTooLarge)
        }
    }
}

/// Random instance within `family`. Sizes are not capped here. Link rates are drawn so that the RBs a
/// task needs fall inside the RSU's capacity, which keeps most tuples
/// feasible and the utilities positive.
pub fn random_instance<R: Rng>(family: &InstanceFamily, rng: &mut R) -> ProblemInstance {
    let n_rsus = rng.random_range(family.rsus.0..=family.rsus.1);
    let n_tasks = rng.random_range(family.tasks.0..=family.tasks.1);
    let services = ["s0", "s1"];
    let mut profiles = ExecutionProfile::new();
    let mut base_proc = [0.0; 2];
    for (i, s) in services.iter().enumerate() {
        let p0: f64 = rng.random_range(0.004..0.02);
        base_proc[i] = p0;
        for c in 1..=family.cus.1 {
            profiles.insert(s, "hw", c, p0 / (c as f64).powf(0.7));
        }
    }
    let rsus: Vec<RsuSpec> = (0..n_rsus)
        .map(|k| RsuSpec {
            id: RsuId(k as u32 + 1),
            total_rbs: rng.random_range(family.rbs.0..=family.rbs.1),
            total_cus: rng.random_range(family.cus.0..=family.cus.1),
            hardware_class: "hw".into(),
            init_delay_s: 0.0,
            position_m: (k as f64 * 100.0, 0.0),
        })
        .collect();
    let mut tasks = Vec::with_capacity(n_tasks);
    let mut links = Vec::new();
    for t in 0..n_tasks {
        let svc = rng.random_range(0..services.len());
        let period: f64 = if rng.random_bool(0.5) { 0.05 } else { 0.1 };
        let task = TaskSpec {
            id: TaskId(t as u32 + 1),
            vehicle_id: VehicleId(t as u32 + 1),
            service_type: services[svc].into(),
            period_s: period,
            input_mb: rng.random_range(0.05..0.3),
            local_exec_s: period * rng.random_range(0.4..1.0),
            local_power_w: rng.random_range(4.0..8.0),
            offload_power_w: rng.random_range(0.5..1.5),
            criticality: Criticality::SafetyCritical,
        };
        for r in &rsus {
            if !rng.random_bool(0.85) {
                continue;
            }
            let need = rng.random_range(1..=r.total_rbs) as f64;
            let slack = period - base_proc[svc];
            let rate = task.input_mb / (need * slack) * rng.random_range(0.9..1.2);
            links.push(LinkState {
                vehicle_id: task.vehicle_id,
                rsu_id: r.id,
                rate_mb_per_rb_s: rate,
                accessible: true,
            });
        }
        tasks.push(task);
    }
    ProblemInstance::new(tasks, rsus, profiles, links).expect("generator emits valid instances")
}

/// What a certification run measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertifyTarget {
    /// Whole-problem ratio of an assignment algorithm.
    Whole(Algorithm),
    /// Per-RSU ratio of the LP rounding step, worst RSU per trial.
    FloorRd,
}

impl CertifyTarget {
    /// Proven lower bound on the ratio, where one exists.
    pub fn bound(self) -> Option<f64> {
        match self {
            CertifyTarget::Whole(Algorithm::SaRound) => Some(0.25),
            CertifyTarget::FloorRd => Some(1.0 / 3.0),
            CertifyTarget::Whole(_) => None,
        }
    }

    pub fn name(self) -> String {
        match self {
            CertifyTarget::Whole(a) => a.name().to_string(),
            CertifyTarget::FloorRd => "floor_rd".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRatio {
    pub trial: usize,
    pub ratio: f64,
    pub achieved: f64,
    pub optimum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub target: String,
    pub seed: u64,
    pub trials: usize,
    pub bound: Option<f64>,
    pub min_ratio: Option<f64>,
    pub mean_ratio: Option<f64>,
    /// Trials whose oracle ran out of budget; excluded from the ratios.
    pub inexact_trials: usize,
    pub violations: Vec<TrialRatio>,
}

impl CertifyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Trial RNG: one ChaCha stream per trial under the master seed, so results
/// do not depend on how trials are scheduled.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn ratio(achieved: f64, optimum: f64) -> f64 {
    if optimum <= 0.0 {
        1.0
    } else {
        achieved / optimum
    }
}

fn run_trial(
    target: CertifyTarget,
    family: &InstanceFamily,
    seed: u64,
    trial: usize,
) -> (TrialRatio, bool) {
    let inst = random_instance(family, &mut trial_rng(seed, trial));
    let pool = enumerate(&inst, true);
    let budget = Budget::default();
    match target {
        CertifyTarget::Whole(alg) => {
            let a = alg.run(&pool, &inst);
            let opt = solve_exact(&pool, &inst, budget);
            let r = TrialRatio {
                trial,
                ratio: ratio(a.total_utility, opt.optimum),
                achieved: a.total_utility,
                optimum: opt.optimum,
            };
            (r, opt.exact)
        }
        CertifyTarget::FloorRd => {
            let w = pool.base_utilities();
            let mut worst = TrialRatio {
                trial,
                ratio: 1.0,
                achieved: 0.0,
                optimum: 0.0,
            };
            let mut exact = true;
            for rsu in pool.all_rsus().collect::<Vec<_>>() {
                let got: f64 = floor_rd(&pool, rsu, &w).iter().map(|&i| w[i]).sum();
                let opt = solve_exact_single_rsu(&pool, rsu, &w, budget);
                exact &= opt.exact;
                let r = ratio(got, opt.optimum);
                if r < worst.ratio {
                    worst = TrialRatio {
                        trial,
                        ratio: r,
                        achieved: got,
                        optimum: opt.optimum,
                    };
                }
            }
            (worst, exact)
        }
    }
}

/// Compares `target` with the exact optimum on `trials` random instances.
pub fn certify_ratio(
    target: CertifyTarget,
    family: &InstanceFamily,
    trials: usize,
    seed: u64,
) -> Result<CertifyReport, FamilyTooLarge> {
    family.check_small()?;
    let results: Vec<(TrialRatio, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| run_trial(target, family, seed, t))
        .collect();
    let exact: Vec<&TrialRatio> = results.iter().filter(|(_, e)| *e).map(|(r, _)| r).collect();
    let bound = target.bound();
    let min_ratio = exact.iter().map(|r| r.ratio).min_by(f64::total_cmp);
    let mean_ratio = if exact.is_empty() {
        None
    } else {
        Some(exact.iter().map(|r| r.ratio).sum::<f64>() / exact.len() as f64)
    };
    let violations = match bound {
        Some(b) => exact
            .iter()
            .filter(|r| r.ratio < b - 1e-9)
            .map(|r| (*r).clone())
            .collect(),
        None => Vec::new(),
    };
    Ok(CertifyReport {
        target: target.name(),
        seed,
        trials,
        bound,
        min_ratio,
        mean_ratio,
        inexact_trials: results.len() - exact.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ServiceInstance;
    use crate::model::Capacity;

    fn pool_of(items: &[(u32, u32, u32, u32, f64)], caps: &[(u32, u32, u32)]) -> InstancePool {
        let mut all: Vec<ServiceInstance> = items
            .iter()
            .map(|&(t, r, b, c, u)| ServiceInstance {
                id: 0,
                task_id: TaskId(t),
                rsu_id: RsuId(r),
                rbs: b,
                cus: c,
                utility: u,
            })
            .collect();
        all.sort_by_key(|s| (s.task_id, s.rsu_id, s.rbs, s.cus));
        let capacities = caps
            .iter()
            .map(|&(r, b, c)| (RsuId(r), Capacity { rbs: b, cus: c }))
            .collect();
        InstancePool::from_sorted(all, capacities)
    }

    fn exact(pool: &InstancePool) -> OracleResult {
        solve_exact(pool, &ProblemInstance::empty(), Budget::default())
    }

    #[test]
    fn conflicting_pair() {
        let pool = pool_of(&[(1, 1, 1, 1, 10.0), (2, 1, 1, 1, 8.0)], &[(1, 1, 1)]);
        let r = exact(&pool);
        assert_eq!(r.optimum, 10.0);
        assert_eq!(r.selected, vec![0]);
        assert!(r.exact);
    }

    #[test]
    fn cross_example() {
        let pool = pool_of(&[(1, 1, 2, 1, 6.0), (2, 1, 1, 2, 6.0)], &[(1, 2, 2)]);
        assert_eq!(exact(&pool).optimum, 6.0);
        let w = pool.base_utilities();
        let r = solve_exact_single_rsu(&pool, RsuId(1), &w, Budget::default());
        assert_eq!(r.optimum, 6.0);
    }

    #[test]
    fn empty_and_trivial() {
        let pool = pool_of(&[], &[(1, 2, 2)]);
        let r = exact(&pool);
        assert_eq!(r.optimum, 0.0);
        assert!(r.selected.is_empty());

        let one = pool_of(&[(1, 1, 1, 1, 2.5)], &[(1, 2, 2)]);
        let w = one.base_utilities();
        assert_eq!(
            solve_exact_single_rsu(&one, RsuId(1), &w, Budget::default()).optimum,
            2.5
        );

        let three = pool_of(
            &[(1, 1, 1, 1, 2.0), (1, 1, 2, 1, 5.0), (1, 1, 1, 2, 3.0)],
            &[(1, 4, 4)],
        );
        let w = three.base_utilities();
        let r = solve_exact_single_rsu(&three, RsuId(1), &w, Budget::default());
        assert_eq!(r.optimum, 5.0);
        assert_eq!(r.selected, vec![2]);
    }

    #[test]
    fn node_budget_reports_inexact() {
        let items: Vec<_> = (1..=6).map(|t| (t, 1, 1, 1, t as f64)).collect();
        let pool = pool_of(&items, &[(1, 3, 3)]);
        let r = solve_exact(
            &pool,
            &ProblemInstance::empty(),
            Budget {
                max_nodes: 2,
                max_time: Duration::from_secs(1),
            },
        );
        assert!(!r.exact);
        assert!(r.optimum > 0.0);
        let full = exact(&pool);
        assert!(full.exact);
        assert_eq!(full.optimum, 15.0);
    }

    /// Plain enumeration of every feasible assignment.
    fn brute_force(pool: &InstancePool) -> f64 {
        let tasks: Vec<TaskId> = pool.tasks().collect();
        let rsus: Vec<RsuId> = pool.all_rsus().collect();
        fn go(pool: &InstancePool, tasks: &[TaskId], used: &mut Vec<(RsuId, u32, u32)>) -> f64 {
            let Some((&t, rest)) = tasks.split_first() else {
                return 0.0;
            };
            let mut best = go(pool, rest, used);
            for &id in pool.of_task(t) {
                let s = pool.get(id);
                let cap = pool.capacity(s.rsu_id).unwrap();
                let e = used.iter_mut().find(|e| e.0 == s.rsu_id).unwrap();
                if e.1 + s.rbs <= cap.rbs && e.2 + s.cus <= cap.cus {
                    e.1 += s.rbs;
                    e.2 += s.cus;
                    let v = s.utility + go(pool, rest, used);
                    let e = used.iter_mut().find(|e| e.0 == s.rsu_id).unwrap();
                    e.1 -= s.rbs;
                    e.2 -= s.cus;
                    best = best.max(v);
                }
            }
            best
        }
        let mut used: Vec<_> = rsus.iter().map(|&r| (r, 0, 0)).collect();
        go(pool, &tasks, &mut used)
    }

    #[test]
    fn matches_brute_force_and_pruning_is_lossless() {
        let fam = InstanceFamily {
            tasks: (1, 5),
            rbs: (1, 6),
            cus: (1, 4),
            ..InstanceFamily::default()
        };
        for t in 0..40 {
            let inst = random_instance(&fam, &mut trial_rng(7, t));
            let full = enumerate(&inst, false);
            let pruned = enumerate(&inst, true);
            let a = solve_exact(&full, &inst, Budget::default());
            let b = solve_exact(&pruned, &inst, Budget::default());
            let bf = brute_force(&full);
            assert!(
                (a.optimum - bf).abs() < 1e-9,
                "trial {t}: {} vs {bf}",
                a.optimum
            );
            assert!((a.optimum - b.optimum).abs() < 1e-9);
            assert!(crate::model::validate(
                &crate::model::Assignment::from_instances(
                    b.selected.iter().map(|&i| *pruned.get(i))
                ),
                &inst
            )
            .is_empty());
        }
    }

    #[test]
    fn generator_respects_family() {
        let fam = InstanceFamily::default();
        for t in 0..50 {
            let inst = random_instance(&fam, &mut trial_rng(1, t));
            assert!((2..=6).contains(&inst.tasks.len()) && (1..=3).contains(&inst.rsus.len()));
            assert!(inst
                .rsus
                .iter()
                .all(|r| (2..=6).contains(&r.total_rbs) && (2..=4).contains(&r.total_cus)));
        }
        let a = random_instance(&fam, &mut trial_rng(3, 4));
        let b = random_instance(&fam, &mut trial_rng(3, 4));
        assert_eq!(a, b);
    }

    #[test]
    fn certify_zero_trials_and_caps() {
        let r = certify_ratio(
            CertifyTarget::Whole(Algorithm::SaRound),
            &InstanceFamily::default(),
            0,
            1,
        )
        .unwrap();
        assert_eq!(r.trials, 0);
        assert!(r.min_ratio.is_none() && r.violations.is_empty());
        let big = InstanceFamily {
            tasks: (2, 7),
            ..InstanceFamily::default()
        };
        assert!(certify_ratio(CertifyTarget::FloorRd, &big, 1, 1).is_err());
        let empty = InstanceFamily {
            rbs: (4, 3),
            ..InstanceFamily::default()
        };
        assert!(empty.check_small().is_err());
    }

    #[test]
    fn certify_small_run() {
        let r = certify_ratio(CertifyTarget::FloorRd, &InstanceFamily::default(), 30, 11).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.min_ratio.unwrap() >= 1.0 / 3.0);
        let again =
            certify_ratio(CertifyTarget::FloorRd, &InstanceFamily::default(), 30, 11).unwrap();
        assert_eq!(r, again);
    }
}
