//! Enumeration of feasible service instances ⟨task, RSU, RBs, CUs⟩.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    fits_deadline, Capacity, EnergySaving, ExecutionProfile, LinkState, ProblemInstance, RsuId,
    RsuSpec, TaskId, TaskSpec, UtilityFn,
};

/// A candidate deployment of one task on one RSU with a fixed allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceInstance {
    /// Dense index into the owning pool.
    pub id: usize,
    pub task_id: TaskId,
    pub rsu_id: RsuId,
    pub rbs: u32,
    pub cus: u32,
    /// Base utility `u(ℓ)`.
    pub utility: f64,
}

/// The feasible instance set with per-task and per-RSU indexes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstancePool {
    pub all: Vec<ServiceInstance>,
    by_task: BTreeMap<TaskId, Vec<usize>>,
    by_rsu: BTreeMap<RsuId, Vec<usize>>,
    capacities: BTreeMap<RsuId, Capacity>,
}

impl InstancePool {
    /// Builds a pool from instances already ordered by (task, rsu, rbs, cus);
    /// ids are reassigned densely. `capacities` lists every RSU of the
    /// snapshot, including ones without instances.
    pub fn from_sorted(
        mut all: Vec<ServiceInstance>,
        capacities: BTreeMap<RsuId, Capacity>,
    ) -> Self {
        let mut by_task: BTreeMap<TaskId, Vec<usize>> = BTreeMap::new();
        let mut by_rsu: BTreeMap<RsuId, Vec<usize>> = BTreeMap::new();
        for (i, s) in all.iter_mut().enumerate() {
            s.id = i;
            by_task.entry(s.task_id).or_default().push(i);
            by_rsu.entry(s.rsu_id).or_default().push(i);
        }
        debug_assert!(by_rsu.keys().all(|r| capacities.contains_key(r)));
        Self {
            all,
            by_task,
            by_rsu,
            capacities,
        }
    }

    /// Capacity available to the pool's snapshot on one RSU.
    pub fn capacity(&self, rsu: RsuId) -> Option<Capacity> {
        self.capacities.get(&rsu).copied()
    }

    /// Every RSU of the snapshot, ascending.
    pub fn all_rsus(&self) -> impl Iterator<Item = RsuId> + '_ {
        self.capacities.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }

    pub fn get(&self, id: usize) -> &ServiceInstance {
        &self.all[id]
    }

    /// `L_i`: instances of one task.
    pub fn of_task(&self, task: TaskId) -> &[usize] {
        self.by_task.get(&task).map_or(&[], Vec::as_slice)
    }

    /// `L^k`: instances hosted on one RSU.
    pub fn on_rsu(&self, rsu: RsuId) -> &[usize] {
        self.by_rsu.get(&rsu).map_or(&[], Vec::as_slice)
    }

    /// `L(ℓ)`: instances sharing ℓ's task (including ℓ).
    pub fn siblings(&self, id: usize) -> &[usize] {
        self.of_task(self.all[id].task_id)
    }

    pub fn tasks(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.by_task.keys().copied()
    }

    pub fn rsus(&self) -> impl Iterator<Item = RsuId> + '_ {
        self.by_rsu.keys().copied()
    }

    pub fn base_utilities(&self) -> Vec<f64> {
        self.all.iter().map(|s| s.utility).collect()
    }
}

/// Smallest RB count meeting the deadline at `cus` CUs, or `None` when the
/// processing time alone uses up the period or no profile entry exists.
///
/// Not capped by the RSU's capacity.
pub fn min_rbs(
    task: &TaskSpec,
    rsu: &RsuSpec,
    cus: u32,
    link: &LinkState,
    profiles: &ExecutionProfile,
) -> Option<u32> {
    if !link.accessible || !(link.rate_mb_per_rb_s > 0.0) || cus == 0 {
        return None;
    }
    let proc = profiles.proc_time(&task.service_type, &rsu.hardware_class, cus)?;
    min_rbs_for(task, link.rate_mb_per_rb_s, proc)
}

pub(crate) fn min_rbs_for(task: &TaskSpec, rate: f64, proc_time_s: f64) -> Option<u32> {
    let budget = task.period_s - proc_time_s;
    if !(budget > 0.0) {
        return None;
    }
    let estimate = (task.input_mb / (rate * budget)).ceil();
    if !estimate.is_finite() || estimate > u32::MAX as f64 / 2.0 {
        return None;
    }
    // The closed form can be off by one near integer boundaries; settle it
    // against the exact deadline predicate.
    let mut b = (estimate as u32).max(1);
    while !fits_deadline(task, b, rate, proc_time_s) {
        b += 1;
    }
    while b > 1 && fits_deadline(task, b - 1, rate, proc_time_s) {
        b -= 1;
    }
    Some(b)
}

/// Enumerates `L` with the default energy-saving utility.
pub fn enumerate(instance: &ProblemInstance, prune: bool) -> InstancePool {
    enumerate_with(instance, prune, &EnergySaving)
}

pub fn enumerate_with(
    instance: &ProblemInstance,
    prune: bool,
    utility: &dyn UtilityFn,
) -> InstancePool {
    let mut all = Vec::new();
    for task in &instance.tasks {
        for (k, rsu) in instance.rsus.iter().enumerate() {
            let cap = instance.capacities[k];
            if cap.rbs == 0 || cap.cus == 0 {
                continue;
            }
            let Some(link) = instance.link(task.vehicle_id, rsu.id) else {
                continue;
            };
            if !link.accessible || !(link.rate_mb_per_rb_s > 0.0) {
                continue;
            }
            let Some(row) = instance
                .profiles
                .row(&task.service_type, &rsu.hardware_class)
            else {
                continue;
            };
            let rate = link.rate_mb_per_rb_s;
            // grid[b-1][c-1] holds the utility of (b, c), 0 when infeasible.
            let (nb, nc) = (cap.rbs as usize, cap.cus as usize);
            let mut grid = vec![0.0f64; nb * nc];
            let mut any = false;
            for c in 1..=cap.cus.min(rsu.total_cus) {
                let Some(&proc) = row.get(&c) else { continue };
                let Some(b0) = min_rbs_for(task, rate, proc) else {
                    continue;
                };
                for b in b0..=cap.rbs.min(rsu.total_rbs) {
                    let u = utility.raw_utility(task, rsu, b, c, rate).max(0.0);
                    if u > 0.0 {
                        grid[(b as usize - 1) * nc + (c as usize - 1)] = u;
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            let keep = if prune {
                undominated(&grid, nb, nc)
            } else {
                grid.iter().map(|&u| u > 0.0).collect()
            };
            for b in 0..nb {
                for c in 0..nc {
                    let i = b * nc + c;
                    if keep[i] {
                        all.push(ServiceInstance {
                            id: 0,
                            task_id: task.id,
                            rsu_id: rsu.id,
                            rbs: b as u32 + 1,
                            cus: c as u32 + 1,
                            utility: grid[i],
                        });
                    }
                }
            }
        }
    }
    let capacities = instance
        .rsus
        .iter()
        .zip(&instance.capacities)
        .map(|(r, c)| (r.id, *c))
        .collect();
    InstancePool::from_sorted(all, capacities)
}

/// Marks cells with positive utility that no other cell with fewer-or-equal
/// RBs and CUs matches or beats.
fn undominated(grid: &[f64], nb: usize, nc: usize) -> Vec<bool> {
    // best[b][c] = max utility over b' <= b, c' <= c (inclusive prefix max).
    let mut best = vec![0.0f64; nb * nc];
    let mut keep = vec![false; nb * nc];
    for b in 0..nb {
        for c in 0..nc {
            let i = b * nc + c;
            let up = if b > 0 { best[i - nc] } else { 0.0 };
            let left = if c > 0 { best[i - 1] } else { 0.0 };
            let others = up.max(left);
            let u = grid[i];
            keep[i] = u > 0.0 && !(others >= u);
            best[i] = others.max(u);
        }
    }
    keep
}
