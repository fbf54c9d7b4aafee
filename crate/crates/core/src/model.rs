//! Domain types shared by the solvers and the simulator: tasks, RSUs,
//! execution profiles, link snapshots, problem instances and assignments.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::ServiceInstance;

/// Peak offloading rate of one RSU radio at the best MCS, in MB/s.
pub const PEAK_RSU_RATE_MB_S: f64 = 37.0;
/// Resource blocks of one RSU radio in the reference deployment.
pub const REFERENCE_RBS: u32 = 270;
/// Peak per-RB rate in MB/s (37 MB/s spread over 270 RBs).
pub const PEAK_RATE_PER_RB: f64 = PEAK_RSU_RATE_MB_S / REFERENCE_RBS as f64;

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Identifier of a periodic task.
    TaskId
);
id_newtype!(
    /// Identifier of a roadside unit.
    RsuId
);
id_newtype!(
    /// Identifier of a vehicle.
    VehicleId
);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("task {0}: {1}")]
    InvalidTask(TaskId, String),
    #[error("rsu {0}: {1}")]
    InvalidRsu(RsuId, String),
    #[error("profile ({service}, {hardware}, {cus} CUs): {reason}")]
    InvalidProfile {
        service: String,
        hardware: String,
        cus: u32,
        reason: String,
    },
    #[error("link ({0}, {1}): {2}")]
    InvalidLink(VehicleId, RsuId, String),
    #[error("duplicate {0} id {1}")]
    DuplicateId(&'static str, u32),
    #[error("rsu {0}: residual capacity exceeds nominal capacity")]
    ResidualExceedsNominal(RsuId),
    #[error("offload time undefined: {0}")]
    Domain(&'static str),
}

/// How a task tolerates failed offloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    /// Every job also runs locally; offloading is an optional improvement.
    SafetyCritical,
    /// At least `m` out of any `k` consecutive jobs must meet their deadline.
    MkConstrained { m: u32, k: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub vehicle_id: VehicleId,
    pub service_type: String,
    /// Period, which is also the implicit relative deadline.
    pub period_s: f64,
    pub input_mb: f64,
    pub local_exec_s: f64,
    pub local_power_w: f64,
    pub offload_power_w: f64,
    pub criticality: Criticality,
}

impl TaskSpec {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |why: &str| Err(ModelError::InvalidTask(self.id, why.to_string()));
        if !(self.period_s > 0.0 && self.period_s.is_finite()) {
            return bad("period_s must be positive");
        }
        if !(self.input_mb > 0.0 && self.input_mb.is_finite()) {
            return bad("input_mb must be positive");
        }
        if !(self.local_exec_s > 0.0) {
            return bad("local_exec_s must be positive");
        }
        if self.local_exec_s > self.period_s {
            return bad("local_exec_s exceeds period_s; local execution must stay feasible");
        }
        if !(self.local_power_w >= 0.0) || !(self.offload_power_w >= 0.0) {
            return bad("powers must be non-negative");
        }
        if let Criticality::MkConstrained { m, k } = self.criticality {
            if m == 0 || m > k {
                return bad("m-k window requires 0 < m <= k");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsuSpec {
    pub id: RsuId,
    pub total_rbs: u32,
    pub total_cus: u32,
    pub hardware_class: String,
    pub init_delay_s: f64,
    pub position_m: (f64, f64),
}

impl RsuSpec {
    pub fn check(&self) -> Result<(), ModelError> {
        let bad = |why: &str| Err(ModelError::InvalidRsu(self.id, why.to_string()));
        if self.total_rbs == 0 {
            return bad("total_rbs must be >= 1");
        }
        if self.total_cus == 0 {
            return bad("total_cus must be >= 1");
        }
        if !(self.init_delay_s >= 0.0) {
            return bad("init_delay_s must be >= 0");
        }
        Ok(())
    }

    pub fn capacity(&self) -> Capacity {
        Capacity {
            rbs: self.total_rbs,
            cus: self.total_cus,
        }
    }
}

/// RB/CU amounts, used both for capacities and usage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capacity {
    pub rbs: u32,
    pub cus: u32,
}

impl Capacity {
    pub fn fits(&self, rbs: u32, cus: u32) -> bool {
        rbs <= self.rbs && cus <= self.cus
    }
}

/// Processing time lookup keyed by (service type, hardware class, CUs).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionProfile {
    table: BTreeMap<(String, String), BTreeMap<u32, f64>>,
}

impl ExecutionProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, service: &str, hardware: &str, cus: u32, proc_time_s: f64) {
        self.table
            .entry((service.to_string(), hardware.to_string()))
            .or_default()
            .insert(cus, proc_time_s);
    }

    pub fn proc_time(&self, service: &str, hardware: &str, cus: u32) -> Option<f64> {
        // Avoids allocating owned keys on the hot enumeration path.
        self.table
            .iter()
            .find(|((s, h), _)| s == service && h == hardware)
            .and_then(|(_, row)| row.get(&cus).copied())
    }

    /// Row for one (service, hardware) pair, CUs ascending.
    pub fn row(&self, service: &str, hardware: &str) -> Option<&BTreeMap<u32, f64>> {
        self.table
            .iter()
            .find(|((s, h), _)| s == service && h == hardware)
            .map(|(_, row)| row)
    }

    pub fn has_service(&self, service: &str) -> bool {
        self.table.keys().any(|(s, _)| s == service)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u32, f64)> {
        self.table.iter().flat_map(|((s, h), row)| {
            row.iter()
                .map(move |(c, t)| (s.as_str(), h.as_str(), *c, *t))
        })
    }

    pub fn len(&self) -> usize {
        self.table.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positive entries, non-increasing in CUs for each (service, hardware).
    pub fn check(&self) -> Result<(), ModelError> {
        for ((s, h), row) in &self.table {
            let mut prev: Option<f64> = None;
            for (&c, &t) in row {
                let err = |reason: &str| ModelError::InvalidProfile {
                    service: s.clone(),
                    hardware: h.clone(),
                    cus: c,
                    reason: reason.to_string(),
                };
                if c == 0 {
                    return Err(err("CU count must be >= 1"));
                }
                if !(t > 0.0 && t.is_finite()) {
                    return Err(err("proc_time_s must be positive"));
                }
                if let Some(p) = prev {
                    if t > p {
                        return Err(err("proc_time_s increases with CUs"));
                    }
                }
                prev = Some(t);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub vehicle_id: VehicleId,
    pub rsu_id: RsuId,
    pub rate_mb_per_rb_s: f64,
    pub accessible: bool,
}

/// Offloading time of one job: `input / (rbs * rate)`.
pub fn offload_time(input_mb: f64, rbs: u32, rate_mb_per_rb_s: f64) -> Result<f64, ModelError> {
    if rbs == 0 {
        return Err(ModelError::Domain("zero resource blocks"));
    }
    if !(rate_mb_per_rb_s > 0.0) {
        return Err(ModelError::Domain("non-positive rate"));
    }
    if !(input_mb > 0.0) {
        return Err(ModelError::Domain("non-positive input size"));
    }
    Ok(input_mb / (rbs as f64 * rate_mb_per_rb_s))
}

/// Offload + processing time fits within the period.
///
/// A missing profile entry, an inaccessible link, or an allocation outside the
/// RSU's nominal capacity all make the tuple infeasible.
pub fn deadline_feasible(
    task: &TaskSpec,
    rsu: &RsuSpec,
    rbs: u32,
    cus: u32,
    link: &LinkState,
    profiles: &ExecutionProfile,
) -> bool {
    if !link.accessible || rbs == 0 || cus == 0 {
        return false;
    }
    if rbs > rsu.total_rbs || cus > rsu.total_cus {
        return false;
    }
    let Some(proc) = profiles.proc_time(&task.service_type, &rsu.hardware_class, cus) else {
        return false;
    };
    fits_deadline(task, rbs, link.rate_mb_per_rb_s, proc)
}

/// Deadline check with the processing time already looked up.
pub(crate) fn fits_deadline(task: &TaskSpec, rbs: u32, rate: f64, proc_time_s: f64) -> bool {
    match offload_time(task.input_mb, rbs, rate) {
        Ok(d_o) => d_o + proc_time_s <= task.period_s,
        Err(_) => false,
    }
}

/// Task-dependent utility of offloading a task with a given allocation.
///
/// Implementations are only consulted for accessible, deadline-feasible
/// tuples; the result is clamped to be non-negative by callers.
pub trait UtilityFn: Send + Sync {
    fn raw_utility(&self, task: &TaskSpec, rsu: &RsuSpec, rbs: u32, cus: u32, rate: f64) -> f64;
}

/// Energy saved per second by offloading instead of executing locally.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnergySaving;

impl UtilityFn for EnergySaving {
    fn raw_utility(&self, task: &TaskSpec, _rsu: &RsuSpec, rbs: u32, _cus: u32, rate: f64) -> f64 {
        let local_j = task.local_power_w * task.local_exec_s;
        let offload_j = task.offload_power_w * task.input_mb / (rbs as f64 * rate);
        (local_j - offload_j) / task.period_s
    }
}

/// Utility under the default energy-saving function.
pub fn utility(
    task: &TaskSpec,
    rsu: &RsuSpec,
    rbs: u32,
    cus: u32,
    link: &LinkState,
    profiles: &ExecutionProfile,
) -> f64 {
    utility_with(&EnergySaving, task, rsu, rbs, cus, link, profiles)
}

pub fn utility_with(
    f: &dyn UtilityFn,
    task: &TaskSpec,
    rsu: &RsuSpec,
    rbs: u32,
    cus: u32,
    link: &LinkState,
    profiles: &ExecutionProfile,
) -> f64 {
    if !deadline_feasible(task, rsu, rbs, cus, link, profiles) {
        return 0.0;
    }
    f.raw_utility(task, rsu, rbs, cus, link.rate_mb_per_rb_s)
        .max(0.0)
}

/// One scheduling-cycle snapshot of the offloading problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub tasks: Vec<TaskSpec>,
    pub rsus: Vec<RsuSpec>,
    /// Capacities available to this snapshot, aligned with `rsus`. Equal to
    /// the nominal capacities unless scheduling on residual resources.
    pub capacities: Vec<Capacity>,
    pub profiles: ExecutionProfile,
    links: BTreeMap<(VehicleId, RsuId), LinkState>,
}

impl ProblemInstance {
    pub fn new(
        tasks: Vec<TaskSpec>,
        rsus: Vec<RsuSpec>,
        profiles: ExecutionProfile,
        links: Vec<LinkState>,
    ) -> Result<Self, ModelError> {
        let capacities = rsus.iter().map(RsuSpec::capacity).collect();
        Self::with_capacities(tasks, rsus, capacities, profiles, links)
    }

    pub fn with_capacities(
        mut tasks: Vec<TaskSpec>,
        mut rsus: Vec<RsuSpec>,
        capacities: Vec<Capacity>,
        profiles: ExecutionProfile,
        links: Vec<LinkState>,
    ) -> Result<Self, ModelError> {
        assert_eq!(rsus.len(), capacities.len(), "one capacity per rsu");
        for t in &tasks {
            t.check()?;
        }
        let mut paired: Vec<(RsuSpec, Capacity)> = rsus.drain(..).zip(capacities).collect();
        for (r, cap) in &paired {
            r.check()?;
            if cap.rbs > r.total_rbs || cap.cus > r.total_cus {
                return Err(ModelError::ResidualExceedsNominal(r.id));
            }
        }
        tasks.sort_by_key(|t| t.id);
        paired.sort_by_key(|(r, _)| r.id);
        if let Some(w) = tasks.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(ModelError::DuplicateId("task", w[0].id.0));
        }
        if let Some(w) = paired.windows(2).find(|w| w[0].0.id == w[1].0.id) {
            return Err(ModelError::DuplicateId("rsu", w[0].0.id.0));
        }
        profiles.check()?;
        let (rsus, capacities): (Vec<_>, Vec<_>) = paired.into_iter().unzip();

        let mut map = BTreeMap::new();
        for l in links {
            if !tasks.iter().any(|t| t.vehicle_id == l.vehicle_id) {
                return Err(ModelError::InvalidLink(
                    l.vehicle_id,
                    l.rsu_id,
                    "no task runs on this vehicle".into(),
                ));
            }
            if rsus.binary_search_by_key(&l.rsu_id, |r| r.id).is_err() {
                return Err(ModelError::InvalidLink(
                    l.vehicle_id,
                    l.rsu_id,
                    "unknown rsu".into(),
                ));
            }
            if l.accessible && !(l.rate_mb_per_rb_s > 0.0) {
                return Err(ModelError::InvalidLink(
                    l.vehicle_id,
                    l.rsu_id,
                    "accessible link needs a positive rate".into(),
                ));
            }
            map.insert((l.vehicle_id, l.rsu_id), l);
        }
        Ok(Self {
            tasks,
            rsus,
            capacities,
            profiles,
            links: map,
        })
    }

    pub fn empty() -> Self {
        Self {
            tasks: Vec::new(),
            rsus: Vec::new(),
            capacities: Vec::new(),
            profiles: ExecutionProfile::new(),
            links: BTreeMap::new(),
        }
    }

    pub fn link(&self, vehicle: VehicleId, rsu: RsuId) -> Option<&LinkState> {
        self.links.get(&(vehicle, rsu))
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkState> {
        self.links.values()
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskSpec> {
        self.tasks
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.tasks[i])
    }

    pub fn rsu_index(&self, id: RsuId) -> Option<usize> {
        self.rsus.binary_search_by_key(&id, |r| r.id).ok()
    }

    pub fn rsu(&self, id: RsuId) -> Option<&RsuSpec> {
        self.rsu_index(id).map(|i| &self.rsus[i])
    }

    pub fn capacity(&self, id: RsuId) -> Option<Capacity> {
        self.rsu_index(id).map(|i| self.capacities[i])
    }
}

/// A solution to the offloading problem: the selected service instances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Selected instances, ordered by (task, rsu). Well-formed assignments
    /// hold at most one per task; `validate` reports otherwise.
    pub selected: Vec<ServiceInstance>,
    pub usage: BTreeMap<RsuId, Capacity>,
    pub total_utility: f64,
}

impl Assignment {
    pub fn from_instances<I>(instances: I) -> Self
    where
        I: IntoIterator<Item = ServiceInstance>,
    {
        let mut selected: Vec<ServiceInstance> = instances.into_iter().collect();
        selected.sort_by_key(|s| (s.task_id, s.rsu_id, s.id));
        let mut usage: BTreeMap<RsuId, Capacity> = BTreeMap::new();
        for s in &selected {
            let u = usage.entry(s.rsu_id).or_default();
            u.rbs += s.rbs;
            u.cus += s.cus;
        }
        let total_utility = selected.iter().map(|s| s.utility).sum();
        Self {
            selected,
            usage,
            total_utility,
        }
    }

    pub fn for_task(&self, task: TaskId) -> Option<&ServiceInstance> {
        self.selected.iter().find(|s| s.task_id == task)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// A broken constraint of the offloading problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    UnknownTask(TaskId),
    UnknownRsu(RsuId),
    MultipleChoice(TaskId),
    RbCapacity(RsuId),
    CuCapacity(RsuId),
    Inaccessible { task: TaskId, rsu: RsuId },
    DeadlineMiss { task: TaskId, rsu: RsuId },
    UsageMismatch(RsuId),
    UtilityMismatch { reported: f64, recomputed: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownTask(t) => write!(f, "unknown task {t}"),
            Violation::UnknownRsu(r) => write!(f, "unknown rsu {r}"),
            Violation::MultipleChoice(t) => write!(f, "task {t} selected more than once"),
            Violation::RbCapacity(r) => write!(f, "rsu {r} RB capacity exceeded"),
            Violation::CuCapacity(r) => write!(f, "rsu {r} CU capacity exceeded"),
            Violation::Inaccessible { task, rsu } => {
                write!(f, "task {task} placed on inaccessible rsu {rsu}")
            }
            Violation::DeadlineMiss { task, rsu } => {
                write!(f, "task {task} on rsu {rsu} misses its deadline")
            }
            Violation::UsageMismatch(r) => write!(f, "rsu {r} usage does not match selections"),
            Violation::UtilityMismatch {
                reported,
                recomputed,
            } => write!(f, "total utility {reported} != {recomputed}"),
        }
    }
}

/// Checks an assignment against every constraint of the problem.
pub fn validate(assignment: &Assignment, instance: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut per_task: BTreeMap<TaskId, usize> = BTreeMap::new();
    let mut usage: BTreeMap<RsuId, Capacity> = BTreeMap::new();

    for s in &assignment.selected {
        *per_task.entry(s.task_id).or_default() += 1;
        let Some(task) = instance.task(s.task_id) else {
            out.push(Violation::UnknownTask(s.task_id));
            continue;
        };
        let Some(rsu) = instance.rsu(s.rsu_id) else {
            out.push(Violation::UnknownRsu(s.rsu_id));
            continue;
        };
        let u = usage.entry(s.rsu_id).or_default();
        u.rbs += s.rbs;
        u.cus += s.cus;
        match instance.link(task.vehicle_id, rsu.id) {
            Some(link) if link.accessible => {
                if !deadline_feasible(task, rsu, s.rbs, s.cus, link, &instance.profiles) {
                    out.push(Violation::DeadlineMiss {
                        task: task.id,
                        rsu: rsu.id,
                    });
                }
            }
            _ => out.push(Violation::Inaccessible {
                task: task.id,
                rsu: rsu.id,
            }),
        }
    }
    for (&t, &n) in &per_task {
        if n > 1 {
            out.push(Violation::MultipleChoice(t));
        }
    }
    for (&r, used) in &usage {
        if let Some(cap) = instance.capacity(r) {
            if used.rbs > cap.rbs {
                out.push(Violation::RbCapacity(r));
            }
            if used.cus > cap.cus {
                out.push(Violation::CuCapacity(r));
            }
        }
    }
    let reported_usage: BTreeMap<RsuId, Capacity> = assignment
        .usage
        .iter()
        .filter(|(_, c)| c.rbs > 0 || c.cus > 0)
        .map(|(k, v)| (*k, *v))
        .collect();
    for r in usage.keys().chain(reported_usage.keys()) {
        if usage.get(r) != reported_usage.get(r) && !out.contains(&Violation::UsageMismatch(*r)) {
            out.push(Violation::UsageMismatch(*r));
        }
    }
    let recomputed: f64 = assignment.selected.iter().map(|s| s.utility).sum();
    if (recomputed - assignment.total_utility).abs() > 1e-9 * recomputed.abs().max(1.0) {
        out.push(Violation::UtilityMismatch {
            reported: assignment.total_utility,
            recomputed,
        });
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub const MU: f64 = 0.13704;

    pub fn task(id: u32, vehicle: u32) -> TaskSpec {
        TaskSpec {
            id: TaskId(id),
            vehicle_id: VehicleId(vehicle),
            service_type: "det".into(),
            period_s: 0.05,
            input_mb: 0.1,
            local_exec_s: 0.04,
            local_power_w: 6.0,
            offload_power_w: 2.0,
            criticality: Criticality::SafetyCritical,
        }
    }

    pub fn rsu(id: u32, rbs: u32, cus: u32) -> RsuSpec {
        RsuSpec {
            id: RsuId(id),
            total_rbs: rbs,
            total_cus: cus,
            hardware_class: "gpu".into(),
            init_delay_s: 0.0,
            position_m: (0.0, 0.0),
        }
    }

    pub fn link(vehicle: u32, rsu: u32, rate: f64) -> LinkState {
        LinkState {
            vehicle_id: VehicleId(vehicle),
            rsu_id: RsuId(rsu),
            rate_mb_per_rb_s: rate,
            accessible: true,
        }
    }

    pub fn flat_profile(proc_s: f64, max_cus: u32) -> ExecutionProfile {
        let mut p = ExecutionProfile::new();
        for c in 1..=max_cus {
            p.insert("det", "gpu", c, proc_s);
        }
        p
    }
}
