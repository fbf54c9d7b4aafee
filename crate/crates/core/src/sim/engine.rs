use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::time::Instant;

use crate::instance::{enumerate, min_rbs_for, ServiceInstance};
use crate::model::{
    Capacity, Criticality, LinkState, ProblemInstance, RsuId, RsuSpec, TaskId, TaskSpec, VehicleId,
};
use crate::scenario::Scenario;

use super::channel::{rate_for_mcs, ChannelModel};
use super::mobility::distance;
use super::{CycleSnapshot, EventRecord, Metrics, Mode, SimConfig, SimError, SimOutput};

type Ns = i64;

/// Time, priority, event id, insertion sequence.
type Queued = (Ns, u8, u64, u64, Ev);

fn to_ns(s: f64) -> Ns {
    (s * 1e9).round() as Ns
}

fn to_s(ns: Ns) -> f64 {
    ns as f64 / 1e9
}

/// Event kinds in tie-break order for equal timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Srs { tick: u64 },
    Schedule { cycle: usize },
    GrantsIssued { batch: usize },
    ServiceReady { grant: usize },
    JobComplete { job: u64 },
    JobRelease { task: usize },
}

impl Ev {
    fn key(self) -> (u8, u64) {
        match self {
            Ev::Srs { tick } => (0, tick),
            Ev::Schedule { cycle } => (1, cycle as u64),
            Ev::GrantsIssued { batch } => (2, batch as u64),
            Ev::ServiceReady { grant } => (3, grant as u64),
            Ev::JobComplete { job } => (4, job),
            Ev::JobRelease { task } => (5, task as u64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitingInit,
    Active,
    Suspended,
    Terminated,
}

#[derive(Debug, Clone)]
struct Grant {
    task: usize,
    rsu: usize,
    scheduled: u32,
    granted: u32,
    cus: u32,
    proc_s: f64,
    utility: f64,
    phase: Phase,
    /// Per-RB rate as of the latest SRS on this link.
    rate: f64,
}

#[derive(Debug, Clone, Default)]
struct TaskState {
    grant: Option<usize>,
    history: VecDeque<bool>,
    first_release: Ns,
    releases: u64,
}

struct Batch {
    cycle: usize,
    selected: Vec<ServiceInstance>,
}

struct JobInFlight {
    task: usize,
    rsu: usize,
    met: bool,
}

#[derive(Default, Clone)]
struct CycleAcc {
    requests: usize,
    assigned: usize,
    predicted: f64,
    saved_j: f64,
    offloaded: u64,
    local: u64,
    suspensions: u64,
    resumptions: u64,
    latency_s: f64,
    runtime_s: Option<f64>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    sc: &'a Scenario,
    tasks: Vec<TaskSpec>,
    rsus: Vec<RsuSpec>,
    vehicles: Vec<VehicleId>,
    vehicle_of_task: Vec<usize>,
    tasks_of_vehicle: Vec<Vec<usize>>,
    channel: ChannelModel,
    heap: BinaryHeap<Reverse<Queued>>,
    seq: u64,
    now: Ns,
    srs_ns: Ns,
    interval_ns: Ns,
    end_ns: Ns,
    n_cycles: usize,
    /// Latest SRS refresh per (vehicle, rsu).
    last_srs: Vec<Vec<Option<Ns>>>,
    in_cov: Vec<Vec<bool>>,
    dist: Vec<Vec<f64>>,
    registered: Vec<bool>,
    free: Vec<(i64, i64)>,
    grants: Vec<Grant>,
    live: std::collections::BTreeSet<usize>,
    task_state: Vec<TaskState>,
    batches: Vec<Option<Batch>>,
    jobs: BTreeMap<u64, JobInFlight>,
    next_job: u64,
    cycles: Vec<CycleAcc>,
    metrics: Metrics,
    events: Vec<EventRecord>,
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: Ns, ev: Ev) {
        let (p, id) = ev.key();
        self.seq += 1;
        self.heap.push(Reverse((t, p, id, self.seq, ev)));
    }

    fn log(&mut self, kind: &str, task: Option<usize>, rsu: Option<usize>, detail: String) {
        self.events.push(EventRecord {
            t_s: to_s(self.now),
            kind: kind.to_string(),
            task_id: task.map(|i| self.tasks[i].id),
            rsu_id: rsu.map(|k| self.rsus[k].id),
            detail,
        });
    }

    fn cycle_at(&self, t: Ns) -> Option<usize> {
        if self.n_cycles == 0 {
            return None;
        }
        Some(((t / self.interval_ns) as usize).min(self.n_cycles - 1))
    }

    fn acc(&mut self) -> Option<&mut CycleAcc> {
        let c = self.cycle_at(self.now)?;
        self.cycles.get_mut(c)
    }

    fn srs_tick_at(&self, t: Ns) -> u64 {
        (t / self.srs_ns) as u64
    }

    fn current_rate(&mut self, vi: usize, k: usize) -> f64 {
        let tick = self.srs_tick_at(self.now);
        let d = self.dist[vi][k];
        let m = self
            .channel
            .mcs(self.vehicles[vi], self.rsus[k].id, tick, d);
        rate_for_mcs(m)
    }

    fn terminate(&mut self, g: usize, why: &str) {
        let gr = &mut self.grants[g];
        if gr.phase == Phase::Terminated {
            return;
        }
        gr.phase = Phase::Terminated;
        let (task, rsu, b, c) = (gr.task, gr.rsu, gr.granted, gr.cus);
        self.free[rsu].0 += b as i64;
        self.free[rsu].1 += c as i64;
        self.live.remove(&g);
        if self.task_state[task].grant == Some(g) {
            self.task_state[task].grant = None;
        }
        self.log("terminate", Some(task), Some(rsu), why.to_string());
    }

    /// Re-evaluates a grant against the current rate: release surplus
    /// top-up, top up from free RBs, or suspend.
    fn adjust(&mut self, g: usize, rate: f64) {
        let (task, rsu) = (self.grants[g].task, self.grants[g].rsu);
        self.grants[g].rate = rate;
        let required = min_rbs_for(&self.tasks[task], rate, self.grants[g].proc_s);
        let gr = self.grants[g].clone();
        let was = gr.phase;
        match required {
            Some(r) if r <= gr.granted => {
                let target = gr.scheduled.max(r);
                if gr.granted > target {
                    let back = gr.granted - target;
                    self.free[rsu].0 += back as i64;
                    self.grants[g].granted = target;
                    self.log("release", Some(task), Some(rsu), format!("rbs={back}"));
                }
                self.activate(g, was);
            }
            Some(r) if (r - gr.granted) as i64 <= self.free[rsu].0 => {
                let extra = r - gr.granted;
                self.free[rsu].0 -= extra as i64;
                self.grants[g].granted = r;
                self.log("topup", Some(task), Some(rsu), format!("rbs={extra}"));
                self.activate(g, was);
            }
            _ => {
                if gr.granted > gr.scheduled {
                    self.free[rsu].0 += (gr.granted - gr.scheduled) as i64;
                    self.grants[g].granted = gr.scheduled;
                }
                if was != Phase::Suspended {
                    self.grants[g].phase = Phase::Suspended;
                    self.metrics.suspensions += 1;
                    if let Some(a) = self.acc() {
                        a.suspensions += 1;
                    }
                    let need = required.map_or("none".to_string(), |r| r.to_string());
                    self.log("suspend", Some(task), Some(rsu), format!("required={need}"));
                }
            }
        }
    }

    fn activate(&mut self, g: usize, was: Phase) {
        let (task, rsu) = (self.grants[g].task, self.grants[g].rsu);
        match was {
            Phase::Active => {}
            Phase::Suspended => {
                self.metrics.resumptions += 1;
                if let Some(a) = self.acc() {
                    a.resumptions += 1;
                }
                self.log("resume", Some(task), Some(rsu), String::new());
            }
            _ => self.log("active", Some(task), Some(rsu), String::new()),
        }
        self.grants[g].phase = Phase::Active;
    }

    fn on_srs(&mut self, tick: u64) {
        let t_s = to_s(self.now);
        let radius = self.cfg.coverage_radius_m;
        for vi in 0..self.vehicles.len() {
            let v = self.vehicles[vi];
            let pos = self.sc.traces.position(v, t_s);
            let mut any = false;
            for k in 0..self.rsus.len() {
                let d = pos.map_or(f64::INFINITY, |p| distance(p, self.rsus[k].position_m));
                let covered = d <= radius;
                self.dist[vi][k] = d;
                self.in_cov[vi][k] = covered;
                any |= covered;
                let outage = self
                    .sc
                    .channel
                    .srs_outages
                    .iter()
                    .any(|o| o.covers(v, self.rsus[k].id, t_s));
                if covered && !outage {
                    self.last_srs[vi][k] = Some(self.now);
                }
            }
            if any != self.registered[vi] {
                self.registered[vi] = any;
                let tasks = self.tasks_of_vehicle[vi].clone();
                for ti in tasks {
                    if any {
                        self.log("register", Some(ti), None, String::new());
                    } else {
                        if let Some(g) = self.task_state[ti].grant {
                            self.terminate(g, "left coverage");
                        }
                        self.log("deregister", Some(ti), None, String::new());
                    }
                }
            }
        }
        let live: Vec<usize> = self.live.iter().copied().collect();
        for g in live {
            let (task, k) = (self.grants[g].task, self.grants[g].rsu);
            let vi = self.vehicle_of_task[task];
            if !self.in_cov[vi][k] {
                self.terminate(g, "left coverage");
                continue;
            }
            if self.grants[g].phase == Phase::AwaitingInit || self.last_srs[vi][k] != Some(self.now)
            {
                continue;
            }
            let rate = self.current_rate(vi, k);
            if rate != self.grants[g].rate || self.grants[g].phase == Phase::Suspended {
                self.adjust(g, rate);
            }
        }
        let next = self.now + self.srs_ns;
        if next < self.end_ns {
            self.push(next, Ev::Srs { tick: tick + 1 });
        }
    }

    fn on_schedule(&mut self, cycle: usize) {
        let prev = if cycle == 0 {
            Ns::MIN
        } else {
            self.now - self.interval_ns
        };
        if self.cfg.mode == Mode::SchedAll {
            let live: Vec<usize> = self.live.iter().copied().collect();
            for g in live {
                self.terminate(g, "reschedule");
            }
        }
        let requests: Vec<usize> = (0..self.tasks.len())
            .filter(|&i| self.registered[self.vehicle_of_task[i]])
            .filter(|&i| self.task_state[i].grant.is_none())
            .collect();
        let mut links = Vec::new();
        let mut seen_vehicles = std::collections::BTreeSet::new();
        for &i in &requests {
            let vi = self.vehicle_of_task[i];
            if !seen_vehicles.insert(vi) {
                continue;
            }
            for k in 0..self.rsus.len() {
                let fresh = self.last_srs[vi][k].is_some_and(|t| t > prev);
                if !(fresh && self.in_cov[vi][k]) {
                    continue;
                }
                let rate = self.current_rate(vi, k);
                links.push(LinkState {
                    vehicle_id: self.vehicles[vi],
                    rsu_id: self.rsus[k].id,
                    rate_mb_per_rb_s: rate,
                    accessible: true,
                });
            }
        }
        let caps: Vec<Capacity> = self
            .free
            .iter()
            .map(|&(b, c)| Capacity {
                rbs: b.max(0) as u32,
                cus: c.max(0) as u32,
            })
            .collect();
        let inst = ProblemInstance::with_capacities(
            requests.iter().map(|&i| self.tasks[i].clone()).collect(),
            self.rsus.clone(),
            caps,
            self.sc.profiles.clone(),
            links,
        )
        .expect("snapshot built from a validated scenario");
        let started = Instant::now();
        let pool = enumerate(&inst, true);
        let assignment = self.cfg.algorithm.run(&pool, &inst);
        let runtime = started.elapsed().as_secs_f64();
        let latency = if self.cfg.measured_latency {
            runtime
        } else {
            self.cfg.scheduler_latency_s
        };
        let record = self.cfg.record_runtime;
        if let Some(a) = self.cycles.get_mut(cycle) {
            a.requests = requests.len();
            a.latency_s = latency;
            a.runtime_s = record.then_some(runtime);
        }
        self.log(
            "schedule",
            None,
            None,
            format!(
                "cycle={cycle} requests={} selected={} utility={}",
                requests.len(),
                assignment.len(),
                assignment.total_utility
            ),
        );
        let batch = self.batches.len();
        self.batches.push(Some(Batch {
            cycle,
            selected: assignment.selected,
        }));
        self.push(self.now + to_ns(latency), Ev::GrantsIssued { batch });
    }

    fn task_index(&self, id: TaskId) -> usize {
        self.tasks
            .binary_search_by_key(&id, |t| t.id)
            .expect("assignment refers to a scenario task")
    }

    fn rsu_index(&self, id: RsuId) -> usize {
        self.rsus
            .binary_search_by_key(&id, |r| r.id)
            .expect("assignment refers to a scenario rsu")
    }

    fn on_grants(&mut self, batch: usize) {
        let Some(b) = self.batches[batch].take() else {
            return;
        };
        for s in &b.selected {
            let (ti, k) = (self.task_index(s.task_id), self.rsu_index(s.rsu_id));
            let vi = self.vehicle_of_task[ti];
            let fits = self.free[k].0 >= s.rbs as i64 && self.free[k].1 >= s.cus as i64;
            if self.task_state[ti].grant.is_some() || !self.in_cov[vi][k] || !fits {
                self.log("grant_dropped", Some(ti), Some(k), String::new());
                continue;
            }
            let proc_s = self
                .sc
                .profiles
                .proc_time(
                    &self.tasks[ti].service_type,
                    &self.rsus[k].hardware_class,
                    s.cus,
                )
                .expect("instance has a profile entry");
            self.free[k].0 -= s.rbs as i64;
            self.free[k].1 -= s.cus as i64;
            let g = self.grants.len();
            self.grants.push(Grant {
                task: ti,
                rsu: k,
                scheduled: s.rbs,
                granted: s.rbs,
                cus: s.cus,
                proc_s,
                utility: s.utility,
                phase: Phase::AwaitingInit,
                rate: 0.0,
            });
            self.live.insert(g);
            self.task_state[ti].grant = Some(g);
            self.log(
                "grant",
                Some(ti),
                Some(k),
                format!("rbs={} cus={}", s.rbs, s.cus),
            );
            let ready = self.now + to_ns(self.rsus[k].init_delay_s);
            self.push(ready, Ev::ServiceReady { grant: g });
        }
        let predicted: f64 = self.live.iter().map(|&g| self.grants[g].utility).sum();
        let assigned = self.live.len();
        if let Some(a) = self.cycles.get_mut(b.cycle) {
            a.predicted = predicted;
            a.assigned = assigned;
        }
    }

    fn on_ready(&mut self, g: usize) {
        if self.grants[g].phase != Phase::AwaitingInit {
            return;
        }
        let (task, k) = (self.grants[g].task, self.grants[g].rsu);
        let vi = self.vehicle_of_task[task];
        if !self.in_cov[vi][k] {
            self.terminate(g, "left coverage");
            return;
        }
        let rate = self.current_rate(vi, k);
        self.adjust(g, rate);
    }

    fn on_release(&mut self, ti: usize) {
        let task = self.tasks[ti].clone();
        self.metrics.total_jobs += 1;
        let grant = self.task_state[ti]
            .grant
            .filter(|&g| self.grants[g].phase == Phase::Active);
        let offload = match (task.criticality, grant) {
            (_, None) => false,
            (Criticality::SafetyCritical, Some(_)) => true,
            (Criticality::MkConstrained { m, k }, Some(_)) => {
                let h = &self.task_state[ti].history;
                let window = (k as usize).saturating_sub(1);
                let met = h.iter().rev().take(window).filter(|&&x| x).count();
                met >= m as usize
            }
        };
        let run_local = !offload || task.criticality == Criticality::SafetyCritical;
        let mut met = true;
        if run_local {
            self.metrics.local_jobs += 1;
            if let Some(a) = self.acc() {
                a.local += 1;
            }
            if self.cfg.log_jobs {
                self.log("job_local", Some(ti), None, String::new());
            }
        }
        if offload {
            let g = grant.unwrap();
            let gr = &self.grants[g];
            let d_o = task.input_mb / (gr.granted as f64 * gr.rate);
            let d_p = gr.proc_s;
            let ok = d_o + d_p <= task.period_s;
            let saved = if ok {
                task.local_power_w * task.local_exec_s - task.offload_power_w * d_o
            } else {
                0.0
            };
            met = ok || run_local;
            let rsu = gr.rsu;
            self.metrics.offloaded_jobs += 1;
            if let Some(a) = self.acc() {
                a.offloaded += 1;
                a.saved_j += saved;
            }
            let job = self.next_job;
            self.next_job += 1;
            self.jobs.insert(
                job,
                JobInFlight {
                    task: ti,
                    rsu,
                    met: ok,
                },
            );
            if self.cfg.log_jobs {
                self.log(
                    "job_offload",
                    Some(ti),
                    Some(rsu),
                    format!("rbs={} d_o={d_o} d_p={d_p}", self.grants[g].granted),
                );
            }
            self.push(self.now + to_ns(d_o + d_p), Ev::JobComplete { job });
        }
        let st = &mut self.task_state[ti];
        st.history.push_back(met);
        if let Criticality::MkConstrained { k, .. } = task.criticality {
            while st.history.len() > k as usize {
                st.history.pop_front();
            }
        } else {
            st.history.clear();
        }
        st.releases += 1;
        let next = st.first_release + st.releases as Ns * to_ns(task.period_s);
        let vi = self.vehicle_of_task[ti];
        let (_, until) = self
            .sc
            .traces
            .span(self.vehicles[vi])
            .expect("released tasks have traces");
        if next < self.end_ns && next <= to_ns(until) {
            self.push(next, Ev::JobRelease { task: ti });
        }
    }

    fn on_complete(&mut self, job: u64) {
        let j = self.jobs.remove(&job).expect("job in flight");
        if !j.met {
            self.metrics.deadline_misses += 1;
            self.log("deadline_miss", Some(j.task), Some(j.rsu), String::new());
        } else if self.cfg.log_jobs {
            self.log("job_complete", Some(j.task), Some(j.rsu), String::new());
        }
    }

    fn finish(mut self) -> SimOutput {
        let duration = to_s(self.end_ns);
        let n = self.n_cycles;
        let interval = to_s(self.interval_ns);
        let rows: Vec<CycleSnapshot> = self
            .cycles
            .iter()
            .enumerate()
            .map(|(c, a)| {
                let start = c as f64 * interval;
                let span = if c + 1 == n {
                    duration - start
                } else {
                    interval
                };
                let per_s = |x: f64| if span > 0.0 { x / span } else { 0.0 };
                CycleSnapshot {
                    cycle: c,
                    start_s: start,
                    span_s: span,
                    requests: a.requests,
                    assigned: a.assigned,
                    predicted_js: a.predicted,
                    measured_js: per_s(a.saved_j),
                    offloaded_jobs: a.offloaded,
                    offloaded_jobs_per_s: per_s(a.offloaded as f64),
                    local_jobs: a.local,
                    suspensions: a.suspensions,
                    resumptions: a.resumptions,
                    scheduler_latency_s: a.latency_s,
                    algorithm_runtime_s: a.runtime_s,
                }
            })
            .collect();
        // An empty float sum is -0.0.
        let saved: f64 = self.cycles.iter().map(|a| a.saved_j).sum::<f64>() + 0.0;
        let m = &mut self.metrics;
        m.duration_s = duration;
        m.cycles = rows;
        m.summarize();
        if duration > 0.0 {
            m.measured_js = saved / duration;
            m.offloaded_jobs_per_s = m.offloaded_jobs as f64 / duration;
        }
        SimOutput {
            metrics: self.metrics,
            events: self.events,
        }
    }
}

/// Runs one simulation of `scenario` under `cfg`.
pub fn run(scenario: &Scenario, cfg: &SimConfig) -> Result<SimOutput, SimError> {
    scenario.check().map_err(SimError::Config)?;
    let min_period = scenario
        .tasks
        .iter()
        .map(|t| t.period_s)
        .min_by(f64::total_cmp);
    cfg.check(min_period).map_err(SimError::Config)?;

    let mut tasks = scenario.tasks.clone();
    tasks.sort_by_key(|t| t.id);
    let mut rsus = scenario.rsus.clone();
    rsus.sort_by_key(|r| r.id);
    let mut vehicles: Vec<VehicleId> = tasks.iter().map(|t| t.vehicle_id).collect();
    vehicles.sort();
    vehicles.dedup();
    let vehicle_of_task: Vec<usize> = tasks
        .iter()
        .map(|t| vehicles.binary_search(&t.vehicle_id).unwrap())
        .collect();
    let mut tasks_of_vehicle = vec![Vec::new(); vehicles.len()];
    for (i, &vi) in vehicle_of_task.iter().enumerate() {
        tasks_of_vehicle[vi].push(i);
    }
    let (nv, nr) = (vehicles.len(), rsus.len());
    let n_cycles = cfg.cycles();
    let channel = ChannelModel::new(
        &scenario.channel,
        cfg.quality,
        cfg.rng_seed,
        cfg.coverage_radius_m,
        cfg.srs_interval_s,
    );
    let mut sim = Sim {
        cfg,
        sc: scenario,
        free: rsus
            .iter()
            .map(|r| (r.total_rbs as i64, r.total_cus as i64))
            .collect(),
        tasks,
        rsus,
        vehicles,
        vehicle_of_task,
        tasks_of_vehicle,
        channel,
        heap: BinaryHeap::new(),
        seq: 0,
        now: 0,
        srs_ns: to_ns(cfg.srs_interval_s),
        interval_ns: to_ns(cfg.schedule_interval_s),
        end_ns: to_ns(cfg.duration_s),
        n_cycles,
        last_srs: vec![vec![None; nr]; nv],
        in_cov: vec![vec![false; nr]; nv],
        dist: vec![vec![f64::INFINITY; nr]; nv],
        registered: vec![false; nv],
        grants: Vec::new(),
        live: Default::default(),
        task_state: Vec::new(),
        batches: Vec::new(),
        jobs: BTreeMap::new(),
        next_job: 0,
        cycles: vec![CycleAcc::default(); n_cycles],
        metrics: Metrics::default(),
        events: Vec::new(),
    };
    if sim.end_ns > 0 {
        sim.push(0, Ev::Srs { tick: 0 });
    }
    for c in 0..n_cycles {
        sim.push(c as Ns * sim.interval_ns, Ev::Schedule { cycle: c });
    }
    for i in 0..sim.tasks.len() {
        let v = sim.tasks[i].vehicle_id;
        let mut st = TaskState::default();
        if let Some((from, _)) = scenario.traces.span(v) {
            st.first_release = to_ns(from.max(0.0));
            if st.first_release < sim.end_ns {
                sim.push(st.first_release, Ev::JobRelease { task: i });
            }
        }
        sim.task_state.push(st);
    }

    while let Some(Reverse((t, _, _, _, ev))) = sim.heap.pop() {
        sim.now = t;
        match ev {
            Ev::Srs { tick } => sim.on_srs(tick),
            Ev::Schedule { cycle } => sim.on_schedule(cycle),
            Ev::GrantsIssued { batch } => sim.on_grants(batch),
            Ev::ServiceReady { grant } => sim.on_ready(grant),
            Ev::JobComplete { job } => sim.on_complete(job),
            Ev::JobRelease { task } => sim.on_release(task),
        }
        debug_assert!(sim.free.iter().zip(&sim.rsus).all(|(f, r)| f.0 >= 0
            && f.1 >= 0
            && f.0 <= r.total_rbs as i64
            && f.1 <= r.total_cus as i64));
    }
    Ok(sim.finish())
}

/// The problem the scheduler would see at `t_s` with all RSUs idle: every
/// vehicle in coverage requests service, links carry the channel rate at the
/// SRS tick containing `t_s`.
pub fn snapshot(
    scenario: &Scenario,
    cfg: &SimConfig,
    t_s: f64,
) -> Result<ProblemInstance, SimError> {
    scenario.check().map_err(SimError::Config)?;
    cfg.check(None).map_err(SimError::Config)?;
    let mut channel = ChannelModel::new(
        &scenario.channel,
        cfg.quality,
        cfg.rng_seed,
        cfg.coverage_radius_m,
        cfg.srs_interval_s,
    );
    let tick = (to_ns(t_s) / to_ns(cfg.srs_interval_s)) as u64;
    let mut rsus = scenario.rsus.clone();
    rsus.sort_by_key(|r| r.id);
    let mut links = Vec::new();
    let mut requesting = std::collections::BTreeSet::new();
    for (v, _) in scenario.traces.iter() {
        let Some(pos) = scenario.traces.position(v, t_s) else {
            continue;
        };
        for r in &rsus {
            let d = distance(pos, r.position_m);
            if d > cfg.coverage_radius_m {
                continue;
            }
            requesting.insert(v);
            if scenario
                .channel
                .srs_outages
                .iter()
                .any(|o| o.covers(v, r.id, t_s))
            {
                continue;
            }
            links.push(LinkState {
                vehicle_id: v,
                rsu_id: r.id,
                rate_mb_per_rb_s: rate_for_mcs(channel.mcs(v, r.id, tick, d)),
                accessible: true,
            });
        }
    }
    let tasks = scenario
        .tasks
        .iter()
        .filter(|t| requesting.contains(&t.vehicle_id))
        .cloned()
        .collect();
    Ok(ProblemInstance::new(
        tasks,
        rsus,
        scenario.profiles.clone(),
        links,
    )?)
}
