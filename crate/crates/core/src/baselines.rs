//! Comparison heuristics. These are reconstructions from short
//! descriptions; the internal details (sub-solvers, deviation set,
//! light/heavy threshold) are our own choices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use crate::instance::{InstancePool, ServiceInstance};
use crate::model::{Assignment, Capacity, ProblemInstance, RsuId, TaskId};

const GAIN_EPS: f64 = 1e-12;

pub const DEFAULT_MAX_ROUNDS: usize = 20;

/// Default best-response cap: ten deviations per task.
pub fn default_max_iters(n_tasks: usize) -> usize {
    (10 * n_tasks).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyScore {
    pub instance_id: usize,
    pub psi: f64,
}

pub fn efficiency(pool: &InstancePool, id: usize) -> EfficiencyScore {
    let s = pool.get(id);
    let cap = pool.capacity(s.rsu_id).expect("instance on a known RSU");
    let frac = (s.rbs as f64 / cap.rbs as f64) * (s.cus as f64 / cap.cus as f64);
    EfficiencyScore {
        instance_id: id,
        psi: s.utility / frac,
    }
}

/// Free capacity per RSU plus the current choice per task.
#[derive(Debug, Clone)]
struct State<'a> {
    pool: &'a InstancePool,
    free: BTreeMap<RsuId, (i64, i64)>,
    chosen: BTreeMap<TaskId, usize>,
}

impl<'a> State<'a> {
    fn new(pool: &'a InstancePool) -> Self {
        let free = pool
            .all_rsus()
            .map(|r| {
                let c = pool.capacity(r).unwrap();
                (r, (c.rbs as i64, c.cus as i64))
            })
            .collect();
        State {
            pool,
            free,
            chosen: BTreeMap::new(),
        }
    }

    fn from_ids(pool: &'a InstancePool, ids: &[usize]) -> Self {
        let mut st = State::new(pool);
        for &id in ids {
            let t = pool.get(id).task_id;
            if !st.chosen.contains_key(&t) && st.fits(id) {
                st.add(id);
            }
        }
        st
    }

    fn fits(&self, id: usize) -> bool {
        self.fits_with(id, &[])
    }

    /// Whether `id` fits once the instances in `released` are given back.
    fn fits_with(&self, id: usize, released: &[usize]) -> bool {
        let s = self.pool.get(id);
        let (mut b, mut c) = self.free[&s.rsu_id];
        for &r in released {
            let x = self.pool.get(r);
            if x.rsu_id == s.rsu_id {
                b += x.rbs as i64;
                c += x.cus as i64;
            }
        }
        s.rbs as i64 <= b && s.cus as i64 <= c
    }

    fn add(&mut self, id: usize) {
        let s = self.pool.get(id);
        let f = self.free.get_mut(&s.rsu_id).unwrap();
        f.0 -= s.rbs as i64;
        f.1 -= s.cus as i64;
        let prev = self.chosen.insert(s.task_id, id);
        debug_assert!(prev.is_none());
    }

    fn remove(&mut self, task: TaskId) -> Option<usize> {
        let id = self.chosen.remove(&task)?;
        let s = self.pool.get(id);
        let f = self.free.get_mut(&s.rsu_id).unwrap();
        f.0 += s.rbs as i64;
        f.1 += s.cus as i64;
        Some(id)
    }

    fn utility(&self) -> f64 {
        self.chosen
            .values()
            .map(|&id| self.pool.get(id).utility)
            .sum()
    }

    fn ids(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.chosen.values().copied().collect();
        v.sort_unstable();
        v
    }

    fn into_assignment(self) -> Assignment {
        Assignment::from_instances(self.ids().into_iter().map(|id| *self.pool.get(id)))
    }
}

fn greedy_fill(st: &mut State<'_>) {
    let pool = st.pool;
    let mut order: Vec<EfficiencyScore> = (0..pool.len()).map(|i| efficiency(pool, i)).collect();
    order.sort_by(|a, b| {
        b.psi
            .partial_cmp(&a.psi)
            .unwrap_or(Ordering::Equal)
            .then(a.instance_id.cmp(&b.instance_id))
    });
    for e in order {
        let t = pool.get(e.instance_id).task_id;
        if !st.chosen.contains_key(&t) && st.fits(e.instance_id) {
            st.add(e.instance_id);
        }
    }
}

/// Scans instances by decreasing resource efficiency.
pub fn greedy(pool: &InstancePool, _instance: &ProblemInstance) -> Assignment {
    let mut st = State::new(pool);
    greedy_fill(&mut st);
    st.into_assignment()
}

fn norm_cost(pool: &InstancePool, s: &ServiceInstance) -> f64 {
    let cap = pool.capacity(s.rsu_id).unwrap();
    s.rbs as f64 / cap.rbs as f64 + s.cus as f64 / cap.cus as f64
}

/// Offloading step: each assigned task keeps its (b, c) budget and moves to
/// the RSU offering the best utility within it. Unassigned tasks are then
/// placed greedily.
fn offloading_step(st: &mut State<'_>) {
    let pool = st.pool;
    let mut tasks: Vec<(TaskId, usize)> = st.chosen.iter().map(|(&t, &id)| (t, id)).collect();
    tasks.sort_by(|a, b| {
        pool.get(b.1)
            .utility
            .partial_cmp(&pool.get(a.1).utility)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    for (task, _) in tasks {
        let cur = st.chosen[&task];
        let (cb, cc, cu) = {
            let s = pool.get(cur);
            (s.rbs, s.cus, s.utility)
        };
        let mut best: Option<(usize, f64, f64)> = None;
        for &cand in pool.of_task(task) {
            let s = pool.get(cand);
            if cand == cur || s.rbs > cb || s.cus > cc || !st.fits_with(cand, &[cur]) {
                continue;
            }
            let cap = pool.capacity(s.rsu_id).unwrap();
            let (fb, fc) = st.free[&s.rsu_id];
            let residual = fb as f64 / cap.rbs as f64 + fc as f64 / cap.cus as f64;
            let better = match best {
                None => s.utility > cu + GAIN_EPS,
                Some((_, bu, br)) => {
                    s.utility > bu + GAIN_EPS || (s.utility >= bu - GAIN_EPS && residual > br)
                }
            };
            if better {
                best = Some((cand, s.utility, residual));
            }
        }
        if let Some((cand, _, _)) = best {
            st.remove(task);
            st.add(cand);
        }
    }
    greedy_fill(st);
}

/// Allocation step on one RSU: shrink every task to its cheapest instance
/// inside its current budget, then spend the freed resources on the upgrade
/// with the best utility gain per unit of normalized resource.
fn allocation_step(st: &mut State<'_>, rsu: RsuId) {
    let pool = st.pool;
    let before = st.clone();
    let on_rsu: Vec<TaskId> = st
        .chosen
        .iter()
        .filter(|(_, &id)| pool.get(id).rsu_id == rsu)
        .map(|(&t, _)| t)
        .collect();
    if on_rsu.is_empty() {
        return;
    }
    for &t in &on_rsu {
        let cur = *pool.get(st.chosen[&t]);
        let cheapest = pool
            .of_task(t)
            .iter()
            .copied()
            .filter(|&i| {
                let s = pool.get(i);
                s.rsu_id == rsu && s.rbs <= cur.rbs && s.cus <= cur.cus
            })
            .min_by(|&a, &b| {
                norm_cost(pool, pool.get(a))
                    .partial_cmp(&norm_cost(pool, pool.get(b)))
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            })
            .unwrap_or(cur.id);
        st.remove(t);
        st.add(cheapest);
    }
    loop {
        let mut best: Option<(usize, f64)> = None;
        for &t in &on_rsu {
            let cur = st.chosen[&t];
            let cs = *pool.get(cur);
            for &cand in pool.of_task(t) {
                let s = pool.get(cand);
                if s.rsu_id != rsu || s.utility <= cs.utility + GAIN_EPS {
                    continue;
                }
                if !st.fits_with(cand, &[cur]) {
                    continue;
                }
                let du = s.utility - cs.utility;
                let dr = norm_cost(pool, s) - norm_cost(pool, &cs);
                let score = if dr <= 0.0 { f64::INFINITY } else { du / dr };
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((cand, score));
                }
            }
        }
        let Some((cand, _)) = best else { break };
        st.remove(pool.get(cand).task_id);
        st.add(cand);
    }
    if st.utility() < before.utility() {
        *st = before;
    }
}

/// Alternates offloading and allocation steps, keeping the best state seen.
pub fn iterative(
    pool: &InstancePool,
    _instance: &ProblemInstance,
    max_rounds: usize,
) -> Assignment {
    iterative_rounds(pool, max_rounds.max(1))
        .0
        .into_assignment()
}

fn iterative_rounds(pool: &InstancePool, max_rounds: usize) -> (State<'_>, Vec<f64>) {
    let mut st = State::new(pool);
    greedy_fill(&mut st);
    let rsus: Vec<RsuId> = pool.all_rsus().collect();
    let mut best = st.clone();
    let mut history = Vec::with_capacity(max_rounds);
    for round in 0..max_rounds {
        if round > 0 {
            offloading_step(&mut st);
        }
        for &r in &rsus {
            allocation_step(&mut st, r);
        }
        let fixed = st.chosen == best.chosen;
        if st.utility() > best.utility() + GAIN_EPS {
            best = st.clone();
        }
        history.push(best.utility());
        if fixed && round > 0 {
            break;
        }
    }
    (best, history)
}

/// Best-response dynamics from the empty assignment.
pub fn game(pool: &InstancePool, instance: &ProblemInstance, max_iters: usize) -> Assignment {
    game_from(pool, instance, &[], max_iters)
}

/// Best-response dynamics from a given starting set. Entries that conflict
/// with earlier ones or exceed capacity are skipped.
pub fn game_from(
    pool: &InstancePool,
    _instance: &ProblemInstance,
    initial: &[usize],
    max_iters: usize,
) -> Assignment {
    let mut st = State::from_ids(pool, initial);
    for _ in 0..max_iters.max(1) {
        let mut best: Option<(usize, f64)> = None;
        for id in 0..pool.len() {
            let s = pool.get(id);
            let cur = st.chosen.get(&s.task_id).copied();
            if cur == Some(id) {
                continue;
            }
            let cur_u = cur.map_or(0.0, |c| pool.get(c).utility);
            let gain = s.utility - cur_u;
            if gain <= GAIN_EPS || best.is_some_and(|(_, g)| gain <= g) {
                continue;
            }
            let released: Vec<usize> = cur.into_iter().collect();
            if st.fits_with(id, &released) {
                best = Some((id, gain));
            }
        }
        let Some((id, _)) = best else { break };
        st.remove(pool.get(id).task_id);
        st.add(id);
    }
    st.into_assignment()
}

/// Half-capacity rule: an instance is heavy if it takes more than half of
/// either resource on its RSU.
pub fn is_heavy(pool: &InstancePool, id: usize) -> bool {
    let s = pool.get(id);
    let cap: Capacity = pool.capacity(s.rsu_id).unwrap();
    2 * s.rbs > cap.rbs || 2 * s.cus > cap.cus
}

#[derive(PartialEq)]
struct Keyed(f64, std::cmp::Reverse<usize>);

impl Eq for Keyed {}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Local-ratio pass over light instances, then heavy instances on what is
/// left.
pub fn id_assign(pool: &InstancePool, _instance: &ProblemInstance) -> Assignment {
    let n = pool.len();
    let light: Vec<bool> = (0..n).map(|i| !is_heavy(pool, i)).collect();
    let mut w: Vec<f64> = (0..n)
        .map(|i| if light[i] { pool.get(i).utility } else { 0.0 })
        .collect();
    let mut heap: BinaryHeap<Keyed> = (0..n)
        .filter(|&i| light[i] && w[i] > 0.0)
        .map(|i| Keyed(w[i], std::cmp::Reverse(i)))
        .collect();
    let mut stack: Vec<usize> = Vec::new();
    // Weights only decrease, so a stale heap entry is refreshed on pop.
    while let Some(Keyed(key, std::cmp::Reverse(id))) = heap.pop() {
        if w[id] <= 0.0 {
            continue;
        }
        if key != w[id] {
            heap.push(Keyed(w[id], std::cmp::Reverse(id)));
            continue;
        }
        let wl = w[id];
        stack.push(id);
        let s = *pool.get(id);
        let cap = pool.capacity(s.rsu_id).unwrap();
        for &sib in pool.of_task(s.task_id) {
            if light[sib] {
                w[sib] -= wl;
            }
        }
        for &other in pool.on_rsu(s.rsu_id) {
            let o = pool.get(other);
            if light[other] && o.task_id != s.task_id {
                w[other] -= wl * (o.rbs as f64 / cap.rbs as f64 + o.cus as f64 / cap.cus as f64);
            }
        }
    }

    let mut st = State::new(pool);
    for &id in stack.iter().rev() {
        if !st.chosen.contains_key(&pool.get(id).task_id) && st.fits(id) {
            st.add(id);
        }
    }
    // Leftover light instances first, then heavy ones, each by utility.
    let mut rest: Vec<usize> = (0..n)
        .filter(|&i| !st.chosen.contains_key(&pool.get(i).task_id))
        .collect();
    rest.sort_by(|&a, &b| {
        light[b]
            .cmp(&light[a])
            .then(
                pool.get(b)
                    .utility
                    .partial_cmp(&pool.get(a).utility)
                    .unwrap_or(Ordering::Equal),
            )
            .then(a.cmp(&b))
    });
    for id in rest {
        if !st.chosen.contains_key(&pool.get(id).task_id) && st.fits(id) {
            st.add(id);
        }
    }
    st.into_assignment()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RsuId;

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

    fn ids(a: &Assignment) -> Vec<usize> {
        a.selected.iter().map(|s| s.id).collect()
    }

    fn empty() -> ProblemInstance {
        ProblemInstance::empty()
    }

    #[test]
    fn efficiency_score() {
        let pool = pool_of(&[(1, 1, 2, 1, 6.0)], &[(1, 4, 2)]);
        let e = efficiency(&pool, 0);
        assert_eq!(e.psi, 6.0 / (0.5 * 0.5));
    }

    #[test]
    fn greedy_examples() {
        let one = pool_of(&[(1, 1, 1, 1, 3.0)], &[(1, 2, 2)]);
        assert_eq!(ids(&greedy(&one, &empty())), vec![0]);

        // psi 9 vs 7 for one task.
        let mc = pool_of(
            &[(1, 1, 1, 1, 9.0), (1, 2, 1, 1, 7.0)],
            &[(1, 1, 1), (2, 1, 1)],
        );
        assert_eq!(ids(&greedy(&mc, &empty())), vec![0]);

        let cross = pool_of(&[(1, 1, 2, 1, 6.0), (2, 1, 1, 2, 6.0)], &[(1, 2, 2)]);
        assert_eq!(efficiency(&cross, 0).psi, efficiency(&cross, 1).psi);
        assert_eq!(ids(&greedy(&cross, &empty())), vec![0]);
    }

    #[test]
    fn greedy_scale_invariant() {
        let items = [
            (1, 1, 1, 1, 3.0),
            (1, 1, 2, 2, 5.0),
            (2, 1, 1, 2, 4.0),
            (3, 2, 2, 1, 2.0),
            (3, 1, 1, 1, 1.5),
        ];
        let caps = [(1, 3, 3), (2, 2, 2)];
        let a = greedy(&pool_of(&items, &caps), &empty());
        let scaled: Vec<_> = items
            .iter()
            .map(|&(t, r, b, c, u)| (t, r, b, c, u * 7.5))
            .collect();
        let b = greedy(&pool_of(&scaled, &caps), &empty());
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn iterative_single_task_matches_greedy() {
        let pool = pool_of(&[(1, 1, 1, 1, 3.0), (1, 1, 2, 1, 4.0)], &[(1, 2, 2)]);
        let g = greedy(&pool, &empty());
        let it = iterative(&pool, &empty(), 1);
        assert!(it.total_utility >= g.total_utility);
        assert_eq!(
            ids(&iterative(&pool, &empty(), DEFAULT_MAX_ROUNDS)),
            vec![1]
        );
    }

    #[test]
    fn iterative_moves_task_to_idle_rsu() {
        // Greedy packs both tasks on the roomier RSU 1; RSU 2 gives task 2
        // more utility for the same budget.
        let pool = pool_of(
            &[(1, 1, 1, 1, 5.0), (2, 1, 1, 1, 5.0), (2, 2, 1, 1, 8.0)],
            &[(1, 2, 2), (2, 1, 1)],
        );
        let g = greedy(&pool, &empty());
        assert_eq!(ids(&g), vec![0, 1]);
        let (_, hist) = iterative_rounds(&pool, DEFAULT_MAX_ROUNDS);
        let it = iterative(&pool, &empty(), DEFAULT_MAX_ROUNDS);
        assert_eq!(ids(&it), vec![0, 2]);
        assert!(it.total_utility > g.total_utility);
        assert!(hist.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn allocation_step_reshapes_within_rsu() {
        // Task 1 grabbed a large instance; shrinking it lets task 2 upgrade.
        let pool = pool_of(
            &[
                (1, 1, 1, 1, 4.0),
                (1, 1, 3, 1, 4.5),
                (2, 1, 1, 1, 2.0),
                (2, 1, 3, 1, 6.0),
            ],
            &[(1, 4, 2)],
        );
        let mut st = State::from_ids(&pool, &[1, 2]);
        let before = st.utility();
        allocation_step(&mut st, RsuId(1));
        assert_eq!(st.ids(), vec![0, 3]);
        assert!(st.utility() > before);
    }

    #[test]
    fn game_examples() {
        let one = pool_of(
            &[(1, 1, 1, 1, 3.0), (1, 2, 1, 1, 5.0)],
            &[(1, 1, 1), (2, 1, 1)],
        );
        assert_eq!(ids(&game(&one, &empty(), 10)), vec![1]);

        let none = pool_of(&[], &[(1, 1, 1)]);
        assert!(game(&none, &empty(), 10).is_empty());

        // t1 sits on RSU 1, moves to RSU 2, then t2 takes RSU 1.
        let chain = pool_of(
            &[(1, 1, 1, 1, 5.0), (1, 2, 1, 1, 6.0), (2, 1, 1, 1, 4.0)],
            &[(1, 1, 1), (2, 1, 1)],
        );
        let start = game_from(&chain, &empty(), &[0], 1);
        assert_eq!(ids(&start), vec![1]);
        let done = game_from(&chain, &empty(), &[0], 10);
        assert_eq!(ids(&done), vec![1, 2]);
        assert_eq!(done.total_utility, 10.0);
    }

    #[test]
    fn id_assign_examples() {
        let packing = pool_of(
            &[
                (1, 1, 1, 1, 2.0),
                (2, 1, 1, 1, 3.0),
                (3, 1, 1, 1, 4.0),
                (4, 1, 1, 1, 1.0),
            ],
            &[(1, 4, 4)],
        );
        assert!((0..4).all(|i| !is_heavy(&packing, i)));
        assert_eq!(ids(&id_assign(&packing, &empty())), vec![0, 1, 2, 3]);

        let heavy = pool_of(&[(1, 1, 3, 1, 2.0)], &[(1, 4, 4)]);
        assert!(is_heavy(&heavy, 0));
        assert_eq!(ids(&id_assign(&heavy, &empty())), vec![0]);

        let blocked = pool_of(
            &[(1, 1, 2, 2, 3.0), (2, 1, 2, 2, 3.0), (3, 1, 3, 1, 10.0)],
            &[(1, 4, 4)],
        );
        assert!(is_heavy(&blocked, 2));
        assert_eq!(ids(&id_assign(&blocked, &empty())), vec![0, 1]);
    }
}
