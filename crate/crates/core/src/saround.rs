//! SARound: per-RSU LP rounding combined with a local-ratio recursion over
//! RSUs. Each layer solves one RSU's relaxation, rounds it down, and passes
//! the marginal weights of the remaining instances to the next layer; the
//! unwind keeps a layer's picks only for tasks not claimed further down.

use std::collections::BTreeSet;

use crate::instance::InstancePool;
use crate::lp::{build_rsu_lp, floor_snapped, solve_lp, BasicSolution, LpError, RsuLp};
use crate::model::{validate, Assignment, ProblemInstance, RsuId, TaskId};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SaRoundConfig {
    /// Layer order. RSUs missing from the list are appended ascending;
    /// `None` means ascending id.
    pub rsu_order: Option<Vec<RsuId>>,
}

/// The LP behind one rounding step, kept for structural checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LpTrace {
    pub rsu_lp: RsuLp,
    pub solution: BasicSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorRdOutcome {
    pub selected: Vec<usize>,
    /// Instances whose LP value rounded to 1.
    pub rounded: Vec<usize>,
    /// Largest-weight instance on the RSU, if any has positive weight.
    pub best_single: Option<usize>,
    pub lp: Option<LpTrace>,
}

/// Rounds the RSU's relaxation down and returns the better of the integral
/// part and the single heaviest instance (ties keep the rounded set).
pub fn floor_rd(pool: &InstancePool, rsu_id: RsuId, weights: &[f64]) -> Vec<usize> {
    floor_rd_traced(pool, rsu_id, weights)
        .expect("per-RSU relaxation is bounded and feasible at the origin")
        .selected
}

pub fn floor_rd_traced(
    pool: &InstancePool,
    rsu_id: RsuId,
    weights: &[f64],
) -> Result<FloorRdOutcome, LpError> {
    let mut best_single: Option<usize> = None;
    for &id in pool.on_rsu(rsu_id) {
        let w = weights[id];
        if w > 0.0 && best_single.is_none_or(|b| w > weights[b]) {
            best_single = Some(id);
        }
    }
    let Some(top) = best_single else {
        if pool.capacity(rsu_id).is_none() {
            return Err(LpError::UnknownRsu(rsu_id));
        }
        return Ok(FloorRdOutcome {
            selected: Vec::new(),
            rounded: Vec::new(),
            best_single: None,
            lp: None,
        });
    };

    let rsu_lp = build_rsu_lp(pool, rsu_id, weights)?;
    let solution = solve_lp(&rsu_lp.lp)?;
    let rounded: Vec<usize> = rsu_lp
        .vars
        .iter()
        .zip(&solution.values)
        .filter(|(_, &z)| floor_snapped(z) >= 1)
        .map(|(&id, _)| id)
        .collect();
    let rounded_weight: f64 = rounded.iter().map(|&id| weights[id]).sum();
    let selected = if rounded_weight < weights[top] {
        vec![top]
    } else {
        rounded.clone()
    };
    Ok(FloorRdOutcome {
        selected,
        rounded,
        best_single: Some(top),
        lp: Some(LpTrace { rsu_lp, solution }),
    })
}

/// Splits `weights` into `(w1, w2)` around the instances selected on one
/// RSU. `w2` carries the marginal gain passed to the next layer and may be
/// negative; `w1 + w2` equals `weights` up to one rounding step.
pub fn decompose(
    weights: &[f64],
    pool: &InstancePool,
    rsu_id: RsuId,
    selected: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let mut w1 = vec![0.0; weights.len()];
    let mut w2 = weights.to_vec();
    for &id in selected {
        let w = weights[id];
        for &sib in pool.siblings(id) {
            if pool.get(sib).rsu_id != rsu_id {
                w1[sib] = w;
                w2[sib] = weights[sib] - w;
            }
        }
    }
    for &id in pool.on_rsu(rsu_id) {
        w1[id] = weights[id];
        w2[id] = 0.0;
    }
    (w1, w2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerResult {
    pub rsu_id: RsuId,
    /// Weight vector this layer rounded against.
    pub weights: Vec<f64>,
    pub floor_rd: FloorRdOutcome,
    /// The layer's picks surviving the unwind.
    pub kept: Vec<usize>,
    /// Picks from this layer and all later ones.
    pub merged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaRoundTrace {
    pub layers: Vec<LayerResult>,
    pub selected: Vec<usize>,
}

fn layer_order(pool: &InstancePool, cfg: &SaRoundConfig) -> Vec<RsuId> {
    let all: Vec<RsuId> = pool.all_rsus().collect();
    match &cfg.rsu_order {
        None => all,
        Some(order) => {
            let mut seen = BTreeSet::new();
            let mut out: Vec<RsuId> = order
                .iter()
                .copied()
                .filter(|r| all.contains(r) && seen.insert(*r))
                .collect();
            out.extend(all.into_iter().filter(|r| !seen.contains(r)));
            out
        }
    }
}

/// Runs the layered rounding and returns every layer for inspection.
pub fn saround_traced(pool: &InstancePool, cfg: &SaRoundConfig) -> Result<SaRoundTrace, LpError> {
    let order = layer_order(pool, cfg);
    let mut layers: Vec<LayerResult> = Vec::with_capacity(order.len());
    let mut w = pool.base_utilities();
    for &rsu in &order {
        let f = floor_rd_traced(pool, rsu, &w)?;
        let (_, w2) = decompose(&w, pool, rsu, &f.selected);
        let weights = std::mem::replace(&mut w, w2);
        layers.push(LayerResult {
            rsu_id: rsu,
            weights,
            floor_rd: f,
            kept: Vec::new(),
            merged: Vec::new(),
        });
    }

    // Unwind from the last layer: a pick survives only if no later layer
    // already serves its task.
    let mut claimed: BTreeSet<TaskId> = BTreeSet::new();
    let mut merged: Vec<usize> = Vec::new();
    for layer in layers.iter_mut().rev() {
        let kept: Vec<usize> = layer
            .floor_rd
            .selected
            .iter()
            .copied()
            .filter(|&id| !claimed.contains(&pool.get(id).task_id))
            .collect();
        for &id in &kept {
            claimed.insert(pool.get(id).task_id);
        }
        merged.extend(kept.iter().copied());
        merged.sort_unstable();
        layer.kept = kept;
        layer.merged = merged.clone();
    }
    Ok(SaRoundTrace {
        layers,
        selected: merged,
    })
}

pub fn saround(pool: &InstancePool, instance: &ProblemInstance) -> Assignment {
    saround_with(pool, instance, &SaRoundConfig::default())
}

pub fn saround_with(
    pool: &InstancePool,
    instance: &ProblemInstance,
    cfg: &SaRoundConfig,
) -> Assignment {
    let trace = saround_traced(pool, cfg)
        .expect("per-RSU relaxation is bounded and feasible at the origin");
    let a = Assignment::from_instances(trace.selected.iter().map(|&id| *pool.get(id)));
    debug_assert!(
        validate(&a, instance).is_empty(),
        "{:?}",
        validate(&a, instance)
    );
    a
}
