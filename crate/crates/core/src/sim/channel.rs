//! Per-link MCS dynamics. Each link runs a lazy, mean-reverting random walk
//! over MCS indices, advanced only at SRS ticks and capped by distance.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{RsuId, VehicleId, PEAK_RATE_PER_RB};

pub const MAX_MCS: u8 = 14;

/// Spectral efficiency per index (4-bit CQI table), bits per symbol.
const EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023,
    4.5234, 5.1152, 5.5547,
];

/// Fraction of the peak per-RB rate carried at `mcs`.
pub fn rate_fraction(mcs: u8) -> f64 {
    EFFICIENCY[mcs.min(MAX_MCS) as usize] / EFFICIENCY[MAX_MCS as usize]
}

/// Per-RB uplink rate in MB/s.
pub fn rate_for_mcs(mcs: u8) -> f64 {
    PEAK_RATE_PER_RB * rate_fraction(mcs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Low,
    Medium,
    High,
}

impl Quality {
    pub const ALL: [Quality; 3] = [Quality::Low, Quality::Medium, Quality::High];

    pub fn params(self) -> QualityParams {
        match self {
            Quality::High => QualityParams {
                mean_mcs: 13.0,
                step_prob: 0.05,
                attenuation: 0.3,
            },
            Quality::Medium => QualityParams {
                mean_mcs: 9.0,
                step_prob: 0.15,
                attenuation: 0.5,
            },
            Quality::Low => QualityParams {
                mean_mcs: 5.0,
                step_prob: 0.25,
                attenuation: 0.7,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Quality::Low => "low",
            Quality::Medium => "medium",
            Quality::High => "high",
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Quality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Quality::Low),
            "medium" => Ok(Quality::Medium),
            "high" => Ok(Quality::High),
            _ => Err(format!(
                "unknown quality `{s}` (expected low, medium or high)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityParams {
    /// Index the walk reverts towards.
    pub mean_mcs: f64,
    /// Chance per SRS tick that the index moves by one.
    pub step_prob: f64,
    /// Fraction of the index range lost at the coverage edge.
    pub attenuation: f64,
}

/// Forces links to an index from `at_s` on. Unset ids match every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsStep {
    pub at_s: f64,
    pub mcs: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_id: Option<VehicleId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsu_id: Option<RsuId>,
}

/// Window in which a vehicle sends no SRS (to one RSU, or to all).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrsOutage {
    pub vehicle_id: VehicleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsu_id: Option<RsuId>,
    pub from_s: f64,
    pub to_s: f64,
}

impl SrsOutage {
    pub fn covers(&self, v: VehicleId, k: RsuId, t_s: f64) -> bool {
        self.vehicle_id == v
            && self.rsu_id.is_none_or(|r| r == k)
            && t_s >= self.from_s
            && t_s < self.to_s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// No random steps; only explicit `steps` change the index.
    #[serde(default)]
    pub frozen: bool,
    /// Starting index for every link instead of a draw around the mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_mcs: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub steps: Vec<McsStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub srs_outages: Vec<SrsOutage>,
    /// Replaces the quality level's walk parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<QualityParams>,
}

impl ChannelConfig {
    pub fn check(&self) -> Result<(), String> {
        if let Some(m) = self.fixed_mcs {
            if m > MAX_MCS {
                return Err(format!("fixed_mcs {m} exceeds {MAX_MCS}"));
            }
        }
        for s in &self.steps {
            if s.mcs > MAX_MCS || !(s.at_s >= 0.0) {
                return Err(format!("invalid mcs step at {} s", s.at_s));
            }
        }
        for o in &self.srs_outages {
            if !(o.from_s <= o.to_s) {
                return Err(format!(
                    "srs outage for vehicle {} ends before it starts",
                    o.vehicle_id
                ));
            }
        }
        if let Some(p) = self.params {
            if !(0.0..=1.0).contains(&p.step_prob)
                || !(0.0..=MAX_MCS as f64).contains(&p.mean_mcs)
                || !(p.attenuation >= 0.0)
            {
                return Err("channel params out of range".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct LinkWalk {
    idx: u8,
    tick: u64,
    next_step: u64,
    overrides: Vec<(u64, u8)>,
    cursor: usize,
    rng: ChaCha8Rng,
}

/// Channel state of every link, created on first use.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    params: QualityParams,
    frozen: bool,
    fixed_mcs: Option<u8>,
    /// Explicit steps as (first SRS tick at or after `at_s`, step).
    steps: Vec<(u64, McsStep)>,
    seed: u64,
    radius_m: f64,
    links: BTreeMap<(VehicleId, RsuId), LinkWalk>,
}

fn geometric_gap(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p <= 0.0 {
        return u64::MAX;
    }
    if p >= 1.0 {
        return 1;
    }
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    1 + (u.ln() / (1.0 - p).ln()).floor().min(1e15) as u64
}

impl ChannelModel {
    pub fn new(
        cfg: &ChannelConfig,
        quality: Quality,
        seed: u64,
        radius_m: f64,
        srs_interval_s: f64,
    ) -> Self {
        let mut steps: Vec<(u64, McsStep)> = cfg
            .steps
            .iter()
            .map(|s| ((s.at_s / srs_interval_s - 1e-9).ceil().max(0.0) as u64, *s))
            .collect();
        steps.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.at_s.total_cmp(&b.1.at_s)));
        ChannelModel {
            params: cfg.params.unwrap_or_else(|| quality.params()),
            frozen: cfg.frozen,
            fixed_mcs: cfg.fixed_mcs,
            steps,
            seed,
            radius_m,
            links: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> QualityParams {
        self.params
    }

    /// Highest index reachable at `distance_m` from the RSU.
    pub fn distance_cap(&self, distance_m: f64) -> u8 {
        if self.radius_m <= 0.0 {
            return MAX_MCS;
        }
        let loss = (self.params.attenuation * MAX_MCS as f64 * distance_m / self.radius_m).floor();
        (MAX_MCS as f64 - loss).clamp(0.0, MAX_MCS as f64) as u8
    }

    fn walk(&mut self, v: VehicleId, k: RsuId) -> &mut LinkWalk {
        let (seed, params, frozen, fixed) = (self.seed, self.params, self.frozen, self.fixed_mcs);
        let steps = &self.steps;
        self.links.entry((v, k)).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((v.0 as u64) << 32) | k.0 as u64);
            let idx = match fixed {
                Some(m) => m,
                None => {
                    let jitter: i32 = rng.random_range(-2..=2);
                    (params.mean_mcs.round() as i32 + jitter).clamp(0, MAX_MCS as i32) as u8
                }
            };
            let next_step = if frozen {
                u64::MAX
            } else {
                geometric_gap(&mut rng, params.step_prob)
            };
            let overrides = steps
                .iter()
                .filter(|(_, s)| {
                    s.vehicle_id.is_none_or(|x| x == v) && s.rsu_id.is_none_or(|x| x == k)
                })
                .map(|(t, s)| (*t, s.mcs))
                .collect();
            LinkWalk {
                idx,
                tick: 0,
                next_step,
                overrides,
                cursor: 0,
                rng,
            }
        })
    }

    /// Walk index at SRS tick `tick`, before the distance cap. Ticks must be
    /// queried in non-decreasing order per link.
    pub fn walk_index(&mut self, v: VehicleId, k: RsuId, tick: u64) -> u8 {
        let params = self.params;
        let w = self.walk(v, k);
        debug_assert!(tick >= w.tick, "channel queried backwards in time");
        loop {
            let next_override = w.overrides.get(w.cursor).map_or(u64::MAX, |o| o.0);
            let next = next_override.min(w.next_step);
            if next > tick {
                break;
            }
            if next_override <= w.next_step {
                w.idx = w.overrides[w.cursor].1;
                w.cursor += 1;
            } else {
                let up = (0.5 + 0.15 * (params.mean_mcs - w.idx as f64)).clamp(0.05, 0.95);
                w.idx = if w.rng.random_bool(up) {
                    (w.idx + 1).min(MAX_MCS)
                } else {
                    w.idx.saturating_sub(1)
                };
                let gap = geometric_gap(&mut w.rng, params.step_prob);
                w.next_step = w.next_step.saturating_add(gap);
            }
        }
        w.tick = w.tick.max(tick);
        w.idx
    }

    /// Effective index at `tick` for a vehicle `distance_m` from the RSU.
    pub fn mcs(&mut self, v: VehicleId, k: RsuId, tick: u64, distance_m: f64) -> u8 {
        let cap = self.distance_cap(distance_m);
        self.walk_index(v, k, tick).min(cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_table_is_increasing_and_peaks_at_top_index() {
        for m in 1..=MAX_MCS {
            assert!(rate_fraction(m) > rate_fraction(m - 1));
        }
        assert_eq!(rate_fraction(MAX_MCS), 1.0);
        assert!((rate_for_mcs(MAX_MCS) - 37.0 / 270.0).abs() < 1e-15);
    }

    #[test]
    fn distance_cap() {
        let ch = ChannelModel::new(&ChannelConfig::default(), Quality::Medium, 1, 200.0, 0.01);
        assert_eq!(ch.distance_cap(0.0), MAX_MCS);
        assert_eq!(ch.distance_cap(200.0), 7);
        assert!(ch.distance_cap(100.0) >= ch.distance_cap(150.0));
    }

    #[test]
    fn frozen_fixed_link_is_constant() {
        let cfg = ChannelConfig {
            frozen: true,
            fixed_mcs: Some(11),
            ..Default::default()
        };
        let mut ch = ChannelModel::new(&cfg, Quality::Low, 3, 200.0, 0.01);
        for t in 0..5000 {
            assert_eq!(ch.mcs(VehicleId(1), RsuId(1), t, 0.0), 11);
        }
    }

    #[test]
    fn explicit_steps_apply_from_their_tick() {
        let cfg = ChannelConfig {
            frozen: true,
            fixed_mcs: Some(14),
            steps: vec![
                McsStep {
                    at_s: 30.0,
                    mcs: 4,
                    vehicle_id: None,
                    rsu_id: None,
                },
                McsStep {
                    at_s: 40.0,
                    mcs: 14,
                    vehicle_id: None,
                    rsu_id: Some(RsuId(1)),
                },
            ],
            ..Default::default()
        };
        let mut ch = ChannelModel::new(&cfg, Quality::High, 3, 200.0, 0.01);
        let v = VehicleId(2);
        assert_eq!(ch.mcs(v, RsuId(1), 2999, 0.0), 14);
        assert_eq!(ch.mcs(v, RsuId(1), 3000, 0.0), 4);
        assert_eq!(ch.mcs(v, RsuId(1), 3999, 0.0), 4);
        assert_eq!(ch.mcs(v, RsuId(1), 4000, 0.0), 14);
        assert_eq!(ch.mcs(v, RsuId(2), 4500, 0.0), 4);
    }

    #[test]
    fn walk_does_not_depend_on_query_pattern() {
        let cfg = ChannelConfig::default();
        let mut dense = ChannelModel::new(&cfg, Quality::Low, 9, 200.0, 0.01);
        let mut sparse = ChannelModel::new(&cfg, Quality::Low, 9, 200.0, 0.01);
        let mut seen = Vec::new();
        for t in 0..3000u64 {
            let a = dense.walk_index(VehicleId(1), RsuId(2), t);
            // Interleave another link to make sure streams are independent.
            dense.walk_index(VehicleId(5), RsuId(2), t);
            if t % 7 == 0 {
                seen.push((t, a));
            }
        }
        for (t, a) in seen {
            assert_eq!(sparse.walk_index(VehicleId(1), RsuId(2), t), a);
        }
    }

    #[test]
    fn walk_reverts_towards_mean() {
        let cfg = ChannelConfig {
            fixed_mcs: Some(0),
            ..Default::default()
        };
        let mut ch = ChannelModel::new(&cfg, Quality::Medium, 5, 200.0, 0.01);
        assert_eq!(ch.walk_index(VehicleId(1), RsuId(1), 0), 0);
        let n = 20_000u64;
        let late: f64 = (n..2 * n)
            .map(|t| ch.walk_index(VehicleId(1), RsuId(1), t) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((late - 9.0).abs() < 1.5, "{late}");
    }

    #[test]
    fn quality_parse() {
        assert_eq!("Medium".parse::<Quality>().unwrap(), Quality::Medium);
        assert!("bad".parse::<Quality>().is_err());
    }
}
