//! Synthetic scenarios: grid roads, RSUs spread evenly along them, vehicles
//! driving random routes, and profile tables from a simple work/speed model.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Criticality, ExecutionProfile, RsuId, RsuSpec, TaskId, TaskSpec, VehicleId};
use crate::scenario::Scenario;
use crate::sim::{ChannelConfig, SimConfig, Traces, Waypoint};

/// Model name and relative work per frame.
const SERVICES: [(&str, f64); 6] = [
    ("yolov5s", 1.0),
    ("yolov5m", 2.2),
    ("resnet50", 1.4),
    ("deeplabv3", 3.0),
    ("pointpillars", 2.6),
    ("lanenet", 1.8),
];

/// Hardware class and relative speed.
const HARDWARE: [(&str, f64); 6] = [
    ("gpu-a", 1.0),
    ("gpu-b", 1.3),
    ("gpu-c", 1.6),
    ("gpu-d", 2.0),
    ("gpu-e", 2.5),
    ("gpu-f", 3.2),
];

pub const PERIODS_S: [f64; 3] = [0.05, 0.067, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Descriptor {
    pub vehicles: usize,
    pub rsus: usize,
    pub rbs: u32,
    pub cus: u32,
    pub area_m: f64,
    /// Roads per direction.
    pub grid_lines: usize,
    pub duration_s: f64,
    pub input_mb: (f64, f64),
    pub init_delay_s: (f64, f64),
    pub speed_m_s: (f64, f64),
    pub local_power_w: (f64, f64),
    pub offload_power_w: (f64, f64),
    /// Share of tasks with an m-k constraint instead of safety-critical.
    pub mk_fraction: f64,
    /// Seconds per unit of model work on one CU of the slowest GPU class.
    pub rsu_s_per_work: f64,
    /// Seconds per unit of model work on the vehicle.
    pub local_s_per_work: f64,
    pub sim: SimConfig,
}

impl Default for Descriptor {
    fn default() -> Self {
        Descriptor {
            vehicles: 80,
            rsus: 15,
            rbs: 270,
            cus: 16,
            area_m: 1000.0,
            grid_lines: 5,
            duration_s: 60.0,
            input_mb: (0.07, 0.3),
            init_delay_s: (0.01, 0.05),
            speed_m_s: (8.0, 16.0),
            local_power_w: (5.0, 10.0),
            offload_power_w: (1.5, 3.0),
            mk_fraction: 0.5,
            rsu_s_per_work: 0.03,
            local_s_per_work: 0.022,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid descriptor: {0}")]
pub struct DescriptorError(pub String);

fn range_ok(r: (f64, f64)) -> bool {
    r.0.is_finite() && r.1.is_finite() && r.0 <= r.1
}

impl Descriptor {
    pub fn check(&self) -> Result<(), DescriptorError> {
        let bad = |m: &str| Err(DescriptorError(m.to_string()));
        if self.rsus == 0 || self.rbs == 0 || self.cus == 0 {
            return bad("rsus, rbs and cus must be >= 1");
        }
        if self.grid_lines < 2 || !(self.area_m > 0.0) {
            return bad("need at least 2 grid lines over a positive area");
        }
        if !(self.duration_s >= 0.0) {
            return bad("duration_s must be >= 0");
        }
        for (name, r) in [
            ("input_mb", self.input_mb),
            ("init_delay_s", self.init_delay_s),
            ("speed_m_s", self.speed_m_s),
            ("local_power_w", self.local_power_w),
            ("offload_power_w", self.offload_power_w),
        ] {
            if !range_ok(r) || r.0 < 0.0 {
                return Err(DescriptorError(format!(
                    "{name} must be a non-negative range"
                )));
            }
        }
        if !(self.input_mb.0 > 0.0) || !(self.speed_m_s.0 > 0.0) {
            return bad("input_mb and speed_m_s must be positive");
        }
        if !(self.rsu_s_per_work > 0.0) || !(self.local_s_per_work > 0.0) {
            return bad("work constants must be positive");
        }
        if !(0.0..=1.0).contains(&self.mk_fraction) {
            return bad("mk_fraction must be in [0, 1]");
        }
        Ok(())
    }
}

fn uniform<R: Rng>(rng: &mut R, r: (f64, f64)) -> f64 {
    if r.0 == r.1 {
        r.0
    } else {
        rng.random_range(r.0..r.1)
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    // Dividing by the integer scale lands on the double nearest the decimal,
    // which serializes in its short form.
    let scale = (1.0 / step).round();
    (x * scale).round() / scale
}

/// Processing time for `work` on `cus` CUs of a GPU with relative `speed`,
/// rounded to 0.1 ms.
pub fn proc_time(s_per_work: f64, work: f64, speed: f64, cus: u32) -> f64 {
    round_to(s_per_work * work / (speed * cus as f64), 1e-4).max(1e-4)
}

/// Point at arc length `s` along the road network.
fn road_point(d: &Descriptor, s: f64) -> (f64, f64) {
    let spacing = d.area_m / (d.grid_lines - 1) as f64;
    let road = ((s / d.area_m).floor() as usize).min(2 * d.grid_lines - 1);
    let along = s - road as f64 * d.area_m;
    if road < d.grid_lines {
        (along, road as f64 * spacing)
    } else {
        ((road - d.grid_lines) as f64 * spacing, along)
    }
}

fn route<R: Rng>(d: &Descriptor, rng: &mut R, horizon: f64) -> Vec<Waypoint> {
    let n = d.grid_lines as i64;
    let spacing = d.area_m / (d.grid_lines - 1) as f64;
    let mut at = (rng.random_range(0..n), rng.random_range(0..n));
    let mut t = 0.0;
    let mut pts = vec![Waypoint {
        time_s: 0.0,
        x_m: at.0 as f64 * spacing,
        y_m: at.1 as f64 * spacing,
    }];
    let mut prev: Option<(i64, i64)> = None;
    while t < horizon {
        let mut next: Vec<(i64, i64)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .map(|(dx, dy)| (at.0 + dx, at.1 + dy))
            .filter(|p| (0..n).contains(&p.0) && (0..n).contains(&p.1))
            .collect();
        if next.len() > 1 {
            next.retain(|p| Some(*p) != prev);
        }
        let to = *next.choose(rng).expect("grid has neighbours");
        let speed = uniform(rng, d.speed_m_s);
        t = round_to(t + spacing / speed, 1e-3);
        pts.push(Waypoint {
            time_s: t,
            x_m: to.0 as f64 * spacing,
            y_m: to.1 as f64 * spacing,
        });
        prev = Some(at);
        at = to;
    }
    pts
}

/// Builds a deterministic scenario from `d` and `seed`.
pub fn gen_scenario(d: &Descriptor, seed: u64) -> Result<Scenario, DescriptorError> {
    d.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut profiles = ExecutionProfile::new();
    for (svc, work) in SERVICES {
        for (hw, speed) in HARDWARE {
            for c in 1..=d.cus {
                profiles.insert(svc, hw, c, proc_time(d.rsu_s_per_work, work, speed, c));
            }
        }
    }

    let total_road = 2.0 * d.grid_lines as f64 * d.area_m;
    let rsus: Vec<RsuSpec> = (0..d.rsus)
        .map(|k| {
            let (x, y) = road_point(d, (k as f64 + 0.5) * total_road / d.rsus as f64);
            RsuSpec {
                id: RsuId(k as u32 + 1),
                total_rbs: d.rbs,
                total_cus: d.cus,
                hardware_class: HARDWARE[rng.random_range(0..HARDWARE.len())].0.to_string(),
                init_delay_s: round_to(uniform(&mut rng, d.init_delay_s), 1e-3),
                position_m: (x, y),
            }
        })
        .collect();

    let mut tasks = Vec::with_capacity(d.vehicles);
    let mut traces = Traces::new();
    for i in 0..d.vehicles {
        let v = VehicleId(i as u32 + 1);
        let (svc, work) = SERVICES[rng.random_range(0..SERVICES.len())];
        let local = round_to(d.local_s_per_work * work * rng.random_range(0.8..1.2), 1e-4);
        let fitting: Vec<f64> = PERIODS_S.iter().copied().filter(|&p| p >= local).collect();
        let (period_s, local_exec_s) = match fitting.choose(&mut rng) {
            Some(&p) => (p, local),
            None => (PERIODS_S[2], PERIODS_S[2]),
        };
        let criticality = if rng.random_bool(d.mk_fraction) {
            let (m, k) = *[(2, 3), (3, 4), (4, 5)].choose(&mut rng).unwrap();
            Criticality::MkConstrained { m, k }
        } else {
            Criticality::SafetyCritical
        };
        tasks.push(TaskSpec {
            id: TaskId(i as u32 + 1),
            vehicle_id: v,
            service_type: svc.to_string(),
            period_s,
            input_mb: round_to(uniform(&mut rng, d.input_mb), 1e-3),
            local_exec_s,
            local_power_w: round_to(uniform(&mut rng, d.local_power_w), 0.1),
            offload_power_w: round_to(uniform(&mut rng, d.offload_power_w), 0.1),
            criticality,
        });
        traces
            .insert(v, route(d, &mut rng, d.duration_s))
            .expect("routes have increasing times");
    }

    let sim = SimConfig {
        duration_s: d.duration_s,
        ..d.sim.clone()
    };
    Ok(Scenario {
        rsus,
        tasks,
        profiles,
        traces,
        channel: ChannelConfig::default(),
        sim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{scenario_to_toml, TraceOutput};

    fn small() -> Descriptor {
        Descriptor {
            vehicles: 10,
            rsus: 2,
            ..Descriptor::default()
        }
    }

    #[test]
    fn deterministic_output() {
        let a = scenario_to_toml(&gen_scenario(&small(), 7).unwrap(), TraceOutput::Inline);
        let b = scenario_to_toml(&gen_scenario(&small(), 7).unwrap(), TraceOutput::Inline);
        assert_eq!(a, b);
        let c = scenario_to_toml(&gen_scenario(&small(), 8).unwrap(), TraceOutput::Inline);
        assert_ne!(a, c);
    }

    #[test]
    fn periods_and_ranges() {
        let sc = gen_scenario(&Descriptor::default(), 3).unwrap();
        assert_eq!(sc.rsus.len(), 15);
        assert_eq!(sc.vehicle_count(), 80);
        for t in &sc.tasks {
            assert!(PERIODS_S.contains(&t.period_s));
            assert!(t.local_exec_s <= t.period_s);
            assert!((0.07..=0.3).contains(&t.input_mb));
        }
        for r in &sc.rsus {
            assert!((0.01..=0.05).contains(&r.init_delay_s));
            assert!(r.position_m.0 >= 0.0 && r.position_m.0 <= 1000.0);
            assert!(r.position_m.1 >= 0.0 && r.position_m.1 <= 1000.0);
        }
        sc.check().unwrap();
    }

    #[test]
    fn profiles_non_increasing_in_cus() {
        let sc = gen_scenario(&small(), 1).unwrap();
        for (svc, _) in SERVICES {
            for (hw, _) in HARDWARE {
                let row = sc.profiles.row(svc, hw).unwrap();
                assert_eq!(row.len(), 16);
                let v: Vec<f64> = row.values().copied().collect();
                assert!(v.windows(2).all(|w| w[1] <= w[0]));
                assert!(v.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn traces_cover_duration_on_roads() {
        let d = small();
        let sc = gen_scenario(&d, 5).unwrap();
        for (_, pts) in sc.traces.iter() {
            assert!(pts[pts.len() - 1].time_s >= d.duration_s);
            for p in pts {
                let on_x = (p.x_m / 250.0).fract().abs() < 1e-9;
                let on_y = (p.y_m / 250.0).fract().abs() < 1e-9;
                assert!(on_x || on_y);
            }
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        let d = Descriptor {
            input_mb: (0.3, 0.1),
            ..Descriptor::default()
        };
        assert!(gen_scenario(&d, 1).is_err());
    }
}
