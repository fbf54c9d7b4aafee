//! Discrete-event simulation of the online scheduling and offloading
//! control loop.

pub mod channel;
mod engine;
pub mod mobility;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::model::{RsuId, TaskId};

pub use channel::{ChannelConfig, Quality};
pub use engine::{run, snapshot};
pub use mobility::{Traces, Waypoint};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Mode {
    /// Every cycle terminates all services and schedules from scratch.
    #[default]
    #[serde(rename = "schedall", alias = "sched_all", alias = "SchedAll")]
    SchedAll,
    /// Running services continue; new requests get the residual resources.
    #[serde(rename = "schedremain", alias = "sched_remain", alias = "SchedRemain")]
    SchedRemain,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::SchedAll, Mode::SchedRemain];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SchedAll => "schedall",
            Mode::SchedRemain => "schedremain",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "schedall" | "all" => Ok(Mode::SchedAll),
            "schedremain" | "remain" => Ok(Mode::SchedRemain),
            _ => Err(format!(
                "unknown mode `{s}` (expected schedall or schedremain)"
            )),
        }
    }
}

fn default_schedule_interval() -> f64 {
    10.0
}
fn default_srs_interval() -> f64 {
    0.01
}
fn default_radius() -> f64 {
    500.0
}
fn default_latency() -> f64 {
    0.01
}
fn default_quality() -> Quality {
    Quality::Medium
}
fn default_algorithm() -> Algorithm {
    Algorithm::SaRound
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    #[serde(default = "default_schedule_interval")]
    pub schedule_interval_s: f64,
    #[serde(default = "default_srs_interval")]
    pub srs_interval_s: f64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_quality")]
    pub quality: Quality,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_radius")]
    pub coverage_radius_m: f64,
    /// Simulated time charged for each scheduler run.
    #[serde(default = "default_latency")]
    pub scheduler_latency_s: f64,
    /// Charge the measured wall time of the scheduler instead. Runs are then
    /// no longer reproducible.
    #[serde(default)]
    pub measured_latency: bool,
    /// Include per-job events in the event log.
    #[serde(default)]
    pub log_jobs: bool,
    /// Record scheduler wall time in the cycle rows (not reproducible).
    #[serde(default)]
    pub record_runtime: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration_s: 60.0,
            schedule_interval_s: default_schedule_interval(),
            srs_interval_s: default_srs_interval(),
            mode: Mode::SchedAll,
            quality: default_quality(),
            rng_seed: 0,
            algorithm: default_algorithm(),
            coverage_radius_m: default_radius(),
            scheduler_latency_s: default_latency(),
            measured_latency: false,
            log_jobs: false,
            record_runtime: false,
        }
    }
}

impl SimConfig {
    /// Checks the config against the shortest task period in the scenario.
    pub fn check(&self, min_period_s: Option<f64>) -> Result<(), String> {
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err("duration_s must be finite and >= 0".into());
        }
        if !(self.schedule_interval_s > 0.0) {
            return Err("schedule_interval_s must be > 0".into());
        }
        if !(self.srs_interval_s > 0.0) {
            return Err("srs_interval_s must be > 0".into());
        }
        if let Some(p) = min_period_s {
            if self.srs_interval_s > p {
                return Err(format!(
                    "srs_interval_s {} exceeds the shortest task period {p}",
                    self.srs_interval_s
                ));
            }
        }
        if !(self.coverage_radius_m > 0.0) {
            return Err("coverage_radius_m must be > 0".into());
        }
        if !(self.scheduler_latency_s >= 0.0 && self.scheduler_latency_s.is_finite()) {
            return Err("scheduler_latency_s must be >= 0".into());
        }
        Ok(())
    }

    /// Number of scheduling cycles; a run shorter than one interval still gets one.
    pub fn cycles(&self) -> usize {
        if self.duration_s <= 0.0 {
            return 0;
        }
        ((self.duration_s / self.schedule_interval_s + 1e-9).floor() as usize).max(1)
    }
}

/// Per scheduling cycle. The last cycle also covers any tail of the run
/// shorter than one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSnapshot {
    pub cycle: usize,
    pub start_s: f64,
    pub span_s: f64,
    pub requests: usize,
    pub assigned: usize,
    pub predicted_js: f64,
    pub measured_js: f64,
    pub offloaded_jobs: u64,
    pub offloaded_jobs_per_s: f64,
    pub local_jobs: u64,
    pub suspensions: u64,
    pub resumptions: u64,
    pub scheduler_latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm_runtime_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub duration_s: f64,
    /// Span-weighted mean of the cycles' scheduled utility.
    pub predicted_js: f64,
    /// Energy saved by completed offloaded jobs per simulated second.
    pub measured_js: f64,
    pub offloaded_jobs_per_s: f64,
    pub offloaded_jobs: u64,
    pub local_jobs: u64,
    pub total_jobs: u64,
    pub suspensions: u64,
    pub resumptions: u64,
    /// Offloaded jobs finishing after their deadline.
    pub deadline_misses: u64,
    pub cycles: Vec<CycleSnapshot>,
}

impl Metrics {
    /// Recomputes the run-level figures from the cycle rows.
    pub fn summarize(&mut self) {
        let span: f64 = self.cycles.iter().map(|c| c.span_s).sum();
        if span > 0.0 {
            self.predicted_js = self
                .cycles
                .iter()
                .map(|c| c.predicted_js * c.span_s)
                .sum::<f64>()
                / span;
        } else {
            self.predicted_js = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t_s: f64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<TaskId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rsu_id: Option<RsuId>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("Sched_Remain".parse::<Mode>().unwrap(), Mode::SchedRemain);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn config_checks() {
        let c = SimConfig::default();
        assert!(c.check(Some(0.05)).is_ok());
        assert!(c.check(Some(0.005)).is_err());
        let bad = SimConfig {
            schedule_interval_s: 0.0,
            ..SimConfig::default()
        };
        assert!(bad.check(None).is_err());
        assert_eq!(c.cycles(), 6);
        let odd = SimConfig {
            duration_s: 25.0,
            ..SimConfig::default()
        };
        assert_eq!(odd.cycles(), 2);
    }
}
