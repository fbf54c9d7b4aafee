//! Scenario files (TOML), trace files (CSV), and run results.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{
    Assignment, Criticality, ExecutionProfile, RsuId, RsuSpec, TaskId, TaskSpec, VehicleId,
};
use crate::sim::{ChannelConfig, CycleSnapshot, EventRecord, Metrics, SimConfig, Traces, Waypoint};

pub const FORMAT_VERSION: &str = "1.0";
pub const TRACE_HEADER: [&str; 4] = ["time_s", "vehicle_id", "x_m", "y_m"];

/// A fully validated in-memory scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rsus: Vec<RsuSpec>,
    pub tasks: Vec<TaskSpec>,
    pub profiles: ExecutionProfile,
    pub traces: Traces,
    pub channel: ChannelConfig,
    pub sim: SimConfig,
}

impl Scenario {
    /// Schema and cross-reference checks shared by the loader and the
    /// simulator.
    pub fn check(&self) -> Result<(), String> {
        let mut ids = BTreeSet::new();
        for (i, r) in self.rsus.iter().enumerate() {
            r.check().map_err(|e| format!("rsus[{i}]: {e}"))?;
            if !ids.insert(r.id) {
                return Err(format!("rsus[{i}]: duplicate id {}", r.id));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            t.check().map_err(|e| format!("tasks[{i}]: {e}"))?;
            if !ids.insert(t.id) {
                return Err(format!("tasks[{i}]: duplicate id {}", t.id));
            }
            if !self.profiles.has_service(&t.service_type) {
                return Err(format!(
                    "tasks[{i}]: no profile rows for service_type `{}`",
                    t.service_type
                ));
            }
            if self.traces.get(t.vehicle_id).is_none() {
                return Err(format!("tasks[{i}]: vehicle {} has no trace", t.vehicle_id));
            }
        }
        self.profiles
            .check()
            .map_err(|e| format!("profiles: {e}"))?;
        self.channel.check().map_err(|e| format!("channel: {e}"))?;
        Ok(())
    }

    pub fn vehicle_count(&self) -> usize {
        self.tasks
            .iter()
            .map(|t| t.vehicle_id)
            .collect::<BTreeSet<_>>()
            .len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("cross-reference error: {0}")]
    CrossRef(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CriticalityName {
    SafetyCritical,
    MkConstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRow {
    id: TaskId,
    vehicle_id: VehicleId,
    service_type: String,
    period_s: f64,
    input_mb: f64,
    local_exec_s: f64,
    local_power_w: f64,
    offload_power_w: f64,
    criticality: CriticalityName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mk_m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mk_k: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RsuRow {
    id: RsuId,
    total_rbs: u32,
    total_cus: u32,
    hardware_class: String,
    init_delay_s: f64,
    position_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileRow {
    service_type: String,
    hardware_class: String,
    cus: u32,
    proc_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    inline: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    format_version: String,
    sim: SimConfig,
    #[serde(default)]
    channel: ChannelConfig,
    #[serde(default)]
    rsus: Vec<RsuRow>,
    #[serde(default)]
    tasks: Vec<TaskRow>,
    #[serde(default)]
    profiles: Vec<ProfileRow>,
    #[serde(default)]
    traces: TraceSource,
}

fn schema(location: String, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        location,
        message: message.into(),
    }
}

fn check_version(v: &str) -> Result<(), ScenarioError> {
    let major = v.split('.').next().unwrap_or("");
    if major != "1" {
        return Err(schema(
            "format_version".into(),
            format!("unsupported format version `{v}` (this build reads 1.x)"),
        ));
    }
    Ok(())
}

impl TaskRow {
    fn into_spec(self, i: usize) -> Result<TaskSpec, ScenarioError> {
        let criticality = match self.criticality {
            CriticalityName::SafetyCritical => Criticality::SafetyCritical,
            CriticalityName::MkConstrained => match (self.mk_m, self.mk_k) {
                (Some(m), Some(k)) => Criticality::MkConstrained { m, k },
                _ => {
                    return Err(schema(
                        format!("tasks[{i}]"),
                        "mk_constrained tasks need mk_m and mk_k",
                    ))
                }
            },
        };
        Ok(TaskSpec {
            id: self.id,
            vehicle_id: self.vehicle_id,
            service_type: self.service_type,
            period_s: self.period_s,
            input_mb: self.input_mb,
            local_exec_s: self.local_exec_s,
            local_power_w: self.local_power_w,
            offload_power_w: self.offload_power_w,
            criticality,
        })
    }

    fn from_spec(t: &TaskSpec) -> Self {
        let (criticality, mk_m, mk_k) = match t.criticality {
            Criticality::SafetyCritical => (CriticalityName::SafetyCritical, None, None),
            Criticality::MkConstrained { m, k } => {
                (CriticalityName::MkConstrained, Some(m), Some(k))
            }
        };
        TaskRow {
            id: t.id,
            vehicle_id: t.vehicle_id,
            service_type: t.service_type.clone(),
            period_s: t.period_s,
            input_mb: t.input_mb,
            local_exec_s: t.local_exec_s,
            local_power_w: t.local_power_w,
            offload_power_w: t.offload_power_w,
            criticality,
            mk_m,
            mk_k,
        }
    }
}

/// Parses trace CSV text. Rows must be sorted by (vehicle_id, time_s).
pub fn parse_traces(text: &str) -> Result<Traces, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| ScenarioError::Parse {
        location: "trace line 1".into(),
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(ScenarioError::Parse {
            location: "trace line 1".into(),
            message: format!("header must be `{}`", TRACE_HEADER.join(",")),
        });
    }
    let mut traces = Traces::new();
    let mut current: Option<(VehicleId, Vec<Waypoint>)> = None;
    let mut seen = BTreeSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let loc = || format!("trace line {line}");
        let rec = rec.map_err(|e| ScenarioError::Parse {
            location: loc(),
            message: e.to_string(),
        })?;
        let field = |i: usize| -> Result<&str, ScenarioError> {
            rec.get(i).ok_or_else(|| ScenarioError::Parse {
                location: loc(),
                message: "expected 4 fields".into(),
            })
        };
        let num = |i: usize| -> Result<f64, ScenarioError> {
            let v: f64 = field(i)?.parse().map_err(|_| ScenarioError::Parse {
                location: loc(),
                message: format!("`{}` is not a number", field(i).unwrap_or("")),
            })?;
            if !v.is_finite() {
                return Err(ScenarioError::Parse {
                    location: loc(),
                    message: "non-finite value".into(),
                });
            }
            Ok(v)
        };
        let v = VehicleId(field(1)?.parse().map_err(|_| ScenarioError::Parse {
            location: loc(),
            message: "vehicle_id must be a non-negative integer".into(),
        })?);
        let wp = Waypoint {
            time_s: num(0)?,
            x_m: num(2)?,
            y_m: num(3)?,
        };
        match &mut current {
            Some((cv, pts)) if *cv == v => {
                if wp.time_s <= pts[pts.len() - 1].time_s {
                    return Err(ScenarioError::Parse {
                        location: loc(),
                        message: format!("time_s not strictly increasing for vehicle {v}"),
                    });
                }
                pts.push(wp);
            }
            _ => {
                if let Some((cv, pts)) = current.take() {
                    if v < cv || seen.contains(&v) {
                        return Err(ScenarioError::Parse {
                            location: loc(),
                            message: "rows not sorted by vehicle_id".into(),
                        });
                    }
                    seen.insert(cv);
                    traces.insert(cv, pts).expect("checked while parsing");
                }
                current = Some((v, vec![wp]));
            }
        }
    }
    if let Some((cv, pts)) = current {
        traces.insert(cv, pts).expect("checked while parsing");
    }
    Ok(traces)
}

pub fn traces_to_csv(traces: &Traces) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).unwrap();
    for (v, pts) in traces.iter() {
        for p in pts {
            w.write_record([
                p.time_s.to_string(),
                v.0.to_string(),
                p.x_m.to_string(),
                p.y_m.to_string(),
            ])
            .unwrap();
        }
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Parses scenario TOML. Relative trace paths resolve against `base_dir`.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| {
                let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}")
            })
            .unwrap_or_else(|| "document".into());
        ScenarioError::Parse {
            location,
            message: e.message().to_string(),
        }
    })?;
    check_version(&file.format_version)?;
    let tasks = file
        .tasks
        .into_iter()
        .enumerate()
        .map(|(i, t)| t.into_spec(i))
        .collect::<Result<Vec<_>, _>>()?;
    let rsus: Vec<RsuSpec> = file
        .rsus
        .into_iter()
        .map(|r| RsuSpec {
            id: r.id,
            total_rbs: r.total_rbs,
            total_cus: r.total_cus,
            hardware_class: r.hardware_class,
            init_delay_s: r.init_delay_s,
            position_m: (r.position_m[0], r.position_m[1]),
        })
        .collect();
    let mut profiles = ExecutionProfile::new();
    for (i, p) in file.profiles.iter().enumerate() {
        if profiles
            .proc_time(&p.service_type, &p.hardware_class, p.cus)
            .is_some()
        {
            return Err(schema(format!("profiles[{i}]"), "duplicate profile row"));
        }
        profiles.insert(&p.service_type, &p.hardware_class, p.cus, p.proc_time_s);
    }
    let traces = match (&file.traces.path, &file.traces.inline) {
        (Some(_), Some(_)) => {
            return Err(schema(
                "traces".into(),
                "give either path or inline, not both",
            ))
        }
        (Some(p), None) => {
            let path = base_dir.join(p);
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            parse_traces(&text)?
        }
        (None, Some(text)) => parse_traces(text)?,
        (None, None) => Traces::new(),
    };
    let sc = Scenario {
        rsus,
        tasks,
        profiles,
        traces,
        channel: file.channel,
        sim: file.sim,
    };
    classify(&sc)?;
    Ok(sc)
}

fn classify(sc: &Scenario) -> Result<(), ScenarioError> {
    for (i, t) in sc.tasks.iter().enumerate() {
        if !sc.profiles.has_service(&t.service_type) {
            return Err(ScenarioError::CrossRef(format!(
                "tasks[{i}] references service_type `{}` with no profile rows",
                t.service_type
            )));
        }
        if sc.traces.get(t.vehicle_id).is_none() {
            return Err(ScenarioError::CrossRef(format!(
                "tasks[{i}] references vehicle {} with no trace",
                t.vehicle_id
            )));
        }
    }
    sc.check().map_err(|m| {
        let (loc, msg) = m.split_once(": ").unwrap_or(("scenario", m.as_str()));
        schema(loc.to_string(), msg)
    })?;
    let min_period = sc.tasks.iter().map(|t| t.period_s).min_by(f64::total_cmp);
    sc.sim
        .check(min_period)
        .map_err(|m| schema("sim".into(), m))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario(&text, base)
}

/// Where the trace rows go when writing a scenario.
pub enum TraceOutput<'a> {
    Inline,
    /// Referenced by this path, relative to the scenario file.
    Path(&'a str),
}

pub fn scenario_to_toml(sc: &Scenario, traces: TraceOutput<'_>) -> String {
    let mut profiles: Vec<ProfileRow> = sc
        .profiles
        .entries()
        .map(|(s, h, c, t)| ProfileRow {
            service_type: s.to_string(),
            hardware_class: h.to_string(),
            cus: c,
            proc_time_s: t,
        })
        .collect();
    profiles.sort_by(|a, b| {
        (&a.service_type, &a.hardware_class, a.cus).cmp(&(
            &b.service_type,
            &b.hardware_class,
            b.cus,
        ))
    });
    let file = ScenarioFile {
        format_version: FORMAT_VERSION.to_string(),
        sim: sc.sim.clone(),
        channel: sc.channel.clone(),
        rsus: sc
            .rsus
            .iter()
            .map(|r| RsuRow {
                id: r.id,
                total_rbs: r.total_rbs,
                total_cus: r.total_cus,
                hardware_class: r.hardware_class.clone(),
                init_delay_s: r.init_delay_s,
                position_m: [r.position_m.0, r.position_m.1],
            })
            .collect(),
        tasks: sc.tasks.iter().map(TaskRow::from_spec).collect(),
        profiles,
        traces: match traces {
            TraceOutput::Inline => TraceSource {
                path: None,
                inline: Some(traces_to_csv(&sc.traces)),
            },
            TraceOutput::Path(p) => TraceSource {
                path: Some(p.to_string()),
                inline: None,
            },
        },
    };
    toml::to_string(&file).expect("scenario serializes")
}

/// Writes `<stem>.toml` and `<stem>.traces.csv` into `dir`.
pub fn save_scenario(sc: &Scenario, dir: &Path, stem: &str) -> Result<PathBuf, ScenarioError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let trace_name = format!("{stem}.traces.csv");
    let trace_path = dir.join(&trace_name);
    fs::write(&trace_path, traces_to_csv(&sc.traces)).map_err(io_err(&trace_path))?;
    let path = dir.join(format!("{stem}.toml"));
    fs::write(&path, scenario_to_toml(sc, TraceOutput::Path(&trace_name)))
        .map_err(io_err(&path))?;
    Ok(path)
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub algorithm: String,
    pub mode: String,
    pub quality: String,
}

/// SHA-256 over the scenario (traces inlined) and the effective config.
pub fn config_hash(sc: &Scenario, cfg: &SimConfig) -> String {
    let mut effective = sc.clone();
    effective.sim = cfg.clone();
    let text = scenario_to_toml(&effective, TraceOutput::Inline);
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn manifest(sc: &Scenario, cfg: &SimConfig) -> Manifest {
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.rng_seed,
        config_hash: config_hash(sc, cfg),
        algorithm: cfg.algorithm.to_string(),
        mode: cfg.mode.to_string(),
        quality: cfg.quality.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub manifest: Manifest,
    pub metrics: Metrics,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    manifest: Manifest,
    /// Run-level metrics; cycles live in the CSV.
    metrics: Metrics,
}

pub fn cycles_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".cycles.csv")
}

pub fn summary_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".summary.json")
}

pub fn events_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".events.csv")
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn cycles_to_csv(rows: &[CycleSnapshot]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).unwrap();
    }
    if rows.is_empty() {
        w.write_record([
            "cycle",
            "start_s",
            "span_s",
            "requests",
            "assigned",
            "predicted_js",
            "measured_js",
            "offloaded_jobs",
            "offloaded_jobs_per_s",
            "local_jobs",
            "suspensions",
            "resumptions",
            "scheduler_latency_s",
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

pub fn summary_to_json(result: &RunResult) -> String {
    let summary = Summary {
        manifest: result.manifest.clone(),
        metrics: Metrics {
            cycles: Vec::new(),
            ..result.metrics.clone()
        },
    };
    let mut s = serde_json::to_string_pretty(&summary).unwrap();
    s.push('\n');
    s
}

pub fn events_to_csv(events: &[EventRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_s", "kind", "task_id", "rsu_id", "detail"])
        .unwrap();
    for e in events {
        w.write_record([
            e.t_s.to_string(),
            e.kind.clone(),
            e.task_id.map(|t| t.0.to_string()).unwrap_or_default(),
            e.rsu_id.map(|r| r.0.to_string()).unwrap_or_default(),
            e.detail.clone(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Writes `{prefix}.cycles.csv` and `{prefix}.summary.json`, plus
/// `{prefix}.events.csv` when events are given.
pub fn write_results(
    result: &RunResult,
    events: Option<&[EventRecord]>,
    prefix: &Path,
) -> Result<(), ScenarioError> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let p = cycles_path(prefix);
    fs::write(&p, cycles_to_csv(&result.metrics.cycles)).map_err(io_err(&p))?;
    let p = summary_path(prefix);
    fs::write(&p, summary_to_json(result)).map_err(io_err(&p))?;
    if let Some(ev) = events {
        let p = events_path(prefix);
        fs::write(&p, events_to_csv(ev)).map_err(io_err(&p))?;
    }
    Ok(())
}

pub fn read_results(prefix: &Path) -> Result<RunResult, ScenarioError> {
    let p = summary_path(prefix);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        location: format!("{}:{}", p.display(), e.line()),
        message: e.to_string(),
    })?;
    let p = cycles_path(prefix);
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut cycles = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row: CycleSnapshot = rec.map_err(|e| ScenarioError::Parse {
            location: format!("{} line {}", p.display(), i + 2),
            message: e.to_string(),
        })?;
        cycles.push(row);
    }
    let mut metrics = summary.metrics;
    metrics.cycles = cycles;
    Ok(RunResult {
        manifest: summary.manifest,
        metrics,
    })
}

/// One solved snapshot: enough to re-check the assignment against the
/// scenario without rerunning the algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub manifest: Manifest,
    /// Snapshot time in the scenario.
    pub time_s: f64,
    pub assignment: Assignment,
}

pub fn solve_path(prefix: &Path) -> PathBuf {
    suffixed(prefix, ".assignment.json")
}

pub fn write_solve(record: &SolveRecord, prefix: &Path) -> Result<PathBuf, ScenarioError> {
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let p = solve_path(prefix);
    let mut text = serde_json::to_string_pretty(record).expect("record serializes");
    text.push('\n');
    fs::write(&p, text).map_err(io_err(&p))?;
    Ok(p)
}

pub fn read_solve(path: &Path) -> Result<SolveRecord, ScenarioError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        location: format!("{}:{}", path.display(), e.line()),
        message: e.to_string(),
    })
}
