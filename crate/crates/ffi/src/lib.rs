//! C ABI over the `vec_offload` library.
//!
//! Objects cross the boundary as opaque handles created by `vo_*_load` /
//! `vo_solve` and released with the matching `vo_*_free`. Every fallible call
//! returns a [`VoStatus`]; on failure, [`vo_last_error`] describes the most
//! recent error on the calling thread. Enum-valued arguments are passed as
//! `int32_t` holding a `VoAlgorithm`, `VoMode` or `VoQuality` value so that
//! out-of-range input is reported rather than undefined.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vec_offload::algorithm::Algorithm;
use vec_offload::instance::enumerate;
use vec_offload::model::{validate, Assignment};
use vec_offload::oracle::{certify_ratio, CertifyTarget, InstanceFamily};
use vec_offload::scenario::{load_scenario, parse_scenario, Scenario, ScenarioError};
use vec_offload::sim::{run, snapshot, Mode, Quality, SimConfig, SimError};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidArgument = 5,
    InvalidConfig = 6,
    OutOfRange = 7,
    /// A produced assignment failed validation.
    Invariant = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoAlgorithm {
    SaRound = 0,
    Greedy = 1,
    Iterative = 2,
    Game = 3,
    IdAssign = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoMode {
    SchedAll = 0,
    SchedRemain = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoQuality {
    Low = 0,
    Medium = 1,
    High = 2,
}

/// One selected service instance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoSelection {
    pub task_id: u32,
    pub rsu_id: u32,
    pub rbs: u32,
    pub cus: u32,
    /// Energy saving rate in J/s.
    pub utility: f64,
}

/// Simulation overrides. Negative values keep the scenario's setting;
/// a `duration_s` of zero or less keeps the scenario's duration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoSimOptions {
    pub algorithm: i32,
    pub mode: i32,
    pub quality: i32,
    pub seed: u64,
    /// Non-zero to use `seed` instead of the scenario's seed.
    pub use_seed: i32,
    pub duration_s: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoMetrics {
    pub duration_s: f64,
    pub predicted_js: f64,
    pub measured_js: f64,
    pub offloaded_jobs_per_s: f64,
    pub offloaded_jobs: u64,
    pub local_jobs: u64,
    pub total_jobs: u64,
    pub suspensions: u64,
    pub resumptions: u64,
    pub deadline_misses: u64,
    pub cycles: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VoCertifyResult {
    pub trials: u64,
    pub inexact_trials: u64,
    pub violations: u64,
    /// NaN when no bound is known or no trial was exact.
    pub bound: f64,
    pub min_ratio: f64,
    pub mean_ratio: f64,
}

/// Opaque scenario handle.
pub struct VoScenario(Scenario);

/// Opaque assignment handle.
pub struct VoAssignment(Assignment);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

type Fallible = Result<(), (VoStatus, String)>;

/// Runs `f`, records its error and converts panics into `VoStatus::Panic`.
fn guard<F: FnOnce() -> Fallible>(f: F) -> VoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VoStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            VoStatus::Panic
        }
    }
}

fn null(what: &str) -> (VoStatus, String) {
    (VoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VoStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (VoStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn scenario_err(e: ScenarioError) -> (VoStatus, String) {
    let status = match e {
        ScenarioError::Io { .. } => VoStatus::Io,
        _ => VoStatus::Parse,
    };
    (status, e.to_string())
}

fn sim_err(e: SimError) -> (VoStatus, String) {
    (VoStatus::InvalidConfig, e.to_string())
}

fn algorithm_of(v: i32) -> Result<Algorithm, (VoStatus, String)> {
    Ok(match v {
        0 => Algorithm::SaRound,
        1 => Algorithm::Greedy,
        2 => Algorithm::Iterative,
        3 => Algorithm::Game,
        4 => Algorithm::IdAssign,
        _ => return Err((VoStatus::InvalidArgument, format!("unknown algorithm {v}"))),
    })
}

fn mode_of(v: i32) -> Result<Mode, (VoStatus, String)> {
    Ok(match v {
        0 => Mode::SchedAll,
        1 => Mode::SchedRemain,
        _ => return Err((VoStatus::InvalidArgument, format!("unknown mode {v}"))),
    })
}

fn quality_of(v: i32) -> Result<Quality, (VoStatus, String)> {
    Ok(match v {
        0 => Quality::Low,
        1 => Quality::Medium,
        2 => Quality::High,
        _ => return Err((VoStatus::InvalidArgument, format!("unknown quality {v}"))),
    })
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next `vo_*` call on the same thread.
#[no_mangle]
pub extern "C" fn vo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn vo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a scenario TOML file. Relative trace paths resolve against the
/// file's directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_scenario_load(
    path: *const c_char,
    out: *mut *mut VoScenario,
) -> VoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let sc = load_scenario(Path::new(path)).map_err(scenario_err)?;
        *out = Box::into_raw(Box::new(VoScenario(sc)));
        Ok(())
    })
}

/// Parses scenario TOML text. `base_dir` (may be null for ".") resolves
/// relative trace paths.
///
/// # Safety
/// `text` and a non-null `base_dir` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_scenario_parse(
    text: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut VoScenario,
) -> VoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let base = if base_dir.is_null() {
            "."
        } else {
            str_arg(base_dir, "base_dir")?
        };
        let sc = parse_scenario(text, Path::new(base)).map_err(scenario_err)?;
        *out = Box::into_raw(Box::new(VoScenario(sc)));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from `vo_scenario_load`/`_parse`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn vo_scenario_free(scenario: *mut VoScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vo_scenario_rsu_count(scenario: *const VoScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.rsus.len())
}

/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vo_scenario_task_count(scenario: *const VoScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.tasks.len())
}

/// Solves the snapshot of `scenario` at `t_s` seconds with idle RSUs. The
/// channel uses `quality` and `seed`. Returns `VO_STATUS_INVARIANT` (and no
/// handle) if the assignment fails validation.
///
/// # Safety
/// `scenario` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_solve(
    scenario: *const VoScenario,
    algorithm: i32,
    quality: i32,
    seed: u64,
    t_s: f64,
    out: *mut *mut VoAssignment,
) -> VoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let sc = &scenario.as_ref().ok_or_else(|| null("scenario"))?.0;
        let cfg = SimConfig {
            algorithm: algorithm_of(algorithm)?,
            quality: quality_of(quality)?,
            rng_seed: seed,
            ..sc.sim.clone()
        };
        if !t_s.is_finite() || t_s < 0.0 {
            return Err((VoStatus::InvalidArgument, format!("bad time {t_s}")));
        }
        let inst = snapshot(sc, &cfg, t_s).map_err(sim_err)?;
        let pool = enumerate(&inst, true);
        let a = cfg.algorithm.run(&pool, &inst);
        let v = validate(&a, &inst);
        if !v.is_empty() {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err((VoStatus::Invariant, list.join("; ")));
        }
        *out = Box::into_raw(Box::new(VoAssignment(a)));
        Ok(())
    })
}

/// # Safety
/// `assignment` must be null or a handle from `vo_solve` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vo_assignment_free(assignment: *mut VoAssignment) {
    if !assignment.is_null() {
        drop(Box::from_raw(assignment));
    }
}

/// Number of selected instances.
///
/// # Safety
/// `assignment` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vo_assignment_len(assignment: *const VoAssignment) -> usize {
    assignment.as_ref().map_or(0, |a| a.0.selected.len())
}

/// Total utility in J/s.
///
/// # Safety
/// `assignment` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vo_assignment_total_utility(assignment: *const VoAssignment) -> f64 {
    assignment.as_ref().map_or(0.0, |a| a.0.total_utility)
}

/// Copies the `index`-th selection, in (task, rsu) order.
///
/// # Safety
/// `assignment` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_assignment_get(
    assignment: *const VoAssignment,
    index: usize,
    out: *mut VoSelection,
) -> VoStatus {
    guard(|| {
        let a = &assignment.as_ref().ok_or_else(|| null("assignment"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let s = a.selected.get(index).ok_or_else(|| {
            (
                VoStatus::OutOfRange,
                format!("index {index} >= {}", a.selected.len()),
            )
        })?;
        *out = VoSelection {
            task_id: s.task_id.0,
            rsu_id: s.rsu_id.0,
            rbs: s.rbs,
            cus: s.cus,
            utility: s.utility,
        };
        Ok(())
    })
}

/// Default simulation options: keep everything from the scenario.
#[no_mangle]
pub extern "C" fn vo_sim_options_default() -> VoSimOptions {
    VoSimOptions {
        algorithm: -1,
        mode: -1,
        quality: -1,
        seed: 0,
        use_seed: 0,
        duration_s: 0.0,
    }
}

unsafe fn sim_config(
    sc: &Scenario,
    opts: *const VoSimOptions,
) -> Result<SimConfig, (VoStatus, String)> {
    let mut cfg = sc.sim.clone();
    if let Some(o) = opts.as_ref() {
        if o.algorithm >= 0 {
            cfg.algorithm = algorithm_of(o.algorithm)?;
        }
        if o.mode >= 0 {
            cfg.mode = mode_of(o.mode)?;
        }
        if o.quality >= 0 {
            cfg.quality = quality_of(o.quality)?;
        }
        if o.use_seed != 0 {
            cfg.rng_seed = o.seed;
        }
        if o.duration_s > 0.0 {
            cfg.duration_s = o.duration_s;
        }
    }
    Ok(cfg)
}

/// Runs the closed-loop simulation. `opts` may be null for the scenario's
/// own settings.
///
/// # Safety
/// `scenario` must be a live handle; `opts` null or readable; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn vo_simulate(
    scenario: *const VoScenario,
    opts: *const VoSimOptions,
    out: *mut VoMetrics,
) -> VoStatus {
    guard(|| {
        let sc = &scenario.as_ref().ok_or_else(|| null("scenario"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let cfg = sim_config(sc, opts)?;
        let m = run(sc, &cfg).map_err(sim_err)?.metrics;
        *out = VoMetrics {
            duration_s: m.duration_s,
            predicted_js: m.predicted_js,
            measured_js: m.measured_js,
            offloaded_jobs_per_s: m.offloaded_jobs_per_s,
            offloaded_jobs: m.offloaded_jobs,
            local_jobs: m.local_jobs,
            total_jobs: m.total_jobs,
            suspensions: m.suspensions,
            resumptions: m.resumptions,
            deadline_misses: m.deadline_misses,
            cycles: m.cycles.len() as u64,
        };
        Ok(())
    })
}

/// Like `vo_simulate` but returns the full metrics, per-cycle rows included,
/// as a JSON string to be released with `vo_string_free`.
///
/// # Safety
/// As for `vo_simulate`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_simulate_json(
    scenario: *const VoScenario,
    opts: *const VoSimOptions,
    out: *mut *mut c_char,
) -> VoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let sc = &scenario.as_ref().ok_or_else(|| null("scenario"))?.0;
        let cfg = sim_config(sc, opts)?;
        let m = run(sc, &cfg).map_err(sim_err)?.metrics;
        let json = serde_json::to_string(&m).expect("metrics serialize");
        *out = CString::new(json).expect("no NUL in JSON").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Compares `algorithm` with the exact optimum on `trials` random small
/// instances from the default family. `algorithm` < 0 certifies the per-RSU
/// rounding step alone.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vo_certify(
    algorithm: i32,
    trials: usize,
    seed: u64,
    out: *mut VoCertifyResult,
) -> VoStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let target = if algorithm < 0 {
            CertifyTarget::FloorRd
        } else {
            CertifyTarget::Whole(algorithm_of(algorithm)?)
        };
        let r = certify_ratio(target, &InstanceFamily::default(), trials, seed)
            .map_err(|e| (VoStatus::InvalidArgument, e.to_string()))?;
        *out = VoCertifyResult {
            trials: r.trials as u64,
            inexact_trials: r.inexact_trials as u64,
            violations: r.violations.len() as u64,
            bound: r.bound.unwrap_or(f64::NAN),
            min_ratio: r.min_ratio.unwrap_or(f64::NAN),
            mean_ratio: r.mean_ratio.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, VoStatus::Panic);
        let msg = unsafe { CStr::from_ptr(vo_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), VoStatus::Ok);
        assert!(vo_last_error().is_null());
    }

    #[test]
    fn enum_values_match_c_constants() {
        for (i, a) in Algorithm::ALL.iter().enumerate() {
            assert_eq!(algorithm_of(i as i32).unwrap(), *a);
        }
        assert!(algorithm_of(5).is_err());
        assert_eq!(
            mode_of(VoMode::SchedRemain as i32).unwrap(),
            Mode::SchedRemain
        );
        assert_eq!(quality_of(VoQuality::High as i32).unwrap(), Quality::High);
        assert!(quality_of(-1).is_err());
    }
}
