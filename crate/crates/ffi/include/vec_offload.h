#ifndef VEC_OFFLOAD_H
#define VEC_OFFLOAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VoStatus {
  VO_STATUS_OK = 0,
  VO_STATUS_NULL_POINTER = 1,
  VO_STATUS_INVALID_UTF8 = 2,
  VO_STATUS_IO = 3,
  VO_STATUS_PARSE = 4,
  VO_STATUS_INVALID_ARGUMENT = 5,
  VO_STATUS_INVALID_CONFIG = 6,
  VO_STATUS_OUT_OF_RANGE = 7,
  /**
   * A produced assignment failed validation.
   */
  VO_STATUS_INVARIANT = 8,
  VO_STATUS_PANIC = 9,
} VoStatus;

typedef enum VoAlgorithm {
  VO_ALGORITHM_SA_ROUND = 0,
  VO_ALGORITHM_GREEDY = 1,
  VO_ALGORITHM_ITERATIVE = 2,
  VO_ALGORITHM_GAME = 3,
  VO_ALGORITHM_ID_ASSIGN = 4,
} VoAlgorithm;

typedef enum VoMode {
  VO_MODE_SCHED_ALL = 0,
  VO_MODE_SCHED_REMAIN = 1,
} VoMode;

typedef enum VoQuality {
  VO_QUALITY_LOW = 0,
  VO_QUALITY_MEDIUM = 1,
  VO_QUALITY_HIGH = 2,
} VoQuality;

/**
 * Opaque assignment handle.
 */
typedef struct VoAssignment VoAssignment;

/**
 * Opaque scenario handle.
 */
typedef struct VoScenario VoScenario;

/**
 * One selected service instance.
 */
typedef struct VoSelection {
  uint32_t task_id;
  uint32_t rsu_id;
  uint32_t rbs;
  uint32_t cus;
  /**
   * Energy saving rate in J/s.
   */
  double utility;
} VoSelection;

/**
 * Simulation overrides. Negative values keep the scenario's setting;
 * a `duration_s` of zero or less keeps the scenario's duration.
 */
typedef struct VoSimOptions {
  int32_t algorithm;
  int32_t mode;
  int32_t quality;
  uint64_t seed;
  /**
   * Non-zero to use `seed` instead of the scenario's seed.
   */
  int32_t use_seed;
  double duration_s;
} VoSimOptions;

typedef struct VoMetrics {
  double duration_s;
  double predicted_js;
  double measured_js;
  double offloaded_jobs_per_s;
  uint64_t offloaded_jobs;
  uint64_t local_jobs;
  uint64_t total_jobs;
  uint64_t suspensions;
  uint64_t resumptions;
  uint64_t deadline_misses;
  uint64_t cycles;
} VoMetrics;

typedef struct VoCertifyResult {
  uint64_t trials;
  uint64_t inexact_trials;
  uint64_t violations;
  /**
   * NaN when no bound is known or no trial was exact.
   */
  double bound;
  double min_ratio;
  double mean_ratio;
} VoCertifyResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next `vo_*` call on the same thread.
 */
const char *vo_last_error(void);

/**
 * Library version, a static string.
 */
const char *vo_version(void);

/**
 * Loads a scenario TOML file. Relative trace paths resolve against the
 * file's directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum VoStatus vo_scenario_load(const char *path, struct VoScenario **out);

/**
 * Parses scenario TOML text. `base_dir` (may be null for ".") resolves
 * relative trace paths.
 *
 * # Safety
 * `text` and a non-null `base_dir` must be NUL-terminated strings; `out`
 * must be writable.
 */
enum VoStatus vo_scenario_parse(const char *text, const char *base_dir, struct VoScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from `vo_scenario_load`/`_parse`
 * that has not been freed.
 */
void vo_scenario_free(struct VoScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t vo_scenario_rsu_count(const struct VoScenario *scenario);

/**
 * # Safety
 * `scenario` must be null or a live handle.
 */
size_t vo_scenario_task_count(const struct VoScenario *scenario);

/**
 * Solves the snapshot of `scenario` at `t_s` seconds with idle RSUs. The
 * channel uses `quality` and `seed`. Returns `VO_STATUS_INVARIANT` (and no
 * handle) if the assignment fails validation.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum VoStatus vo_solve(const struct VoScenario *scenario,
                       int32_t algorithm,
                       int32_t quality,
                       uint64_t seed,
                       double t_s,
                       struct VoAssignment **out);

/**
 * # Safety
 * `assignment` must be null or a handle from `vo_solve` not yet freed.
 */
void vo_assignment_free(struct VoAssignment *assignment);

/**
 * Number of selected instances.
 *
 * # Safety
 * `assignment` must be null or a live handle.
 */
size_t vo_assignment_len(const struct VoAssignment *assignment);

/**
 * Total utility in J/s.
 *
 * # Safety
 * `assignment` must be null or a live handle.
 */
double vo_assignment_total_utility(const struct VoAssignment *assignment);

/**
 * Copies the `index`-th selection, in (task, rsu) order.
 *
 * # Safety
 * `assignment` must be a live handle; `out` must be writable.
 */
enum VoStatus vo_assignment_get(const struct VoAssignment *assignment,
                                size_t index,
                                struct VoSelection *out);

/**
 * Default simulation options: keep everything from the scenario.
 */
struct VoSimOptions vo_sim_options_default(void);

/**
 * Runs the closed-loop simulation. `opts` may be null for the scenario's
 * own settings.
 *
 * # Safety
 * `scenario` must be a live handle; `opts` null or readable; `out` writable.
 */
enum VoStatus vo_simulate(const struct VoScenario *scenario,
                          const struct VoSimOptions *opts,
                          struct VoMetrics *out);

/**
 * Like `vo_simulate` but returns the full metrics, per-cycle rows included,
 * as a JSON string to be released with `vo_string_free`.
 *
 * # Safety
 * As for `vo_simulate`; `out` must be writable.
 */
enum VoStatus vo_simulate_json(const struct VoScenario *scenario,
                               const struct VoSimOptions *opts,
                               char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void vo_string_free(char *s);

/**
 * Compares `algorithm` with the exact optimum on `trials` random small
 * instances from the default family. `algorithm` < 0 certifies the per-RSU
 * rounding step alone.
 *
 * # Safety
 * `out` must be writable.
 */
enum VoStatus vo_certify(int32_t algorithm,
                         size_t trials,
                         uint64_t seed,
                         struct VoCertifyResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VEC_OFFLOAD_H */
