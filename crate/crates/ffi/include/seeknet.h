#ifndef SEEKNET_H
#define SEEKNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SeeknetStatus {
  SEEKNET_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SEEKNET_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  SEEKNET_STATUS_INVALID_UTF8 = 2,
  /**
   * The scenario JSON is malformed or fails validation.
   */
  SEEKNET_STATUS_INVALID_SCENARIO = 3,
  /**
   * An index was past the end.
   */
  SEEKNET_STATUS_OUT_OF_RANGE = 4,
  /**
   * The simulator panicked. This is a bug.
   */
  SEEKNET_STATUS_INTERNAL = 5,
} SeeknetStatus;

/**
 * The result of one simulation run.
 */
typedef struct SeeknetRun SeeknetRun;

/**
 * A validated scenario.
 */
typedef struct SeeknetScenario SeeknetScenario;

/**
 * Per-flow figures. `reliability_pct` is NaN when nothing was sent.
 */
typedef struct SeeknetFlowSummary {
  uint64_t sent;
  uint64_t received;
  uint64_t dropped;
  uint64_t in_flight;
  double reliability_pct;
  double goodput_bps;
  double normalized_throughput;
} SeeknetFlowSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *seeknet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *seeknet_version(void);

/**
 * Parses and validates a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum SeeknetStatus seeknet_scenario_from_json(const char *json, struct SeeknetScenario **out);

/**
 * Number of traffic sessions in the scenario.
 *
 * # Safety
 * `scenario` must come from [`seeknet_scenario_from_json`]; `out` must be writable.
 */
enum SeeknetStatus seeknet_scenario_session_count(const struct SeeknetScenario *scenario,
                                                  size_t *out);

/**
 * Seed stored in the scenario document.
 *
 * # Safety
 * As for [`seeknet_scenario_session_count`].
 */
enum SeeknetStatus seeknet_scenario_seed(const struct SeeknetScenario *scenario, uint64_t *out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from [`seeknet_scenario_from_json`] and not be used afterwards.
 */
void seeknet_scenario_free(struct SeeknetScenario *scenario);

/**
 * Runs the scenario to completion with `seed`.
 *
 * # Safety
 * `scenario` must be a live scenario handle and `out` writable.
 */
enum SeeknetStatus seeknet_run(const struct SeeknetScenario *scenario,
                               uint64_t seed,
                               struct SeeknetRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from [`seeknet_run`] and not be used afterwards.
 */
void seeknet_run_free(struct SeeknetRun *run);

/**
 * FNV-1a 64 digest of the run's event trace.
 *
 * # Safety
 * `run` must be a live run handle and `out` writable.
 */
enum SeeknetStatus seeknet_run_trace_digest(const struct SeeknetRun *run, uint64_t *out);

/**
 * Summary of session `index`, or of the aggregate when `index` equals the
 * session count.
 *
 * # Safety
 * `run` must be a live run handle and `out` writable.
 */
enum SeeknetStatus seeknet_run_flow(const struct SeeknetRun *run,
                                    size_t index,
                                    struct SeeknetFlowSummary *out);

/**
 * The full metrics report as a JSON string. Free it with
 * [`seeknet_string_free`].
 *
 * # Safety
 * `run` must be a live run handle and `out` writable.
 */
enum SeeknetStatus seeknet_run_report_json(const struct SeeknetRun *run, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void seeknet_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEEKNET_H */
