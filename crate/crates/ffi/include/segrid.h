#ifndef SEGRID_H
#define SEGRID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of an FFI call.
typedef enum SegridStatus {
  SEGRID_STATUS_OK = 0,
  // The scenario could not be parsed or violates a model invariant.
  SEGRID_STATUS_INVALID_INPUT = 1,
  // The solver failed for a reason other than bad input.
  SEGRID_STATUS_SOLVER_ERROR = 2,
  SEGRID_STATUS_NULL_POINTER = 3,
  // The output buffer is shorter than the value; the required length
  // was written to `len_out`.
  SEGRID_STATUS_BUFFER_TOO_SMALL = 4,
  SEGRID_STATUS_INVALID_UTF8 = 5,
  SEGRID_STATUS_PANIC = 6,
} SegridStatus;

// Outcome of a completed run.
typedef enum SegridRunStatus {
  SEGRID_RUN_STATUS_CONVERGED = 0,
  SEGRID_RUN_STATUS_INNER_NOT_CONVERGED = 1,
  SEGRID_RUN_STATUS_LEADER_NOT_CONVERGED = 2,
  SEGRID_RUN_STATUS_FINAL_NOT_CONVERGED = 3,
  SEGRID_RUN_STATUS_NOT_EQUILIBRIUM = 4,
} SegridRunStatus;

// The result of [`segrid_run`].
typedef struct SegridReport SegridReport;

// A parsed and validated scenario.
typedef struct SegridScenario SegridScenario;

// Message of the last failed call on this thread, or null if the last
// call succeeded. The pointer stays valid until the next call on the
// same thread.
const char *segrid_last_error_message(void);

// Parses a scenario from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum SegridStatus segrid_scenario_from_toml(const char *toml, struct SegridScenario **out);

// Reads a scenario from a TOML file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SegridStatus segrid_scenario_from_path(const char *path, struct SegridScenario **out);

// # Safety
// `scenario` must come from a `segrid_scenario_from_*` call and not be
// freed twice. Null is ignored.
void segrid_scenario_free(struct SegridScenario *scenario);

// Number of microgrid and generator buses.
//
// # Safety
// All pointers must be valid.
enum SegridStatus segrid_scenario_dims(const struct SegridScenario *scenario,
                                       size_t *n_microgrids,
                                       size_t *n_generators);

// Overrides the random seed used by subsequent runs.
//
// # Safety
// `scenario` must be valid.
enum SegridStatus segrid_scenario_set_seed(struct SegridScenario *scenario, uint64_t seed);

// Evaluates the follower step condition. `lhs < rhs` iff satisfied.
//
// # Safety
// All pointers must be valid.
enum SegridStatus segrid_check_pda(const struct SegridScenario *scenario,
                                   double *lhs,
                                   double *rhs,
                                   bool *satisfied);

// Searches for the equilibrium. A run that does not converge still
// returns `Ok`; inspect [`segrid_report_status`].
//
// # Safety
// `scenario` and `out` must be valid.
enum SegridStatus segrid_run(const struct SegridScenario *scenario, struct SegridReport **out);

// # Safety
// `report` must come from [`segrid_run`] and not be freed twice. Null is
// ignored.
void segrid_report_free(struct SegridReport *report);

// # Safety
// Both pointers must be valid.
enum SegridStatus segrid_report_status(const struct SegridReport *report,
                                       enum SegridRunStatus *out);

// # Safety
// Both pointers must be valid.
enum SegridStatus segrid_report_leader_cost(const struct SegridReport *report, double *out);

// Generator outputs in scenario generator order, MW. Pass `cap = 0` to
// query the length.
//
// # Safety
// `buf` must hold `cap` doubles; `len_out` must be valid.
enum SegridStatus segrid_report_p_g(const struct SegridReport *report,
                                    double *buf,
                                    size_t cap,
                                    size_t *len_out);

// Microgrid net injections, MW.
//
// # Safety
// As for [`segrid_report_p_g`].
enum SegridStatus segrid_report_p_d(const struct SegridReport *report,
                                    double *buf,
                                    size_t cap,
                                    size_t *len_out);

// Microgrid renewable generation, MW.
//
// # Safety
// As for [`segrid_report_p_g`].
enum SegridStatus segrid_report_p_dg(const struct SegridReport *report,
                                     double *buf,
                                     size_t cap,
                                     size_t *len_out);

// Serializes the report as JSON. Release the string with
// [`segrid_string_free`].
//
// # Safety
// Both pointers must be valid.
enum SegridStatus segrid_report_to_json(const struct SegridReport *report, char **out);

// # Safety
// `s` must come from this library and not be freed twice. Null is ignored.
void segrid_string_free(char *s);

#endif  /* SEGRID_H */
