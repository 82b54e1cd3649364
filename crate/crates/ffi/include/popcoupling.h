#ifndef POPCOUPLING_H
#define POPCOUPLING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum PcStatus {
  PC_STATUS_OK = 0,
  PC_STATUS_NULL_POINTER = 1,
  PC_STATUS_INVALID_ARGUMENT = 2,
  PC_STATUS_INVALID_MEASURE = 3,
  PC_STATUS_SPACE_MISMATCH = 4,
  PC_STATUS_CAP_EXCEEDED = 5,
  PC_STATUS_SIMULATION = 6,
  PC_STATUS_NUMERICAL = 7,
  PC_STATUS_CONFIG = 8,
  PC_STATUS_IO = 9,
  PC_STATUS_PANIC = 10,
} PcStatus;

/**
 * Pair cost family; `parameter` is the truncation level `a`, or `p` for `Power`.
 */
typedef enum PcCostKind {
  PC_COST_KIND_TRUNC_ABS = 0,
  PC_COST_KIND_TRUNC_ABS_STATE = 1,
  PC_COST_KIND_TRUNC_SUM = 2,
  PC_COST_KIND_TRUNC_WEIGHTED = 3,
  PC_COST_KIND_POWER = 4,
} PcCostKind;

/**
 * Weighted atoms on a state space.
 */
typedef struct PcMeasure PcMeasure;

/**
 * Optimal plan with its cost.
 */
typedef struct PcPlan PcPlan;

typedef struct PcCost {
  enum PcCostKind kind;
  double parameter;
} PcCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *pc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pc_version(void);

/**
 * Builds a measure from `n_atoms` rows of flat coordinates.
 *
 * `space` is a descriptor such as `"age"`, `"age_state:3"` or `"trait:2"`.
 * `weights` may be NULL for equal weights.
 *
 * # Safety
 * `coords` must hold `n_atoms * coordinate length` doubles, `weights` (if
 * non-NULL) `n_atoms` doubles, and `out` must be writable.
 */
enum PcStatus pc_measure_new(const char *space,
                             const double *coords,
                             size_t n_atoms,
                             const double *weights,
                             struct PcMeasure **out);

/**
 * Number of atoms, or 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle from [`pc_measure_new`].
 */
size_t pc_measure_len(const struct PcMeasure *m);

/**
 * # Safety
 * `m` must be NULL or a handle from [`pc_measure_new`] not yet freed.
 */
void pc_measure_free(struct PcMeasure *m);

/**
 * Exact transport cost between `mu` and `nu`. When `out_plan` is non-NULL it
 * receives a plan handle to release with [`pc_plan_free`].
 *
 * # Safety
 * `mu` and `nu` must be live measure handles; `out_cost` must be writable;
 * `out_plan` must be NULL or writable.
 */
enum PcStatus pc_transport_cost(const struct PcMeasure *mu,
                                const struct PcMeasure *nu,
                                struct PcCost cost,
                                double *out_cost,
                                struct PcPlan **out_plan);

/**
 * Number of plan entries, or 0 for NULL.
 *
 * # Safety
 * `plan` must be NULL or a live plan handle.
 */
size_t pc_plan_len(const struct PcPlan *plan);

/**
 * Entry `index` of the plan: source atom, target atom and mass.
 *
 * # Safety
 * `plan` must be a live plan handle and the out pointers writable.
 */
enum PcStatus pc_plan_entry(const struct PcPlan *plan,
                            size_t index,
                            size_t *src,
                            size_t *dst,
                            double *mass);

/**
 * # Safety
 * `plan` must be NULL or a plan handle not yet freed.
 */
void pc_plan_free(struct PcPlan *plan);

/**
 * Runs `validate-a`, `contract`, `sweep` or `dual-check` on a JSON
 * configuration. On success `*out_json` receives the report (release with
 * [`pc_string_free`]) and `*out_passed` the verdict.
 *
 * # Safety
 * `command` and `config_json` must be NUL-terminated strings; the out
 * pointers must be writable.
 */
enum PcStatus pc_run_experiment(const char *command,
                                const char *config_json,
                                char **out_json,
                                bool *out_passed);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void pc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POPCOUPLING_H */
