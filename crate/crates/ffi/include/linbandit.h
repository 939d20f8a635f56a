#ifndef LINBANDIT_H
#define LINBANDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LbStatus {
  LB_STATUS_OK = 0,
  LB_STATUS_NULL_POINTER = 1,
  LB_STATUS_INVALID_ARGUMENT = 2,
  LB_STATUS_INSUFFICIENT_DATA = 3,
  LB_STATUS_DEGENERATE = 4,
  LB_STATUS_UNKNOWN_CONCEPT = 5,
  LB_STATUS_IO = 6,
  LB_STATUS_PARSE = 7,
  LB_STATUS_PANIC = 8,
} LbStatus;

typedef enum LbPolicyKind {
  LB_POLICY_KIND_LINEARIZED = 0,
  LB_POLICY_KIND_EGREEDY = 1,
  LB_POLICY_KIND_EBEGINNING = 2,
  LB_POLICY_KIND_EDECREASING = 3,
  LB_POLICY_KIND_EG = 4,
} LbPolicyKind;

typedef enum LbUtilityVariant {
  LB_UTILITY_VARIANT_DIFFERENCE = 0,
  LB_UTILITY_VARIANT_MIXTURE = 1,
} LbUtilityVariant;

typedef enum LbGate {
  LB_GATE_LITERAL = 0,
  LB_GATE_CONVENTIONAL = 1,
} LbGate;

typedef struct LbDensity LbDensity;

typedef struct LbOntology LbOntology;

typedef struct LbPolicy LbPolicy;

/**
 * Policy settings. Enum-valued fields are plain integers holding one of
 * the matching `LB_*` constants.
 */
typedef struct LbPolicyParams {
  /**
   * `LbPolicyKind`
   */
  uint32_t kind;
  double epsilon;
  double epsilon0;
  uint64_t horizon;
  uintptr_t batch;
  double a;
  double b;
  /**
   * `LbUtilityVariant`
   */
  uint32_t variant;
  double threshold_error;
  /**
   * `LbGate`
   */
  uint32_t gate;
} LbPolicyParams;

typedef struct LbTradeoff {
  double threshold;
  double epsilon;
  double utility;
} LbTradeoff;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *lb_last_error(void);

/**
 * Fills `out` with the defaults for `kind`.
 *
 * # Safety
 * `out` must be NULL or valid for writes.
 */
enum LbStatus lb_policy_params_default(uint32_t kind, struct LbPolicyParams *out);

/**
 * Creates a policy seeded with `seed`. Free it with [`lb_policy_free`].
 *
 * # Safety
 * `params` must be NULL or point to an initialized `LbPolicyParams`; `out`
 * must be NULL or valid for writes.
 */
enum LbStatus lb_policy_new(const struct LbPolicyParams *params,
                            uint64_t seed,
                            struct LbPolicy **out);

/**
 * # Safety
 * `policy` must be NULL or a handle from [`lb_policy_new`] not yet freed.
 */
void lb_policy_free(struct LbPolicy *policy);

/**
 * Picks one of `n` candidate ids and writes its position to `out_index`
 * and the ε in force to `out_epsilon` (which may be NULL).
 *
 * # Safety
 * `candidates` must hold `n` NUL-terminated strings; other pointers must be
 * NULL or valid.
 */
enum LbStatus lb_policy_select(struct LbPolicy *policy,
                               const char *const *candidates,
                               uintptr_t n,
                               uintptr_t *out_index,
                               double *out_epsilon);

/**
 * Records whether the displayed document `doc` was clicked.
 *
 * # Safety
 * `policy` must be a live handle and `doc` a NUL-terminated string.
 */
enum LbStatus lb_policy_observe(struct LbPolicy *policy, const char *doc, bool clicked);

/**
 * Observed CTR of `doc`; `LB_STATUS_INSUFFICIENT_DATA` if never displayed.
 *
 * # Safety
 * `policy` must be a live handle, `doc` a NUL-terminated string and `out`
 * valid for writes.
 */
enum LbStatus lb_policy_ctr(const struct LbPolicy *policy, const char *doc, double *out);

/**
 * Linearizes the points `(s[i], p[i])` (strictly increasing `s`) and
 * normalizes the result to unit area.
 *
 * # Safety
 * `s` and `p` must each hold `n` doubles; `out` must be valid for writes.
 */
enum LbStatus lb_density_fit(const double *s,
                             const double *p,
                             uintptr_t n,
                             double threshold_error,
                             struct LbDensity **out);

/**
 * Bins `n` rewards in `[0, 1]` into a point series, then fits it as
 * [`lb_density_fit`] does.
 *
 * # Safety
 * `rewards` must hold `n` doubles; `out` must be valid for writes.
 */
enum LbStatus lb_density_from_rewards(const double *rewards,
                                      uintptr_t n,
                                      double threshold_error,
                                      struct LbDensity **out);

/**
 * # Safety
 * `density` must be NULL or a live handle.
 */
void lb_density_free(struct LbDensity *density);

/**
 * # Safety
 * `density` must be a live handle; `lo` and `hi` valid for writes.
 */
enum LbStatus lb_density_domain(const struct LbDensity *density, double *lo, double *hi);

/**
 * Number of linear pieces (classes and liaisons).
 *
 * # Safety
 * `density` must be a live handle; `out` valid for writes.
 */
enum LbStatus lb_density_segment_count(const struct LbDensity *density, uintptr_t *out);

/**
 * Density value at `x`, zero outside the domain.
 *
 * # Safety
 * `density` must be a live handle; `out` valid for writes.
 */
enum LbStatus lb_density_evaluate(const struct LbDensity *density, double x, double *out);

/**
 * Probability mass above `o`.
 *
 * # Safety
 * `density` must be a live handle; `out` valid for writes.
 */
enum LbStatus lb_density_tail(const struct LbDensity *density, double o, double *out);

/**
 * Threshold maximizing the utility for the given clicked / non-clicked
 * densities; `variant` is an `LbUtilityVariant`.
 *
 * # Safety
 * Both densities must be live handles; `out` valid for writes.
 */
enum LbStatus lb_optimize_threshold(const struct LbDensity *clicked,
                                    const struct LbDensity *non_clicked,
                                    double a,
                                    double b,
                                    uint32_t variant,
                                    uint64_t clicked_count,
                                    uint64_t non_clicked_count,
                                    uintptr_t grid_size,
                                    struct LbTradeoff *out);

/**
 * Reads a `child<TAB>parent` file, with `-` as the root's parent.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writes.
 */
enum LbStatus lb_ontology_load(const char *path, struct LbOntology **out);

/**
 * Same format as [`lb_ontology_load`], from memory.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` valid for writes.
 */
enum LbStatus lb_ontology_parse(const char *text, struct LbOntology **out);

/**
 * # Safety
 * `ontology` must be NULL or a live handle.
 */
void lb_ontology_free(struct LbOntology *ontology);

/**
 * Wu-Palmer similarity of two concepts.
 *
 * # Safety
 * `ontology` must be a live handle, `x` and `y` NUL-terminated strings and
 * `out` valid for writes.
 */
enum LbStatus lb_ontology_similarity(const struct LbOntology *ontology,
                                     const char *x,
                                     const char *y,
                                     double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINBANDIT_H */
