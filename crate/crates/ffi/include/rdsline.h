#ifndef RDSLINE_H
#define RDSLINE_H

/* Generated from the Rust sources; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RDSLINE_OK 0

/**
 * A required pointer argument was null.
 */
#define RDSLINE_NULL_ARG 1

/**
 * The computation ran but declined to certify a result; see the error text.
 */
#define RDSLINE_REFUSED 2

/**
 * Unparseable input or invalid parameters.
 */
#define RDSLINE_PARSE 3

/**
 * A bug: panic or other invariant failure inside the library.
 */
#define RDSLINE_INTERNAL 4

/**
 * An increasing random system, built once and reused across calls.
 */
typedef struct RdslineSystem RdslineSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rdsline_version(void);

/**
 * Message describing the most recent failure on this thread; empty until
 * a call fails. The pointer is invalidated by the next failing call.
 */
const char *rdsline_last_error(void);

/**
 * Parses a system description (the `system` object of a run config:
 * `label`, `maps`, `probs`) and returns an owned handle through `out`.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
int32_t rdsline_system_from_json(const char *json, struct RdslineSystem **out);

/**
 * Releases a handle from `rdsline_system_from_json`. Null is allowed.
 *
 * # Safety
 * `sys` must be null or a pointer this library returned, freed only once.
 */
void rdsline_system_free(struct RdslineSystem *sys);

/**
 * The system's label; owned by the handle. Null handle gives null.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
const char *rdsline_system_label(const struct RdslineSystem *sys);

/**
 * Number of maps in the system; 0 for a null handle.
 *
 * # Safety
 * `sys` must be null or a live handle.
 */
size_t rdsline_system_map_count(const struct RdslineSystem *sys);

/**
 * Classifies the system into one of the four behavior classes.
 *
 * Pass 0 for `trials`, `horizon`, or `escape` to use the standard budgets,
 * and a `tau` of 0.0 for the standard margin. On `RDSLINE_OK` the class
 * (1..=4) and the flip/swap normalization flags are written; on
 * `RDSLINE_REFUSED` the reason is in `rdsline_last_error`.
 *
 * # Safety
 * `sys` must be a live handle; the out pointers must be valid.
 */
int32_t rdsline_classify(const struct RdslineSystem *sys,
                         uint64_t master_seed,
                         uint64_t trials,
                         uint64_t horizon,
                         double escape,
                         double tau,
                         uint8_t *out_class,
                         bool *out_flipped,
                         bool *out_swapped);

/**
 * Estimates the three escape probabilities at `x` plus a 95% confidence
 * halfwidth. Pass 0 for `trials`/`horizon`/`escape` for standard budgets.
 *
 * # Safety
 * `sys` must be a live handle; the out pointers must be valid.
 */
int32_t rdsline_phi(const struct RdslineSystem *sys,
                    double x,
                    uint64_t master_seed,
                    uint64_t trials,
                    uint64_t horizon,
                    double escape,
                    double *out_plus,
                    double *out_minus,
                    double *out_zero,
                    double *out_ci);

/**
 * Runs the rank-tower system for `steps` steps and reports interval visits.
 *
 * `variant` is 0 for the alternating signs, 1 for coin-flip signs. The
 * watched interval is `[lo, hi]`. On success `out_last_inside` holds the
 * last step whose position verdict was inside (or -1 if none) and
 * `out_max_rank` the largest applied rank. The seed stream matches the CLI:
 * a single-seed run derives its stream from (master_seed, 0).
 *
 * # Safety
 * The out pointers must be valid.
 */
int32_t rdsline_monster_escape(int32_t variant,
                               uint64_t steps,
                               uint64_t master_seed,
                               double lo,
                               double hi,
                               int64_t *out_last_inside,
                               uint64_t *out_max_rank);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RDSLINE_H */
