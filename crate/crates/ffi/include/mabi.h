#ifndef MABI_H
#define MABI_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Exposure marker for a unit exposed to no arm.
#define MABI_EXPOSED_NONE -1

// Exposure marker for a unit exposed to every arm.
#define MABI_EXPOSED_ALL -2

// Result code of every fallible call.
typedef enum MabiStatus {
  MABI_STATUS_OK = 0,
  MABI_STATUS_NULL_POINTER = 1,
  MABI_STATUS_INVALID_ARGUMENT = 2,
  MABI_STATUS_OUT_OF_RANGE = 3,
  MABI_STATUS_PRECONDITION = 4,
  MABI_STATUS_UNSUPPORTED = 5,
  MABI_STATUS_INTERNAL = 6,
  MABI_STATUS_PANIC = 7,
} MabiStatus;

// Opaque EXP3 learner state.
typedef struct MabiExp3 MabiExp3;

// Opaque partition geometry.
typedef struct MabiPartitionSpec MabiPartitionSpec;

// Opaque set of unit locations.
typedef struct MabiUniverse MabiUniverse;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *mabi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *mabi_version(void);

// Sup-norm distance between `(ax, ay)` and `(bx, by)`.
double mabi_sup_distance(double ax, double ay, double bx, double by);

// Unit-spaced `side × side` lattice centred at the origin.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum MabiStatus mabi_universe_lattice_new(size_t side, struct MabiUniverse **out);

// Universe from `len` points given as interleaved `x, y` pairs inside
// `[-half_width, half_width]²`.
//
// # Safety
// `xy` must point to `2 * len` readable doubles; `out` must be writable.
enum MabiStatus mabi_universe_new(const double *xy,
                                  size_t len,
                                  double half_width,
                                  struct MabiUniverse **out);

// Number of units, or 0 for a null handle.
//
// # Safety
// `universe` must be null or a live handle.
size_t mabi_universe_len(const struct MabiUniverse *universe);

// # Safety
// `universe` must be null or a handle not yet freed.
void mabi_universe_free(struct MabiUniverse *universe);

// Partition geometry with cell side `cell_side` and margin `margin` over
// the universe's bounding box.
//
// # Safety
// `universe` must be a live handle and `out` writable.
enum MabiStatus mabi_partition_spec_new(const struct MabiUniverse *universe,
                                        double cell_side,
                                        double margin,
                                        struct MabiPartitionSpec **out);

// # Safety
// `spec` must be null or a handle not yet freed.
void mabi_partition_spec_free(struct MabiPartitionSpec *spec);

// Exact probability that the radius-`r` ball around `unit` lies in one
// cluster.
//
// # Safety
// Handles must be live and `out` writable.
enum MabiStatus mabi_containment_probability(const struct MabiPartitionSpec *spec,
                                             const struct MabiUniverse *universe,
                                             size_t unit,
                                             double r,
                                             double *out);

// Exact probability that `unit` is exposed to `arm` when each cluster draws
// its arm from `probs[0..arms]`.
//
// # Safety
// Handles must be live, `probs` must hold `arms` doubles, `out` writable.
enum MabiStatus mabi_exposure_probability(const struct MabiPartitionSpec *spec,
                                          const struct MabiUniverse *universe,
                                          size_t unit,
                                          size_t arm,
                                          double r,
                                          const double *probs,
                                          size_t arms,
                                          double *out);

// HT-IX estimate of arm `arm`'s mean reward.
//
// `exposed[u]` is the arm unit `u` was exposed to, or one of
// `MABI_EXPOSED_NONE` / `MABI_EXPOSED_ALL`; `q` is row-major `units × arms`.
//
// # Safety
// `rewards` and `exposed` must hold `units` entries, `q` `units * arms`.
enum MabiStatus mabi_ht_ix_estimate(const double *rewards,
                                    const int64_t *exposed,
                                    const double *q,
                                    size_t units,
                                    size_t arms,
                                    size_t arm,
                                    double beta,
                                    double *out);

// EXP3 learner over `arms` arms with uniform initial weights.
//
// # Safety
// `out` must be writable.
enum MabiStatus mabi_exp3_new(size_t arms, double eta, double beta, struct MabiExp3 **out);

// Number of arms, or 0 for a null handle.
//
// # Safety
// `state` must be null or a live handle.
size_t mabi_exp3_arms(const struct MabiExp3 *state);

// Writes the current sampling distribution into `probs[0..arms]`.
//
// # Safety
// `state` must be live and `probs` hold `arms` writable doubles.
enum MabiStatus mabi_exp3_probs(const struct MabiExp3 *state, double *probs, size_t arms);

// Applies one exponential-weights step with reward estimates
// `estimates[0..arms]`.
//
// # Safety
// `state` must be live and `estimates` hold `arms` doubles.
enum MabiStatus mabi_exp3_update(struct MabiExp3 *state, const double *estimates, size_t arms);

// # Safety
// `state` must be null or a handle not yet freed.
void mabi_exp3_free(struct MabiExp3 *state);

// Share of units on each arm of the assignment `arms_of_units[0..units]`.
//
// # Safety
// `arms_of_units` must hold `units` entries and `shares` `arm_count`.
enum MabiStatus mabi_arm_shares(const size_t *arms_of_units,
                                size_t units,
                                size_t arm_count,
                                double *shares);

// Type-7 sample quantile of `values[0..len]` at level `q` in `[0, 1]`.
//
// # Safety
// `values` must hold `len` doubles and `out` be writable.
enum MabiStatus mabi_quantile(const double *values, size_t len, double q, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MABI_H */
