/* SPDX-License-Identifier: Apache-2.0 */

#ifndef GAUGEBENCH_H
#define GAUGEBENCH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GbGreensKind {
  GB_GREENS_KIND_RETARDED = 0,
  GB_GREENS_KIND_ADVANCED = 1,
  GB_GREENS_KIND_LESSER = 2,
  GB_GREENS_KIND_TIME_ORDERED = 3,
} GbGreensKind;

typedef enum GbInit {
  GB_INIT_VACUUM = 0,
  GB_INIT_MIXED = 1,
  GB_INIT_BLOCK = 2,
  GB_INIT_RANDOM = 3,
  GB_INIT_PAIR = 4,
} GbInit;

typedef enum GbStatus {
  GB_STATUS_OK = 0,
  GB_STATUS_NULL_POINTER = 1,
  GB_STATUS_INVALID_ARGUMENT = 2,
  GB_STATUS_PARSE_ERROR = 3,
  GB_STATUS_CAPACITY_EXCEEDED = 4,
  GB_STATUS_NUMERICAL_FAILURE = 5,
  GB_STATUS_IO = 6,
  GB_STATUS_PANIC = 7,
} GbStatus;

typedef enum GbSymmetryClass {
  GB_SYMMETRY_CLASS_STRONG = 0,
  GB_SYMMETRY_CLASS_WEAK = 1,
  GB_SYMMETRY_CLASS_NONE = 2,
} GbSymmetryClass;

/**
 * Mean-field BCS trajectory.
 */
typedef struct GbBcsTrajectory GbBcsTrajectory;

/**
 * Parsed lattice model.
 */
typedef struct GbModel GbModel;

/**
 * Exact Lindblad trajectory.
 */
typedef struct GbTrajectory GbTrajectory;

/**
 * One row of an exact trajectory.
 */
typedef struct GbStepRecord {
  double t;
  double n;
  double on_direct;
  double on_vectorized;
  /**
   * NaN when the doubled space exceeds capacity.
   */
  double on_swap;
  double trace;
} GbStepRecord;

typedef struct GbBcsConfig {
  size_t grid;
  double cutoff;
  double mu;
  double coupling;
  double gamma;
  double dt;
  double t_final;
} GbBcsConfig;

/**
 * One row of a mean-field trajectory.
 */
typedef struct GbBcsRecord {
  double t;
  double delta_re;
  double delta_im;
  double n;
  double on;
} GbBcsRecord;

typedef struct GbWtSummary {
  size_t samples;
  double max_residual;
  double gauge_shift_max_delta;
  double transversality_max;
} GbWtSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gb_last_error_message(void);

/**
 * Version of the library as a static NUL-terminated string.
 */
const char *gb_version(void);

uint32_t gb_schema_version(void);

/**
 * Parses and validates a model from NUL-terminated text.
 *
 * # Safety
 * `text` must be a valid C string and `model` a writable pointer.
 */
enum GbStatus gb_model_parse(const char *text, struct GbModel **model);

/**
 * # Safety
 * `model` must come from [`gb_model_parse`] and not be used afterwards.
 */
void gb_model_free(struct GbModel *model);

/**
 * # Safety
 * `model` must be a live handle and `sites` writable.
 */
enum GbStatus gb_model_num_sites(const struct GbModel *model, size_t *sites);

/**
 * Symmetry class and the three commutator norms `‖[H,N]‖`, `max_k ‖[L_k,N]‖`,
 * `‖[𝒩,ℒ]‖`; `norms` may be NULL.
 *
 * # Safety
 * `model` must be a live handle, `class` writable, `norms` NULL or writable
 * for three doubles.
 */
enum GbStatus gb_model_classify(const struct GbModel *model,
                                enum GbSymmetryClass *class_,
                                double *norms);

/**
 * Exact evolution of `model` from the chosen initial state.
 *
 * # Safety
 * `model` must be a live handle and `traj` writable.
 */
enum GbStatus gb_simulate(const struct GbModel *model,
                          enum GbInit init,
                          uint64_t seed,
                          double t_final,
                          double dt,
                          struct GbTrajectory **traj);

/**
 * # Safety
 * `traj` must come from [`gb_simulate`] and not be used afterwards.
 */
void gb_trajectory_free(struct GbTrajectory *traj);

/**
 * Number of recorded rows, including `t = 0`.
 *
 * # Safety
 * `traj` must be a live handle and `len` writable.
 */
enum GbStatus gb_trajectory_len(const struct GbTrajectory *traj, size_t *len);

/**
 * # Safety
 * `traj` must be a live handle and `record` writable.
 */
enum GbStatus gb_trajectory_record(const struct GbTrajectory *traj,
                                   size_t index,
                                   struct GbStepRecord *record);

/**
 * Writes the trajectory table to `path`.
 *
 * # Safety
 * `traj` must be a live handle and `path` a valid C string.
 */
enum GbStatus gb_trajectory_write_csv(const struct GbTrajectory *traj, const char *path);

/**
 * Self-consistent mean-field run from the BCS ground state of `config`.
 *
 * # Safety
 * `config` must be readable and `traj` writable.
 */
enum GbStatus gb_bcs_run(const struct GbBcsConfig *config, struct GbBcsTrajectory **traj);

/**
 * # Safety
 * `traj` must come from [`gb_bcs_run`] and not be used afterwards.
 */
void gb_bcs_free(struct GbBcsTrajectory *traj);

/**
 * # Safety
 * `traj` must be a live handle and `len` writable.
 */
enum GbStatus gb_bcs_len(const struct GbBcsTrajectory *traj, size_t *len);

/**
 * # Safety
 * `traj` must be a live handle and `record` writable.
 */
enum GbStatus gb_bcs_record(const struct GbBcsTrajectory *traj,
                            size_t index,
                            struct GbBcsRecord *record);

/**
 * Fitted sound velocity over `qsteps` evenly spaced wavenumbers.
 *
 * # Safety
 * `slope` must be writable.
 */
enum GbStatus gb_sound_velocity(double delta,
                                size_t grid,
                                double cutoff,
                                double mu,
                                double qmin,
                                double qmax,
                                size_t qsteps,
                                double *slope);

/**
 * `3√3 γ n v_F² / (8Δ²)`.
 *
 * # Safety
 * `d` must be writable.
 */
enum GbStatus gb_diffusion_analytic(double gamma,
                                    double n,
                                    double v_fermi,
                                    double delta,
                                    double *d);

/**
 * 2×2 Nambu Green's function, row-major, as interleaved `re, im` pairs.
 *
 * # Safety
 * `values` must be writable for eight doubles.
 */
enum GbStatus gb_greens(double omega,
                        double eps,
                        double delta,
                        double gamma_n,
                        enum GbGreensKind kind,
                        double *values);

/**
 * Randomized vertex-identity and gauge-shift sweeps.
 *
 * # Safety
 * `summary` must be writable.
 */
enum GbStatus gb_wt_check(size_t samples, uint64_t seed, struct GbWtSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GAUGEBENCH_H */
