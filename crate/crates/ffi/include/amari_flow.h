#ifndef AMARI_FLOW_H
#define AMARI_FLOW_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AfStatus {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_POINTER = 1,
  AF_STATUS_INVALID_UTF8 = 2,
  AF_STATUS_INVALID_PARAMETER = 3,
  AF_STATUS_CONFIG = 4,
  AF_STATUS_NOT_NONNEGATIVE = 5,
  AF_STATUS_ATOMIC_SPECTRUM = 6,
  AF_STATUS_INDEX_OUT_OF_RANGE = 7,
  AF_STATUS_BUFFER_TOO_SMALL = 8,
  AF_STATUS_IO = 9,
  AF_STATUS_NUMERICAL = 10,
  AF_STATUS_INTERNAL = 99,
} AfStatus;

typedef enum AfVerdict {
  AF_VERDICT_NONNEGATIVE_DEFINITE = 0,
  AF_VERDICT_INDEFINITE = 1,
  AF_VERDICT_NUMERIC_ONLY = 2,
} AfVerdict;

/**
 * Opaque kernel handle.
 */
typedef struct AfKernel AfKernel;

/**
 * Opaque handle to the retained spectrum of a discretized operator.
 */
typedef struct AfSpectrum AfSpectrum;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *af_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *af_version(void);

/**
 * Kernel from the `[kernel]` section of a config text.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` must be writable.
 */
enum AfStatus af_kernel_from_config(const char *config, struct AfKernel **out);

/**
 * `scale · exp(-x² / (2 width²))`
 *
 * # Safety
 * `out` must be writable.
 */
enum AfStatus af_kernel_gaussian(double width, double scale, struct AfKernel **out);

/**
 * # Safety
 * `kernel` must come from this library; `out` must be writable.
 */
enum AfStatus af_kernel_eval(const struct AfKernel *kernel, double x, double *out);

/**
 * Analytic classification. `witness_frequency` receives a frequency with a
 * negative density for indefinite kernels, NaN otherwise; it may be null.
 *
 * # Safety
 * `kernel` must come from this library; `verdict` must be writable.
 */
enum AfStatus af_kernel_classify(const struct AfKernel *kernel,
                                 enum AfVerdict *verdict,
                                 double *witness_frequency);

/**
 * # Safety
 * `kernel` must come from this library or be null; it must not be used afterwards.
 */
void af_kernel_free(struct AfKernel *kernel);

/**
 * Discretizes `kernel` on the midpoint grid of `[a, b]` with `n` nodes and
 * keeps the eigenpairs above the default relative tolerance.
 *
 * # Safety
 * `kernel` must come from this library; `out` must be writable.
 */
enum AfStatus af_spectrum_new(const struct AfKernel *kernel,
                              double a,
                              double b,
                              size_t n,
                              bool periodic,
                              struct AfSpectrum **out);

/**
 * # Safety
 * `spectrum` must come from this library; `rank` must be writable.
 */
enum AfStatus af_spectrum_rank(const struct AfSpectrum *spectrum, size_t *rank);

/**
 * Copies the retained eigenvalues, descending, into `buf[0..rank]`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum AfStatus af_spectrum_lambdas(const struct AfSpectrum *spectrum, double *buf, size_t len);

/**
 * Copies eigenfield `index` (0-based) sampled at the `n` grid nodes.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum AfStatus af_spectrum_eigenfield(const struct AfSpectrum *spectrum,
                                     size_t index,
                                     double *buf,
                                     size_t len);

/**
 * # Safety
 * `spectrum` must come from this library or be null; it must not be used afterwards.
 */
void af_spectrum_free(struct AfSpectrum *spectrum);

/**
 * Runs a CLI subcommand with a config text (null for defaults) and writes
 * its artifacts to `out_dir`. `exit_code` receives the CLI exit code
 * (0 success, 1 validation failure, 2 numerical failure).
 *
 * # Safety
 * String arguments must be NUL-terminated; `exit_code` must be writable.
 */
enum AfStatus af_run(const char *subcommand,
                     const char *config,
                     const char *out_dir,
                     int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMARI_FLOW_H */
