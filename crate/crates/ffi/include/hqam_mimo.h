#ifndef HQAM_MIMO_H
#define HQAM_MIMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum {
  HQAM_STATUS_OK = 0,
  HQAM_STATUS_NULL_POINTER = 1,
  HQAM_STATUS_INVALID_ARGUMENT = 2,
  HQAM_STATUS_CONFIG = 3,
  HQAM_STATUS_SIMULATION = 4,
  HQAM_STATUS_BUFFER_TOO_SMALL = 5,
  HQAM_STATUS_PANIC = 6,
} HqamStatus;

/**
 * A hierarchical constellation.
 */
typedef struct HqamConstellation HqamConstellation;

/**
 * An expanded WiMAX LDPC code.
 */
typedef struct HqamLdpcCode HqamLdpcCode;

/**
 * Rows produced by a sweep.
 */
typedef struct HqamResults HqamResults;

/**
 * A validated simulation configuration.
 */
typedef struct HqamSimConfig HqamSimConfig;

/**
 * Numeric fields of one result row. Missing optional values are NaN.
 */
typedef struct {
  double ebn0_db;
  uint64_t frames;
  uint64_t frame_errors;
  double fer;
  double fer_ci_lo;
  double fer_ci_hi;
  uint64_t bit_errors;
  uint64_t bits;
  double ber;
  double avg_iters;
  uint64_t metric_evals;
  double seconds;
  uint64_t seed;
} HqamResultRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *hqam_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string obtained from this library, not yet freed.
 */
void hqam_string_free(char *s);

/**
 * Builds a constellation with `layers` QPSK layers and `layers - 1`
 * distance ratios (base first).
 *
 * # Safety
 * `ratios` must point to `n_ratios` doubles; `out` must be writable.
 */
HqamStatus hqam_constellation_new(size_t layers,
                                  const double *ratios,
                                  size_t n_ratios,
                                  HqamConstellation **out);

/**
 * # Safety
 * `c` must be NULL or a live constellation handle.
 */
void hqam_constellation_free(HqamConstellation *c);

/**
 * Number of points, `4^layers`. Zero for a NULL handle.
 *
 * # Safety
 * `c` must be NULL or a live constellation handle.
 */
size_t hqam_constellation_size(const HqamConstellation *c);

/**
 * Writes the point with bit label `label` (MSB is the first base bit).
 *
 * # Safety
 * `c` must be a live handle; `re` and `im` must be writable.
 */
HqamStatus hqam_constellation_point(const HqamConstellation *c,
                                    size_t label,
                                    double *re,
                                    double *im);

/**
 * Writes the per-layer energies into `out` (length at least `layers`).
 *
 * # Safety
 * `c` must be a live handle; `out` must point to `len` writable doubles.
 */
HqamStatus hqam_constellation_layer_energy(const HqamConstellation *c, double *out, size_t len);

/**
 * Loads a WiMAX code. `rate` is one of "1/2", "2/3A", "3/4A", "5/6".
 *
 * # Safety
 * `rate` must be a NUL-terminated string; `out` must be writable.
 */
HqamStatus hqam_ldpc_new(const char *rate, size_t n, HqamLdpcCode **out);

/**
 * # Safety
 * `c` must be NULL or a live code handle.
 */
void hqam_ldpc_free(HqamLdpcCode *c);

/**
 * Codeword length, zero for a NULL handle.
 *
 * # Safety
 * `c` must be NULL or a live code handle.
 */
size_t hqam_ldpc_n(const HqamLdpcCode *c);

/**
 * Number of information bits, zero for a NULL handle.
 *
 * # Safety
 * `c` must be NULL or a live code handle.
 */
size_t hqam_ldpc_k(const HqamLdpcCode *c);

/**
 * Systematic encoding of `k` bits (0/1 bytes) into `n` bytes.
 *
 * # Safety
 * `info` must hold `info_len` bytes and `codeword` `codeword_len` bytes.
 */
HqamStatus hqam_ldpc_encode(const HqamLdpcCode *c,
                            const uint8_t *info,
                            size_t info_len,
                            uint8_t *codeword,
                            size_t codeword_len);

/**
 * Belief-propagation decoding of `n` channel LLRs (positive favours 0).
 * `min_sum_scale <= 0` selects sum-product, otherwise normalised min-sum.
 * Writes `k` information bits; `iterations` and `converged` may be NULL.
 *
 * # Safety
 * Buffers must have the stated lengths; out pointers may be NULL.
 */
HqamStatus hqam_ldpc_decode(const HqamLdpcCode *c,
                            const double *llrs,
                            size_t llr_len,
                            size_t max_iterations,
                            double min_sum_scale,
                            uint8_t *info,
                            size_t info_len,
                            size_t *iterations,
                            bool *converged);

/**
 * Configuration of a named preset; `series` may be NULL for the first one.
 *
 * # Safety
 * `name` must be a NUL-terminated string, `series` NULL or one.
 */
HqamStatus hqam_config_from_preset(const char *name, const char *series, HqamSimConfig **out);

/**
 * Parses configuration text in the `key = value` file format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
HqamStatus hqam_config_parse(const char *text, HqamSimConfig **out);

/**
 * # Safety
 * `c` must be NULL or a live config handle.
 */
void hqam_config_free(HqamSimConfig *c);

/**
 * Renders the configuration in file form into a new string.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
HqamStatus hqam_config_to_text(const HqamSimConfig *c, char **out);

/**
 * Replaces the Eb/N0 grid (dB).
 *
 * # Safety
 * `c` must be a live handle; `ebn0_db` must hold `len` doubles.
 */
HqamStatus hqam_config_set_ebn0(HqamSimConfig *c, const double *ebn0_db, size_t len);

/**
 * # Safety
 * `c` must be a live handle.
 */
HqamStatus hqam_config_set_seed(HqamSimConfig *c, uint64_t seed);

/**
 * Worker threads (at least 1).
 *
 * # Safety
 * `c` must be a live handle.
 */
HqamStatus hqam_config_set_workers(HqamSimConfig *c, size_t workers);

/**
 * Frame budget per point; 0 restores the default.
 *
 * # Safety
 * `c` must be a live handle.
 */
HqamStatus hqam_config_set_max_frames(HqamSimConfig *c, uint64_t max_frames);

/**
 * Runs the configured sweep.
 *
 * # Safety
 * `c` must be a live handle; `out` must be writable.
 */
HqamStatus hqam_run(const HqamSimConfig *c, HqamResults **out);

/**
 * # Safety
 * `r` must be NULL or a live results handle.
 */
void hqam_results_free(HqamResults *r);

/**
 * Number of rows, zero for a NULL handle.
 *
 * # Safety
 * `r` must be NULL or a live results handle.
 */
size_t hqam_results_len(const HqamResults *r);

/**
 * Numeric fields of row `index`.
 *
 * # Safety
 * `r` must be a live handle; `row` must be writable.
 */
HqamStatus hqam_results_row(const HqamResults *r, size_t index, HqamResultRow *row);

/**
 * Layer name of row `index` ("base", "enh1", "overall", "single", ...)
 * as a new string.
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
HqamStatus hqam_results_layer(const HqamResults *r, size_t index, char **out);

/**
 * The whole table in the CLI's CSV format, as a new string.
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
HqamStatus hqam_results_csv(const HqamResults *r, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HQAM_MIMO_H */
