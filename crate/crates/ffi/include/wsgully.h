/* C interface to the wsgully weak-supervision pipeline. */

#ifndef WSGULLY_H
#define WSGULLY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum wsg_status {
  WSG_OK = 0,
  WSG_NULL_POINTER = 1,
  WSG_INVALID_UTF8 = 2,
  WSG_IO_ERROR = 3,
  WSG_PARSE_ERROR = 4,
  WSG_INVALID_ARGUMENT = 5,
  WSG_MISALIGNED = 6,
} wsg_status;

/**
 * Opaque weak-vote matrix handle.
 */
typedef struct wsg_label_matrix wsg_label_matrix;

/**
 * Opaque fitted label-model handle.
 */
typedef struct wsg_label_model wsg_label_model;

/**
 * The five confusion metrics; an undefined (0/0) metric has its `*_defined`
 * flag cleared and its value set to NaN.
 */
typedef struct wsg_metrics {
  double npv;
  double recall;
  double precision;
  double f1;
  double accuracy;
  bool npv_defined;
  bool recall_defined;
  bool precision_defined;
  bool f1_defined;
  bool accuracy_defined;
} wsg_metrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *wsg_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *wsg_version(void);

/**
 * Reads a label-matrix CSV (`location_id,<lf...>` header; cells 1/0/-1).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum wsg_status wsg_label_matrix_read(const char *path, struct wsg_label_matrix **out);

/**
 * Frees a matrix handle; a null pointer is a no-op.
 *
 * # Safety
 * `matrix` must come from this library and not already be freed.
 */
void wsg_label_matrix_free(struct wsg_label_matrix *matrix);

/**
 * Number of locations (rows); 0 for a null handle.
 *
 * # Safety
 * `matrix` must be a live handle or null.
 */
uint32_t wsg_label_matrix_rows(const struct wsg_label_matrix *matrix);

/**
 * Number of labeling functions (columns); 0 for a null handle.
 *
 * # Safety
 * `matrix` must be a live handle or null.
 */
uint32_t wsg_label_matrix_cols(const struct wsg_label_matrix *matrix);

/**
 * Per-row majority vote with ties and all-abstain rows going positive;
 * writes one 0/1 label per row into `labels_out`.
 *
 * # Safety
 * `labels_out` must point to at least `wsg_label_matrix_rows` bytes.
 */
enum wsg_status wsg_majority_vote(const struct wsg_label_matrix *matrix, int8_t *labels_out);

/**
 * Fits the generative label model. `corr_pairs` is a flattened array of
 * `n_pairs` (j, d) column pairs with `j < d`, or null when `n_pairs` is 0.
 *
 * # Safety
 * Pointers must be valid; `corr_pairs` must hold `2 * n_pairs` entries.
 */
enum wsg_status wsg_label_model_fit(const struct wsg_label_matrix *matrix,
                                    uint32_t epochs,
                                    double learning_rate,
                                    const uint32_t *corr_pairs,
                                    size_t n_pairs,
                                    struct wsg_label_model **out);

/**
 * Frees a model handle; a null pointer is a no-op.
 *
 * # Safety
 * `model` must come from this library and not already be freed.
 */
void wsg_label_model_free(struct wsg_label_model *model);

/**
 * Number of labeling functions the model was fit on; 0 for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
uint32_t wsg_label_model_n_lfs(const struct wsg_label_model *model);

/**
 * Final negative log marginal likelihood of the fit; NaN for null.
 *
 * # Safety
 * `model` must be a live handle or null.
 */
double wsg_label_model_final_nll(const struct wsg_label_model *model);

/**
 * Saves the model checkpoint JSON.
 *
 * # Safety
 * `model` and `path` must be valid.
 */
enum wsg_status wsg_label_model_save(const struct wsg_label_model *model, const char *path);

/**
 * Loads a model checkpoint JSON.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
enum wsg_status wsg_label_model_load(const char *path, struct wsg_label_model **out);

/**
 * Posterior positive probability for one votes row of length `m`.
 *
 * # Safety
 * `votes` must hold `m` entries; `p_pos_out` must be valid.
 */
enum wsg_status wsg_label_model_predict(const struct wsg_label_model *model,
                                        const int8_t *votes,
                                        size_t m,
                                        double *p_pos_out);

/**
 * Posterior positive probabilities for every matrix row, written in row
 * order to `p_pos_out`.
 *
 * # Safety
 * `p_pos_out` must point to at least `wsg_label_matrix_rows` doubles.
 */
enum wsg_status wsg_label_model_predict_matrix(const struct wsg_label_model *model,
                                               const struct wsg_label_matrix *matrix,
                                               double *p_pos_out);

/**
 * Computes metrics from raw confusion counts.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum wsg_status wsg_compute_metrics(uint64_t true_positive,
                                    uint64_t false_positive,
                                    uint64_t true_negative,
                                    uint64_t false_negative,
                                    struct wsg_metrics *out);

/**
 * Patch edge (pixels) covering the same ground extent at `gsd_cm` as
 * `ref_patch_px` does at `ref_gsd_cm`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum wsg_status wsg_patch_size_for_gsd(double gsd_cm,
                                       double ref_gsd_cm,
                                       uint32_t ref_patch_px,
                                       uint32_t *out);

/**
 * Parses free text for the first standalone yes/no token: returns 1 for
 * yes, 0 for no, -1 when neither appears (or the pointer is null/invalid).
 *
 * # Safety
 * `text` must be NUL-terminated when non-null.
 */
int8_t wsg_parse_binary_answer(const char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WSGULLY_H */
