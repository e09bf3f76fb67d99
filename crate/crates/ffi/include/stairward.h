#ifndef STAIRWARD_H
#define STAIRWARD_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call.
 */
typedef enum SwStatus {
  SW_STATUS_OK = 0,
  /**
   * A required pointer was NULL.
   */
  SW_STATUS_NULL_ARGUMENT = 1,
  /**
   * A value broke a precondition (bad count, box length, prompt, ...).
   */
  SW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Input data could not be used (statistics undefined, decode failure, ...).
   */
  SW_STATUS_DATA_ERROR = 3,
  SW_STATUS_CONFIG_ERROR = 4,
  /**
   * The scorer failed or returned a non-finite score.
   */
  SW_STATUS_BACKEND_ERROR = 5,
  /**
   * The output buffer is too small; the required length was written.
   */
  SW_STATUS_BUFFER_TOO_SMALL = 6,
  SW_STATUS_PANIC = 7,
} SwStatus;

typedef enum SwAblationMode {
  SW_ABLATION_MODE_NONE = 0,
  SW_ABLATION_MODE_WORD = 1,
  SW_ABLATION_MODE_IMAGE = 2,
  SW_ABLATION_MODE_ALL = 3,
} SwAblationMode;

/**
 * A prompt split into morphemes.
 */
typedef struct SwDecomposition SwDecomposition;

/**
 * 8-bit RGB image.
 */
typedef struct SwRaster SwRaster;

/**
 * Segmentation rules.
 */
typedef struct SwRules SwRules;

/**
 * An alignment scorer.
 */
typedef struct SwScorer SwScorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *sw_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *sw_version(void);

/**
 * Stair box lengths for `count` morphemes. Writes the count to `out_len`;
 * fails with `SW_STATUS_BUFFER_TOO_SMALL` when `capacity` is short.
 */
enum SwStatus sw_stair_lengths(int64_t count, double *out, size_t capacity, size_t *out_len);

/**
 * Morpheme weights for `count` morphemes; buffer rules as for
 * [`sw_stair_lengths`].
 */
enum SwStatus sw_morpheme_weights(int64_t count, double *out, size_t capacity, size_t *out_len);

/**
 * Spearman rank correlation of `n` pairs.
 */
enum SwStatus sw_srocc(const double *x, const double *y, size_t n, double *out);

/**
 * Kendall tau-b of `n` pairs.
 */
enum SwStatus sw_krocc(const double *x, const double *y, size_t n, double *out);

/**
 * Pearson correlation of `n` pairs.
 */
enum SwStatus sw_plcc(const double *x, const double *y, size_t n, double *out);

/**
 * Fits the five-parameter logistic map from `x` to `y`. `out_params`
 * receives 5 values; `out_sse` and `out_converged` may be NULL.
 */
enum SwStatus sw_fit_logistic(const double *x, const double *y, size_t n, double *out_params, double *out_sse, bool *out_converged);

/**
 * Evaluates the logistic map with 5 `params` at `x`.
 */
enum SwStatus sw_logistic_eval(const double *params, double x, double *out);

/**
 * Built-in segmentation rules.
 */
enum SwStatus sw_rules_default(struct SwRules **out);

/**
 * Rules parsed from the text of a rules file.
 */
enum SwStatus sw_rules_parse(const char *source, struct SwRules **out);

void sw_rules_free(struct SwRules *rules);

/**
 * Splits `prompt` into morphemes.
 */
enum SwStatus sw_split_prompt(const struct SwRules *rules, const char *prompt, struct SwDecomposition **out);

/**
 * Number of morphemes, 0 for NULL.
 */
size_t sw_decomposition_count(const struct SwDecomposition *d);

/**
 * Morpheme `index`, or NULL when out of range. Owned by the decomposition.
 */
const char *sw_decomposition_morpheme(const struct SwDecomposition *d, size_t index);

void sw_decomposition_free(struct SwDecomposition *d);

/**
 * Copies `len` bytes of row-major RGB into a new raster.
 */
enum SwStatus sw_raster_new(uint32_t width, uint32_t height, const uint8_t *rgb, size_t len, struct SwRaster **out);

/**
 * Width in pixels, 0 for NULL.
 */
uint32_t sw_raster_width(const struct SwRaster *r);

/**
 * Height in pixels, 0 for NULL.
 */
uint32_t sw_raster_height(const struct SwRaster *r);

/**
 * Pixel bytes owned by the raster; `out_len` (may be NULL) receives the
 * byte count.
 */
const uint8_t *sw_raster_pixels(const struct SwRaster *r, size_t *out_len);

/**
 * Centered crop with side ratio `length` in (0, 1].
 */
enum SwStatus sw_raster_crop_center(const struct SwRaster *r, double length, struct SwRaster **out);

void sw_raster_free(struct SwRaster *r);

/**
 * Scorer returning `value` for every pair.
 */
enum SwStatus sw_scorer_constant(double value, struct SwScorer **out);

/**
 * Caption-overlap scorer over `n` (image id, caption) pairs.
 */
enum SwStatus sw_scorer_lexical(const char *const *image_ids, const char *const *captions, size_t n, struct SwScorer **out);

/**
 * Scorer from a `--scorer` style spec: `constant:<c>` or the path of a
 * scorer TOML file.
 */
enum SwStatus sw_scorer_from_spec(const char *spec, struct SwScorer **out);

/**
 * Releases a scorer; external scorer processes are shut down.
 */
void sw_scorer_free(struct SwScorer *s);

/**
 * StairReward of (`prompt`, `image`). `image_id` may be NULL unless the
 * scorer needs it (the lexical scorer does).
 */
enum SwStatus sw_stair_reward(const struct SwScorer *scorer, const struct SwRules *rules, const char *prompt, const struct SwRaster *image, const char *image_id, enum SwAblationMode mode, double *out_score);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STAIRWARD_H */
