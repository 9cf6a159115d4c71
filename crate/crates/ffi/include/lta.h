#ifndef LTA_H
#define LTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum LtaStatus {
  LTA_STATUS_OK = 0,
  LTA_STATUS_NULL_POINTER = 1,
  LTA_STATUS_INVALID_UTF8 = 2,
  LTA_STATUS_PARSE = 3,
  LTA_STATUS_IO = 4,
  LTA_STATUS_INVALID_ARGUMENT = 5,
  LTA_STATUS_SHAPE_MISMATCH = 6,
  LTA_STATUS_INDEX_OUT_OF_RANGE = 7,
  LTA_STATUS_PANIC = 8,
} LtaStatus;

typedef enum LtaAxis {
  LTA_AXIS_VERB = 0,
  LTA_AXIS_NOUN = 1,
} LtaAxis;

typedef enum LtaIndicatorMode {
  LTA_INDICATOR_MODE_AS_WRITTEN = 0,
  LTA_INDICATOR_MODE_STANDARD_NPMI = 1,
} LtaIndicatorMode;

// Opaque handle to co-occurrence statistics.
typedef struct LtaStats LtaStats;

// Pattern generation settings. `seed_verb`/`seed_noun` are read only when
// `has_seed_action` is true.
typedef struct LtaPredictionConfig {
  size_t z;
  size_t k;
  uint64_t rng_seed;
  enum LtaIndicatorMode mode;
  bool has_seed_action;
  size_t seed_verb;
  size_t seed_noun;
} LtaPredictionConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *lta_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *lta_version(void);

// Parses statistics from a JSON document.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable pointer. The
// handle written to `out` must be released with [`lta_stats_free`].
enum LtaStatus lta_stats_from_json(const char *json, struct LtaStats **out);

// Loads statistics from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer. The
// handle written to `out` must be released with [`lta_stats_free`].
enum LtaStatus lta_stats_load(const char *path, struct LtaStats **out);

// # Safety
// `stats` must be null or a handle from this library not yet freed.
void lta_stats_free(struct LtaStats *stats);

// # Safety
// `stats` must be a live handle; `out_verbs` and `out_nouns` writable.
enum LtaStatus lta_stats_classes(const struct LtaStats *stats,
                                 size_t *out_verbs,
                                 size_t *out_nouns);

// Co-occurrence score of `next` following `prev` on one axis.
//
// # Safety
// `stats` must be a live handle and `out` writable.
enum LtaStatus lta_stats_transition_score(const struct LtaStats *stats,
                                          enum LtaAxis axis,
                                          size_t prev,
                                          size_t next,
                                          enum LtaIndicatorMode mode,
                                          double *out);

// `p(verb | noun)`.
//
// # Safety
// `stats` must be a live handle and `out` writable.
enum LtaStatus lta_stats_verb_given_noun(const struct LtaStats *stats,
                                         size_t verb,
                                         size_t noun,
                                         double *out);

// Refines one step's noun distribution given the previous noun.
// `out_fallback` may be null.
//
// # Safety
// `probs` and `out_probs` must hold `len` doubles; `len` must equal the
// noun class count of `stats`.
enum LtaStatus lta_refine_noun_step(const struct LtaStats *stats,
                                    const double *probs,
                                    size_t len,
                                    size_t prev_noun,
                                    enum LtaIndicatorMode mode,
                                    double *out_probs,
                                    bool *out_fallback);

// Refines one step's verb distribution given the previous verb and the
// noun chosen for this step. `out_fallback` may be null.
//
// # Safety
// `probs` and `out_probs` must hold `len` doubles; `len` must equal the
// verb class count of `stats`.
enum LtaStatus lta_refine_verb_step(const struct LtaStats *stats,
                                    const double *probs,
                                    size_t len,
                                    size_t prev_verb,
                                    size_t selected_noun,
                                    enum LtaIndicatorMode mode,
                                    double *out_probs,
                                    bool *out_fallback);

// Row-wise softmax of a `rows x cols` matrix.
//
// # Safety
// `logits` and `out` must hold `rows * cols` doubles.
enum LtaStatus lta_softmax_rows(const double *logits, size_t rows, size_t cols, double *out);

// `alpha * a + beta * b` for both axes' `z x classes` logits.
//
// # Safety
// Verb buffers must hold `z * c_verb` doubles and noun buffers
// `z * c_noun` doubles.
enum LtaStatus lta_combine_logits(const double *a_verb,
                                  const double *a_noun,
                                  const double *b_verb,
                                  const double *b_noun,
                                  size_t z,
                                  size_t c_verb,
                                  size_t c_noun,
                                  double alpha,
                                  double beta,
                                  double *out_verb,
                                  double *out_noun);

// Generates `k` patterns of `z` actions from per-step distributions.
// `out_actions` receives `k * z` interleaved `(verb, noun)` pairs, pattern
// by pattern. `stats` may be null only when `k` is 1.
//
// # Safety
// `verb_probs` must hold `z * c_verb` doubles, `noun_probs` `z * c_noun`
// doubles and `out_actions` `2 * k * z` values.
enum LtaStatus lta_generate_patterns(const struct LtaStats *stats,
                                     const double *verb_probs,
                                     const double *noun_probs,
                                     size_t c_verb,
                                     size_t c_noun,
                                     struct LtaPredictionConfig config,
                                     size_t *out_actions);

// Edit distance between two label sequences.
//
// # Safety
// `a` must hold `len_a` values, `b` `len_b` values, and `out` be writable.
enum LtaStatus lta_edit_distance(const size_t *a,
                                 size_t len_a,
                                 const size_t *b,
                                 size_t len_b,
                                 bool allow_transposition,
                                 size_t *out);

// Smooths `z x classes` one-hot rows toward the sequence's mean label.
//
// # Safety
// `one_hot` and `out` must hold `z * classes` doubles.
enum LtaStatus lta_smooth_labels(const double *one_hot, size_t z, size_t classes, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LTA_H */
