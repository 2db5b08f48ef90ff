#ifndef CL4AC_H
#define CL4AC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call. The numeric values of `Internal`, `Input` and
 * `Numeric` match the command-line exit codes.
 */
typedef enum Cl4acStatus {
  CL4AC_STATUS_OK = 0,
  CL4AC_STATUS_INTERNAL = 1,
  CL4AC_STATUS_INPUT = 2,
  CL4AC_STATUS_NUMERIC = 3,
  CL4AC_STATUS_NULL_ARGUMENT = 10,
  CL4AC_STATUS_INVALID_UTF8 = 11,
  CL4AC_STATUS_PANIC = 12,
} Cl4acStatus;

/**
 * A loaded checkpoint: model weights, vocabulary and feature settings.
 */
typedef struct Cl4acModel Cl4acModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on this thread.
 */
const char *cl4ac_last_error_message(void);

/**
 * Loads a checkpoint file into `*out`. Release with [`cl4ac_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum Cl4acStatus cl4ac_model_load(const char *path, struct Cl4acModel **out);

/**
 * # Safety
 * `model` must come from [`cl4ac_model_load`] and not be used afterwards.
 * Null is ignored.
 */
void cl4ac_model_free(struct Cl4acModel *model);

/**
 * Vocabulary size including the four reserved tokens, or 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t cl4ac_model_vocab_size(const struct Cl4acModel *model);

/**
 * Greedy caption for mono samples in [-1, 1]. `max_len` 0 means 35.
 *
 * # Safety
 * `samples` must point to `len` floats; `out` must be a valid pointer.
 */
enum Cl4acStatus cl4ac_caption_samples(const struct Cl4acModel *model,
                                       const float *samples,
                                       size_t len,
                                       uint32_t sample_rate,
                                       size_t max_len,
                                       char **out);

/**
 * Greedy caption for a PCM WAV file. `max_len` 0 means 35.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum Cl4acStatus cl4ac_caption_wav(const struct Cl4acModel *model,
                                   const char *path,
                                   size_t max_len,
                                   char **out);

/**
 * Scores captions. `items_json` is an array of
 * `{"candidate": "...", "references": ["...", ...]}`; `*out` receives the
 * metric report as JSON (unavailable metrics are null).
 *
 * # Safety
 * `items_json` must be a NUL-terminated string; `out` must be a valid pointer.
 */
enum Cl4acStatus cl4ac_evaluate_json(const char *items_json, char **out);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards. Null is
 * ignored.
 */
void cl4ac_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CL4AC_H */
