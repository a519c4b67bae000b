#ifndef VALTA_H
#define VALTA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum ValtaStatus {
  VALTA_STATUS_OK = 0,
  VALTA_STATUS_NULL_POINTER = 1,
  VALTA_STATUS_INVALID_UTF8 = 2,
  VALTA_STATUS_INVALID_ARGUMENT = 3,
  VALTA_STATUS_IO = 4,
  VALTA_STATUS_CORRUPT = 5,
  VALTA_STATUS_VERSION_MISMATCH = 6,
  VALTA_STATUS_EMPTY_INPUT = 7,
  VALTA_STATUS_PANIC = 8,
} ValtaStatus;

/**
 * A loaded model. Opaque to C.
 */
typedef struct ValtaModel ValtaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on this thread.
 */
const char *valta_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *valta_version(void);

/**
 * Loads a checkpoint file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ValtaStatus valta_model_load(const char *path, struct ValtaModel **out);

/**
 * Releases a handle from [`valta_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must come from [`valta_model_load`] and not be used afterwards.
 */
void valta_model_free(struct ValtaModel *model);

/**
 * Vocabulary size, aspect count and sub-aspects per aspect.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum ValtaStatus valta_model_dims(const struct ValtaModel *model,
                                  size_t *vocab_size,
                                  size_t *aspects,
                                  size_t *sub_aspects);

/**
 * Predicts the rating of `user_id` for `item_id` from the concatenated
 * text of each side's review history. Unknown ids contribute zero bias.
 * When `aspect_importance` is non-null it receives `aspects` weights.
 *
 * # Safety
 * String arguments must be NUL-terminated; `rating` must be writable;
 * `aspect_importance`, if non-null, must hold `aspects` doubles.
 */
enum ValtaStatus valta_predict_rating(const struct ValtaModel *model,
                                      const char *user_id,
                                      const char *item_id,
                                      const char *user_text,
                                      const char *item_text,
                                      double *rating,
                                      double *aspect_importance,
                                      size_t aspects);

/**
 * Noise-free aspect of one sentence.
 *
 * # Safety
 * `sentence` must be NUL-terminated; `aspect` must be writable.
 */
enum ValtaStatus valta_sentence_aspect(const struct ValtaModel *model,
                                       const char *sentence,
                                       size_t *aspect);

/**
 * Top `top` words of topic (`aspect`, `sub_aspect`), newline separated.
 * `*out` receives a string to release with [`valta_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum ValtaStatus valta_top_words(const struct ValtaModel *model,
                                 size_t aspect,
                                 size_t sub_aspect,
                                 size_t top,
                                 char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void valta_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALTA_H */
