#ifndef HAM_H
#define HAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HamStatus {
  HAM_STATUS_OK = 0,
  HAM_STATUS_NULL_POINTER = 1,
  HAM_STATUS_INVALID_ARGUMENT = 2,
  HAM_STATUS_IO = 3,
  HAM_STATUS_PARSE = 4,
  HAM_STATUS_CHECKPOINT = 5,
  HAM_STATUS_SHAPE = 6,
  HAM_STATUS_OUT_OF_RANGE = 7,
  HAM_STATUS_PANIC = 8,
} HamStatus;

/*
 A preprocessed dataset with per-user item sequences.
 */
typedef struct HamDataset HamDataset;

/*
 A trained model: parameters plus the hyperparameters needed to score.
 */
typedef struct HamModel HamModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Description of the last failure on this thread, or an empty string.
 The pointer stays valid until the next call into this library on the
 same thread.
 */
const char *ham_last_error_message(void);

/*
 Static name of a status code, for logging.
 */
const char *ham_status_name(enum HamStatus status);

/*
 Loads a checkpoint written by `ham train`. On success `*out` owns a new
 handle; on failure it is set to null.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HamStatus ham_model_load(const char *path, struct HamModel **out);

/*
 # Safety
 `model` must come from [`ham_model_load`] and not be freed twice. Null
 is ignored.
 */
void ham_model_free(struct HamModel *model);

/*
 # Safety
 `model` must be a live handle or null (which yields 0).
 */
size_t ham_model_num_users(const struct HamModel *model);

/*
 # Safety
 `model` must be a live handle or null (which yields 0).
 */
size_t ham_model_num_items(const struct HamModel *model);

/*
 # Safety
 `model` must be a live handle or null (which yields 0).
 */
size_t ham_model_dim(const struct HamModel *model);

/*
 Length of the context window the model reads; longer contexts are
 truncated to their most recent items, shorter ones are padded.

 # Safety
 `model` must be a live handle or null (which yields 0).
 */
size_t ham_model_context_length(const struct HamModel *model);

/*
 Scores every item for `user` given `context` (oldest first). Writes
 `ham_model_num_items` values to `out_scores`, whose capacity is
 `out_len`.

 # Safety
 `model` must be a live handle; `context` must point to `context_len`
 ids; `out_scores` must point to `out_len` writable doubles.
 */
enum HamStatus ham_model_score_all(const struct HamModel *model,
                                   size_t user,
                                   const size_t *context,
                                   size_t context_len,
                                   double *out_scores,
                                   size_t out_len);

/*
 Writes the `k` highest-scoring item ids (best first, ties by lower id)
 to `out_items`, skipping the `exclude_len` ids in `exclude`.

 # Safety
 `model` must be a live handle; `context` and `exclude` must point to
 the given number of ids (or be null with length 0); `out_items` must
 point to `k` writable ids.
 */
enum HamStatus ham_model_top_k(const struct HamModel *model,
                               size_t user,
                               const size_t *context,
                               size_t context_len,
                               const size_t *exclude,
                               size_t exclude_len,
                               size_t k,
                               size_t *out_items);

/*
 Loads a dataset file written by `ham preprocess`.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HamStatus ham_dataset_load(const char *path, struct HamDataset **out);

/*
 # Safety
 `dataset` must come from [`ham_dataset_load`] and not be freed twice.
 Null is ignored.
 */
void ham_dataset_free(struct HamDataset *dataset);

/*
 # Safety
 `dataset` must be a live handle or null (which yields 0).
 */
size_t ham_dataset_num_users(const struct HamDataset *dataset);

/*
 # Safety
 `dataset` must be a live handle or null (which yields 0).
 */
size_t ham_dataset_num_items(const struct HamDataset *dataset);

/*
 Borrows a user's chronological item sequence. The pointer stays valid
 while the dataset handle lives.

 # Safety
 `dataset` must be a live handle; `out_items` and `out_len` must be
 writable.
 */
enum HamStatus ham_dataset_sequence(const struct HamDataset *dataset,
                                    size_t user,
                                    const size_t **out_items,
                                    size_t *out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAM_H */
