#ifndef CTXLENS_H
#define CTXLENS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CtxlensStatus {
  CTXLENS_STATUS_OK = 0,
  CTXLENS_STATUS_NULL_POINTER = 1,
  CTXLENS_STATUS_INVALID_ARGUMENT = 2,
  CTXLENS_STATUS_IO = 3,
  CTXLENS_STATUS_PARSE = 4,
  CTXLENS_STATUS_SHAPE = 5,
  CTXLENS_STATUS_CONFIG = 6,
  CTXLENS_STATUS_NUMERIC = 7,
  CTXLENS_STATUS_UNKNOWN_ID = 8,
  CTXLENS_STATUS_BUFFER_TOO_SMALL = 9,
  CTXLENS_STATUS_INTERNAL = 10,
} CtxlensStatus;

// A CLEM embedding corpus.
typedef struct CtxlensCorpus CtxlensCorpus;

// A lens (mean pooling or trained parameters).
typedef struct CtxlensLens CtxlensLens;

// Mined sentence pairs.
typedef struct CtxlensMining CtxlensMining;

// Id-tagged sentence vectors.
typedef struct CtxlensVectors CtxlensVectors;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until
// the next failing call on the same thread.
const char *ctxlens_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ctxlens_version(void);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CtxlensStatus ctxlens_corpus_open(const char *path, struct CtxlensCorpus **out);

// # Safety
// `corpus` must be NULL or a live handle.
size_t ctxlens_corpus_len(const struct CtxlensCorpus *corpus);

// Embedding dimension K, or 0 for NULL.
//
// # Safety
// `corpus` must be NULL or a live handle.
size_t ctxlens_corpus_dim(const struct CtxlensCorpus *corpus);

// # Safety
// `corpus` must be NULL or a handle not yet freed.
void ctxlens_corpus_free(struct CtxlensCorpus *corpus);

// Loads a lens checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CtxlensStatus ctxlens_lens_load(const char *path, struct CtxlensLens **out);

// Mean pooling over `dim`-dimensional embeddings.
//
// # Safety
// `out` must be writable.
enum CtxlensStatus ctxlens_lens_meanpool(size_t dim, struct CtxlensLens **out);

// # Safety
// `lens` must be NULL or a live handle.
size_t ctxlens_lens_output_dim(const struct CtxlensLens *lens);

// # Safety
// `lens` must be NULL or a handle not yet freed.
void ctxlens_lens_free(struct CtxlensLens *lens);

// Encodes every record of `corpus`. `threads` of 0 or 1 runs on the
// calling thread.
//
// # Safety
// Handles must be live and `out` writable.
enum CtxlensStatus ctxlens_encode(const struct CtxlensCorpus *corpus,
                                  const struct CtxlensLens *lens,
                                  size_t threads,
                                  struct CtxlensVectors **out);

// # Safety
// `path` must be a NUL-terminated string and `out` writable.
enum CtxlensStatus ctxlens_vectors_open(const char *path, struct CtxlensVectors **out);

// # Safety
// `vectors` must be a live handle and `path` a NUL-terminated string.
enum CtxlensStatus ctxlens_vectors_save(const struct CtxlensVectors *vectors, const char *path);

// # Safety
// `vectors` must be NULL or a live handle.
size_t ctxlens_vectors_len(const struct CtxlensVectors *vectors);

// # Safety
// `vectors` must be NULL or a live handle.
size_t ctxlens_vectors_dim(const struct CtxlensVectors *vectors);

// Copies row `index` into `buf`, which must hold `dim` floats. Writes the
// id to `id` when it is non-NULL.
//
// # Safety
// `vectors` must be live; `buf` must point to `buf_len` writable floats.
enum CtxlensStatus ctxlens_vectors_row(const struct CtxlensVectors *vectors,
                                       size_t index,
                                       uint64_t *id,
                                       float *buf,
                                       size_t buf_len);

// # Safety
// `vectors` must be NULL or a handle not yet freed.
void ctxlens_vectors_free(struct CtxlensVectors *vectors);

// Fraction of gold pairs whose source does not retrieve its target as the
// cosine nearest neighbour. Gold pairs are `(src_ids[i], tgt_ids[i])`.
//
// # Safety
// Handles must be live; id arrays must hold `n` values; `out` writable.
enum CtxlensStatus ctxlens_match_error(const struct CtxlensVectors *src,
                                       const struct CtxlensVectors *tgt,
                                       const uint64_t *src_ids,
                                       const uint64_t *tgt_ids,
                                       size_t n,
                                       size_t threads,
                                       double *out);

// Mines one-to-one pairs whose ratio-margin score over `k` neighbours is
// at least `threshold`.
//
// # Safety
// Handles must be live and `out` writable.
enum CtxlensStatus ctxlens_mine(const struct CtxlensVectors *src,
                                const struct CtxlensVectors *tgt,
                                size_t k,
                                double threshold,
                                size_t threads,
                                struct CtxlensMining **out);

// # Safety
// `mining` must be NULL or a live handle.
size_t ctxlens_mining_len(const struct CtxlensMining *mining);

// Reads candidate `index` (candidates are sorted by descending score).
//
// # Safety
// `mining` must be live; output pointers must be writable.
enum CtxlensStatus ctxlens_mining_get(const struct CtxlensMining *mining,
                                      size_t index,
                                      uint64_t *src_id,
                                      uint64_t *tgt_id,
                                      float *score);

// # Safety
// `mining` must be NULL or a handle not yet freed.
void ctxlens_mining_free(struct CtxlensMining *mining);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTXLENS_H */
