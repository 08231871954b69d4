#ifndef DIM_FFI_H
#define DIM_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DimStatus {
  DIM_STATUS_OK = 0,
  DIM_STATUS_NULL_POINTER = 1,
  DIM_STATUS_INVALID_ARGUMENT = 2,
  DIM_STATUS_SHAPE = 3,
  DIM_STATUS_IO = 4,
  DIM_STATUS_FORMAT = 5,
  DIM_STATUS_CONFIG = 6,
  DIM_STATUS_MISSING_PREREQUISITE = 7,
  DIM_STATUS_INTERNAL = 8,
  DIM_STATUS_PANIC = 9,
} DimStatus;

// A fine-tuned generator checkpoint.
typedef struct DimGenerator DimGenerator;

// Row-major `rows × cols` float32 matrix.
typedef struct DimTensor DimTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length plus one, or 0 when
// the last call succeeded.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
uintptr_t dim_last_error(char *buf, uintptr_t cap);

// Copies `rows * cols` floats from `data` into a new tensor.
//
// # Safety
// `data` must be valid for `rows * cols` reads; `out` must be writable.
enum DimStatus dim_tensor_new(uintptr_t rows,
                              uintptr_t cols,
                              const float *data,
                              struct DimTensor **out);

// Loads a rank-2 float32 DIMT file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DimStatus dim_tensor_load(const char *path, struct DimTensor **out);

// # Safety
// `t` must be a live tensor handle; `path` a NUL-terminated string.
enum DimStatus dim_tensor_save(const struct DimTensor *t, const char *path);

// 0 for a null handle.
//
// # Safety
// `t` must be null or a live tensor handle.
uintptr_t dim_tensor_rows(const struct DimTensor *t);

// 0 for a null handle.
//
// # Safety
// `t` must be null or a live tensor handle.
uintptr_t dim_tensor_cols(const struct DimTensor *t);

// Copies the row-major contents into `out`; `len` must equal rows * cols.
//
// # Safety
// `t` must be a live tensor handle; `out` valid for `len` writes.
enum DimStatus dim_tensor_read(const struct DimTensor *t, float *out, uintptr_t len);

// # Safety
// `t` must be null or a handle not yet freed.
void dim_tensor_free(struct DimTensor *t);

// Fréchet distance between Gaussian fits of the rows of `a` and `b`.
//
// # Safety
// `a`, `b` must be live tensor handles; `out` writable.
enum DimStatus dim_frechet_distance(const struct DimTensor *a,
                                    const struct DimTensor *b,
                                    double *out);

// Mean squared error over all entries of two equally shaped tensors.
//
// # Safety
// `a`, `b` must be live tensor handles; `out` writable.
enum DimStatus dim_mse(const struct DimTensor *a, const struct DimTensor *b, double *out);

// Column-wise Pearson correlation, averaged over columns.
//
// # Safety
// `a`, `b` must be live tensor handles; `out` writable.
enum DimStatus dim_pcc(const struct DimTensor *a, const struct DimTensor *b, double *out);

// Loads a fine-tuned checkpoint directory.
//
// # Safety
// `dir` must be a NUL-terminated string; `out` writable.
enum DimStatus dim_generator_load(const char *dir, struct DimGenerator **out);

// Listener motion (`T × 56`) for a speaker clip (`T × 56`) and its audio
// features (`T_a × D_a`).
//
// # Safety
// All handles must be live; `out` writable.
enum DimStatus dim_generator_listen(const struct DimGenerator *g,
                                    const struct DimTensor *speaker,
                                    const struct DimTensor *audio,
                                    struct DimTensor **out);

// # Safety
// `g` must be null or a handle not yet freed.
void dim_generator_free(struct DimGenerator *g);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIM_FFI_H */
