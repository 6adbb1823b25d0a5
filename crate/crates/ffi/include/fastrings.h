#ifndef FASTRINGS_H
#define FASTRINGS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FrStatus {
  FR_STATUS_OK = 0,
  FR_STATUS_NULL_POINTER = 1,
  FR_STATUS_INVALID_ARGUMENT = 2,
  FR_STATUS_INVALID_VALUE = 3,
  FR_STATUS_SHAPE_MISMATCH = 4,
  FR_STATUS_EXHAUSTED = 5,
  FR_STATUS_UNDERFLOW = 6,
  FR_STATUS_BUFFER_TOO_SMALL = 7,
  FR_STATUS_INTERNAL = 8,
} FrStatus;

typedef struct FrNormQueue FrNormQueue;

// An exponent schedule together with the projection it was built for.
typedef struct FrSchedule FrSchedule;

typedef struct FrTopKItem {
  double value;
  double log_value;
  size_t m_star;
  // -1 when not recovered.
  int64_t i;
  // -1 when not recovered.
  int64_t j;
  bool verified;
} FrTopKItem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Static description of a status code.
const char *fr_status_message(enum FrStatus status);

// Schedule for exponents up to `p_max` and projection order `r` (0 raw, 1, 2).
//
// # Safety
// `out` must be valid for a pointer write.
enum FrStatus fr_schedule_new(uint32_t p_max, uint32_t r, struct FrSchedule **out);

// # Safety
// `s` must come from [`fr_schedule_new`] and not be used afterwards. Null is ignored.
void fr_schedule_free(struct FrSchedule *s);

// Copies the exponents into `out` (capacity `cap`); `*out_len` gets their count.
//
// # Safety
// `s` must be a live schedule, `out` valid for `cap` writes, `out_len` for one.
enum FrStatus fr_schedule_exponents(const struct FrSchedule *s,
                                    uint32_t *out,
                                    size_t cap,
                                    size_t *out_len);

// Approximate max-convolution; writes `nx + ny - 1` values.
//
// # Safety
// `x`, `y` must hold `nx`, `ny` readable values, `out` `cap` writable ones.
enum FrStatus fr_max_convolution(const double *x,
                                 size_t nx,
                                 const double *y,
                                 size_t ny,
                                 const struct FrSchedule *s,
                                 double tau,
                                 double *out,
                                 size_t cap,
                                 size_t *out_len);

// Approximate all-pairs shortest path distances of a row-major `n x n`
// weight matrix (diagonal 0, `INFINITY` for absent edges) into `out`.
//
// # Safety
// `weights` and `out` must each hold `n * n` values.
enum FrStatus fr_apsp(const double *weights,
                      size_t n,
                      const struct FrSchedule *s,
                      double tau,
                      double *out);

// Approximate top `k` of `x_i + y_j` with indices recovered from a run on
// reversed `y`. Writes up to `k` items; `*out_len` gets the count.
//
// # Safety
// `x`, `y` must hold `nx`, `ny` values; `out` must hold `k` items.
enum FrStatus fr_topk(const double *x,
                      size_t nx,
                      const double *y,
                      size_t ny,
                      size_t k,
                      const struct FrSchedule *s,
                      double tau,
                      double verify_tolerance,
                      struct FrTopKItem *out,
                      size_t *out_len);

// Empty queue over the exponents of `s`.
//
// # Safety
// `s` must be a live schedule; `out` valid for a pointer write.
enum FrStatus fr_norm_queue_new(const struct FrSchedule *s, double tau, struct FrNormQueue **out);

// # Safety
// `q` must come from [`fr_norm_queue_new`] and not be used afterwards. Null is ignored.
void fr_norm_queue_free(struct FrNormQueue *q);

// Adds `v >= 0` to every stored norm power.
//
// # Safety
// `q` must be a live queue.
enum FrStatus fr_norm_queue_push(struct FrNormQueue *q, double v);

// Estimates and removes the largest value.
//
// # Safety
// `q` must be a live queue and `out` valid for one write.
enum FrStatus fr_norm_queue_pop_max(struct FrNormQueue *q, double *out);

// Estimates the largest value without removing it.
//
// # Safety
// `q` must be a live queue and `out` valid for one write.
enum FrStatus fr_norm_queue_peek_max(const struct FrNormQueue *q, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FASTRINGS_H */
