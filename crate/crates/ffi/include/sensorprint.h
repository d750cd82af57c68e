#ifndef SENSORPRINT_H
#define SENSORPRINT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define SP_STREAM_ACCEL_MAGNITUDE 1

#define SP_STREAM_GYRO_X 2

#define SP_STREAM_GYRO_Y 4

#define SP_STREAM_GYRO_Z 8

#define SP_STREAM_ALL 15

#define SP_FEATURES_PER_STREAM 25

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_PARSE = 2,
  SP_STATUS_VALIDATION = 3,
  SP_STATUS_INVALID_ARGUMENT = 4,
  SP_STATUS_CALIBRATION = 5,
  SP_STATUS_IO = 6,
  SP_STATUS_BUFFER_TOO_SMALL = 7,
  SP_STATUS_PANIC = 8,
} SpStatus;

/**
 * Opaque trace handle.
 */
typedef struct SpTrace SpTrace;

/**
 * Bytes owned by the library; release with [`sp_buffer_free`].
 */
typedef struct SpBuffer {
  uint8_t *data;
  size_t len;
} SpBuffer;

/**
 * Obfuscation ranges as `[lo, hi]` pairs, range scale factor, injection
 * probability and seed. [`sp_obfuscation_defaults`] fills the base ranges.
 */
typedef struct SpObfuscationParams {
  double accel_offset[2];
  double gyro_offset[2];
  double gain[2];
  double range_scale;
  double injection_prob;
  uint64_t seed;
} SpObfuscationParams;

/**
 * Per-axis offset `O` and gain `S` of one sensor; corrected = (m - O) / S.
 */
typedef struct SpCalibration {
  double offset[3];
  double gain[3];
} SpCalibration;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on this thread.
 */
const char *sp_last_error(void);

/**
 * Parses a JSON trace document.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum SpStatus sp_trace_from_json(const uint8_t *data, size_t len, struct SpTrace **out);

/**
 * Parses a CSV trace body with its JSON metadata sidecar.
 *
 * # Safety
 * Both buffers must be readable for their lengths; `out` must be writable.
 */
enum SpStatus sp_trace_from_csv(const uint8_t *data,
                                size_t len,
                                const uint8_t *meta,
                                size_t meta_len,
                                struct SpTrace **out);

/**
 * Builds a trace from `n` rows of `[t_ms, ax, ay, az, gx, gy, gz]`.
 *
 * # Safety
 * `rows` must point to `7 * n` doubles; string arguments must be
 * NUL-terminated UTF-8; `out` must be writable.
 */
enum SpStatus sp_trace_from_samples(const char *device_id,
                                    const char *session_id,
                                    const double *rows,
                                    size_t n,
                                    struct SpTrace **out);

/**
 * Releases a trace; null is ignored.
 *
 * # Safety
 * `t` must come from this library and not be used afterwards.
 */
void sp_trace_free(struct SpTrace *t);

/**
 * Number of samples.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum SpStatus sp_trace_len(const struct SpTrace *t, size_t *out);

/**
 * Copies samples as rows of `[t_ms, ax, ay, az, gx, gy, gz]` into `out`,
 * which holds `cap` doubles. `written` receives the number of doubles
 * needed, also when the buffer is too small.
 *
 * # Safety
 * `out` must be writable for `cap` doubles; `written` must be writable.
 */
enum SpStatus sp_trace_samples(const struct SpTrace *t, double *out, size_t cap, size_t *written);

/**
 * Serializes a trace as JSON into a library-owned buffer.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum SpStatus sp_trace_to_json(const struct SpTrace *t, struct SpBuffer *out);

/**
 * Releases a buffer returned by this library and zeroes it.
 *
 * # Safety
 * `b` must be null or point to a buffer filled by this library.
 */
void sp_buffer_free(struct SpBuffer *b);

/**
 * Number of features produced for a stream mask.
 *
 * # Safety
 * `out` must be writable.
 */
enum SpStatus sp_feature_count(uint32_t streams, size_t *out);

/**
 * Name of feature `index` for a stream mask, e.g. `gyro_x.centroid`, as a
 * NUL-terminated string in a library-owned buffer (`len` excludes the NUL).
 *
 * # Safety
 * `out` must be writable.
 */
enum SpStatus sp_feature_name(uint32_t streams, size_t index, struct SpBuffer *out);

/**
 * Extracts features for the streams in `streams`, resampling at `rate_hz`,
 * into `out` (capacity `cap` doubles). `written` receives the feature count,
 * also when the buffer is too small.
 *
 * # Safety
 * `t` must be a live handle; `out` writable for `cap` doubles; `written`
 * writable.
 */
enum SpStatus sp_extract_features(const struct SpTrace *t,
                                  uint32_t streams,
                                  double rate_hz,
                                  double *out,
                                  size_t cap,
                                  size_t *written);

/**
 * Default policy: base ranges, scale 1, no injection, seed 0.
 */
struct SpObfuscationParams sp_obfuscation_defaults(void);

/**
 * Obfuscates a trace into a new handle.
 *
 * # Safety
 * `t` must be a live handle, `params` readable and `out` writable.
 */
enum SpStatus sp_obfuscate(const struct SpTrace *t,
                           const struct SpObfuscationParams *params,
                           struct SpTrace **out);

/**
 * Corrects a trace with per-sensor models into a new handle; a null model
 * leaves that sensor unchanged.
 *
 * # Safety
 * `t` must be a live handle, non-null models readable and `out` writable.
 */
enum SpStatus sp_calibrate(const struct SpTrace *t,
                           const struct SpCalibration *accel,
                           const struct SpCalibration *gyro,
                           struct SpTrace **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SENSORPRINT_H */
