#ifndef FACEMIMIC_H
#define FACEMIMIC_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every API function.
typedef enum FmStatus {
  FmStatus_Ok = 0,
  FmStatus_NullArgument = 1,
  FmStatus_InvalidArgument = 2,
  FmStatus_DimensionMismatch = 3,
  FmStatus_DegenerateInput = 4,
  FmStatus_IoError = 5,
  FmStatus_MalformedFile = 6,
  FmStatus_FormatVersion = 7,
  FmStatus_InternalPanic = 8,
} FmStatus;

// Expression decoupling encoder (opaque).
typedef struct FmEdm FmEdm;

// Transfer decoder, commands to expression (opaque).
typedef struct FmEtmDecoder FmEtmDecoder;

// Transfer encoder, expression to commands (opaque).
typedef struct FmEtmEncoder FmEtmEncoder;

// Statistical head model (opaque).
typedef struct FmHeadModel FmHeadModel;

// Simulated robot rig (opaque).
typedef struct FmRig FmRig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static nul-terminated string.
const char *fm_version(void);

// Copies the last error message of this thread into `buf` (truncated to
// `cap` bytes including the nul) and returns the full message length.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (query mode).
size_t fm_last_error(char *buf, size_t cap);

// Releases a head model handle. Null is a no-op.
//
// # Safety
// `ptr` must be a handle from this library that has not been freed.
void fm_head_model_free(struct FmHeadModel *ptr);

// Releases a decoupling-encoder handle. Null is a no-op.
//
// # Safety
// `ptr` must be a handle from this library that has not been freed.
void fm_edm_free(struct FmEdm *ptr);

// Releases a transfer-encoder handle. Null is a no-op.
//
// # Safety
// `ptr` must be a handle from this library that has not been freed.
void fm_etm_encoder_free(struct FmEtmEncoder *ptr);

// Releases a transfer-decoder handle. Null is a no-op.
//
// # Safety
// `ptr` must be a handle from this library that has not been freed.
void fm_etm_decoder_free(struct FmEtmDecoder *ptr);

// Releases a rig handle. Null is a no-op.
//
// # Safety
// `ptr` must be a handle from this library that has not been freed.
void fm_rig_free(struct FmRig *ptr);

// Loads a head model JSON artifact.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum FmStatus fm_head_model_load(const char *path, struct FmHeadModel **out);

// Loads a trained decoupling encoder JSON artifact.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum FmStatus fm_edm_load(const char *path, struct FmEdm **out);

// Loads a trained transfer encoder JSON artifact.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum FmStatus fm_etm_encoder_load(const char *path, struct FmEtmEncoder **out);

// Loads a trained transfer decoder JSON artifact.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum FmStatus fm_etm_decoder_load(const char *path, struct FmEtmDecoder **out);

// Loads a robot rig JSON artifact.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum FmStatus fm_rig_load(const char *path, struct FmRig **out);

// Builds the procedural head model.
//
// # Safety
// `out` must be writable.
enum FmStatus fm_head_model_build(uint64_t seed,
                                  size_t n_vertices,
                                  size_t n_shape,
                                  size_t n_expr,
                                  size_t n_landmarks,
                                  struct FmHeadModel **out);

// Saves a head model to a JSON file.
//
// # Safety
// `model` must be a live handle; `path` a nul-terminated string.
enum FmStatus fm_head_model_save(const struct FmHeadModel *model, const char *path);

// Reads the model dimensions. Null out-pointers are skipped.
//
// # Safety
// `model` must be a live handle.
enum FmStatus fm_head_model_dims(const struct FmHeadModel *model,
                                 size_t *n_vertices,
                                 size_t *n_shape,
                                 size_t *n_expr,
                                 size_t *n_landmarks);

// Reads the encoder dimensions. Null out-pointers are skipped.
//
// # Safety
// `edm` must be a live handle.
enum FmStatus fm_edm_dims(const struct FmEdm *edm,
                          size_t *n_expr,
                          size_t *n_shape,
                          size_t *n_landmarks);

// Decouples observed 2D landmarks into (expression | pose | morphology).
// `landmarks_xy` holds `n_points` interleaved (x, y) pairs; `out_params`
// receives `n_expr + 3 + n_shape` values.
//
// # Safety
// Pointers must cover the stated lengths.
enum FmStatus fm_edm_infer(const struct FmEdm *edm,
                           const double *landmarks_xy,
                           size_t n_points,
                           double *out_params,
                           size_t out_len);

// Maps an expression code to normalized actuator commands in [0, 1].
//
// # Safety
// Pointers must cover the stated lengths.
enum FmStatus fm_etm_encode(const struct FmEtmEncoder *encoder,
                            const double *expression,
                            size_t expression_len,
                            double *out_commands,
                            size_t commands_len);

// Predicts the expression a normalized command will produce.
//
// # Safety
// Pointers must cover the stated lengths.
enum FmStatus fm_etm_decode(const struct FmEtmDecoder *decoder,
                            const double *commands,
                            size_t commands_len,
                            double *out_expression,
                            size_t expression_len);

// Reads the rig dimensions. Null out-pointers are skipped.
//
// # Safety
// `rig` must be a live handle.
enum FmStatus fm_rig_dims(const struct FmRig *rig, size_t *n_actuators, size_t *n_expr);

// Drives the rig with a normalized command and observes its face as 2D
// landmarks; `out_xy` receives `n_landmarks` interleaved (x, y) pairs.
//
// # Safety
// Pointers must cover the stated lengths.
enum FmStatus fm_rig_observe(const struct FmRig *rig,
                             const struct FmHeadModel *model,
                             const double *commands,
                             size_t commands_len,
                             double noise_sigma,
                             uint64_t noise_seed,
                             double *out_xy,
                             size_t out_xy_len);

// Normalizes raw device-unit commands into [0, 1] per actuator. Values
// outside the bounds are clamped; `out_clamped` (nullable) reports whether
// any clamp happened.
//
// # Safety
// Pointers must cover `n` values each.
enum FmStatus fm_normalize_commands(const double *raw,
                                    const double *raw_min,
                                    const double *raw_max,
                                    size_t n,
                                    double *out,
                                    bool *out_clamped);

// One-call imitation: decouple the observed human landmarks, map the
// expression to commands, actuate the simulated rig, read the robot's
// expression back. `out_commands` receives the commands, `out_gap` the
// squared expression distance between human and robot.
//
// # Safety
// Pointers must cover the stated lengths.
enum FmStatus fm_imitate(const struct FmEdm *edm,
                         const struct FmEtmEncoder *encoder,
                         const struct FmRig *rig,
                         const struct FmHeadModel *model,
                         const double *observed_xy,
                         size_t n_points,
                         double *out_commands,
                         size_t commands_len,
                         double *out_gap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEMIMIC_H */
