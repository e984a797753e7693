#ifndef ADAPTIVE_MVS_H
#define ADAPTIVE_MVS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the error values match the command-line exit codes.
 */
typedef enum MvsStatus {
  MVS_STATUS_OK = 0,
  MVS_STATUS_USAGE = 2,
  MVS_STATUS_PARSE_OR_IO = 3,
  MVS_STATUS_NUMERICAL = 4,
  MVS_STATUS_NULL_POINTER = 5,
  MVS_STATUS_BUFFER_TOO_SMALL = 6,
  MVS_STATUS_PANIC = 7,
} MvsStatus;

/**
 * Pipeline settings.
 */
typedef struct MvsConfig MvsConfig;

/**
 * Full-resolution depth and confidence of one reference view.
 */
typedef struct MvsDepthResult MvsDepthResult;

/**
 * Views, images and optional ground truth of one scene.
 */
typedef struct MvsScene MvsScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty if none has
 * failed. Valid until the next failing call on the same thread.
 */
const char *mvs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mvs_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum MvsStatus mvs_config_new_default(struct MvsConfig **out);

/**
 * Sets one `key = value` setting, as in a config file. The configuration
 * is left unchanged when the result would be invalid.
 *
 * # Safety
 * `config` must come from [`mvs_config_new_default`]; `key` and `value`
 * must be NUL-terminated strings.
 */
enum MvsStatus mvs_config_set(struct MvsConfig *config, const char *key, const char *value);

/**
 * # Safety
 * `config` must come from [`mvs_config_new_default`] or be null.
 */
void mvs_config_free(struct MvsConfig *config);

/**
 * Loads a scene directory (`cams/`, `images/`, optional `depth_gt/` and
 * `pair.txt`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MvsStatus mvs_scene_load(const char *path, struct MvsScene **out);

/**
 * Renders a synthetic scene with ground truth at 80x64 pixels.
 *
 * # Safety
 * `geometry` must be a NUL-terminated preset name and `out` writable.
 */
enum MvsStatus mvs_scene_synth(const char *geometry,
                               double near,
                               double far,
                               size_t views,
                               uint64_t seed,
                               struct MvsScene **out);

/**
 * Number of views, or 0 for a null handle.
 *
 * # Safety
 * `scene` must come from this library or be null.
 */
size_t mvs_scene_view_count(const struct MvsScene *scene);

/**
 * # Safety
 * `scene` must come from this library or be null.
 */
void mvs_scene_free(struct MvsScene *scene);

/**
 * Reconstructs one reference view.
 *
 * # Safety
 * `scene` and `config` must be live handles and `out` writable.
 */
enum MvsStatus mvs_reconstruct(const struct MvsScene *scene,
                               const struct MvsConfig *config,
                               size_t reference,
                               struct MvsDepthResult **out);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
size_t mvs_result_width(const struct MvsDepthResult *result);

/**
 * # Safety
 * `result` must be a live handle or null.
 */
size_t mvs_result_height(const struct MvsDepthResult *result);

/**
 * Copies the row-major depth map into `buffer`; invalid pixels are 0.
 *
 * # Safety
 * `result` must be a live handle and `buffer` must hold `len` floats.
 */
enum MvsStatus mvs_result_copy_depth(const struct MvsDepthResult *result,
                                     float *buffer,
                                     size_t len);

/**
 * Copies the row-major confidence map, values in `[0, 1]`.
 *
 * # Safety
 * `result` must be a live handle and `buffer` must hold `len` floats.
 */
enum MvsStatus mvs_result_copy_confidence(const struct MvsDepthResult *result,
                                          float *buffer,
                                          size_t len);

/**
 * # Safety
 * `result` must come from [`mvs_reconstruct`] or be null.
 */
void mvs_result_free(struct MvsDepthResult *result);

/**
 * Coverage of the true range `[truth_min, truth_max]` by the candidate
 * range (`aog`) and the useful fraction of the candidate (`aos`).
 *
 * # Safety
 * `aog` and `aos` must be writable.
 */
enum MvsStatus mvs_overlap_metrics(double truth_min,
                                   double truth_max,
                                   double candidate_min,
                                   double candidate_max,
                                   double *aog,
                                   double *aos);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPTIVE_MVS_H */
