#ifndef LIDARMAP_H
#define LIDARMAP_H

#include <stdbool.h>
#include <stddef.h>

// Result code of every fallible call.
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_ARGUMENT = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_IO = 3,
  LM_STATUS_PARSE = 4,
  LM_STATUS_UNSUPPORTED_FORMAT = 5,
  LM_STATUS_INVALID_INPUT = 6,
  LM_STATUS_DEGENERATE = 7,
  LM_STATUS_INITIALIZATION_FAILED = 8,
  LM_STATUS_ORDERING = 9,
  LM_STATUS_CONFIG = 10,
  LM_STATUS_INTERNAL = 11,
  LM_STATUS_PANIC = 12,
} LmStatus;

// Opaque point cloud.
typedef struct LmCloud LmCloud;

// Opaque prior-map localizer.
typedef struct LmLocalizer LmLocalizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len - 1` bytes) and returns the full message length in bytes.
// `buf` may be null to query the length.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t lm_last_error_message(char *buf, size_t len);

// Builds a cloud from `count` packed xyz triples.
//
// # Safety
// `xyz` must point to `3 * count` doubles (or be null when `count` is 0);
// `out` must be a valid pointer.
enum LmStatus lm_cloud_new(const double *xyz, size_t count, struct LmCloud **out);

// Loads a PLY or PCD file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
enum LmStatus lm_cloud_load(const char *path, struct LmCloud **out);

// Writes the cloud; the format follows the file extension.
//
// # Safety
// `cloud` must be a live handle; `path` a NUL-terminated string.
enum LmStatus lm_cloud_save(const struct LmCloud *cloud, const char *path);

// Number of points; 0 for a null handle.
//
// # Safety
// `cloud` must be null or a live handle.
size_t lm_cloud_len(const struct LmCloud *cloud);

// Copies the points as packed xyz into `xyz`, which holds `capacity` points.
//
// # Safety
// `cloud` must be a live handle; `xyz` must point to `3 * capacity` doubles.
enum LmStatus lm_cloud_points(const struct LmCloud *cloud, double *xyz, size_t capacity);

// Releases a cloud. Null is ignored.
//
// # Safety
// `cloud` must be null or a handle not yet freed.
void lm_cloud_free(struct LmCloud *cloud);

// Uniform sampling at `voxel_size` followed by MLS smoothing with
// `search_radius` (also the Gaussian width); non-positive values select the
// defaults.
//
// # Safety
// `cloud` must be a live handle; `out` a valid pointer.
enum LmStatus lm_craft_map(const struct LmCloud *cloud,
                           double voxel_size,
                           double search_radius,
                           struct LmCloud **out);

// Cloth-simulation ground extraction with default parameters.
//
// # Safety
// `cloud` must be a live handle; both outputs valid pointers.
enum LmStatus lm_extract_ground(const struct LmCloud *cloud,
                                struct LmCloud **ground,
                                struct LmCloud **nonground);

// Localizer over a copy of `map` with default configuration and map
// insertion enabled from scan timestamp `map_update_enable_time`
// (`INFINITY` keeps the map fixed).
//
// # Safety
// `map` must be a live handle; `out` a valid pointer.
enum LmStatus lm_localizer_new(const struct LmCloud *map,
                               double map_update_enable_time,
                               struct LmLocalizer **out);

// Registers the first `count` scans against the map starting from `guess`.
// On success writes the pose and fitness; on [`LmStatus::InitializationFailed`]
// only the fitness is written.
//
// # Safety
// `scans` and `timestamps` must hold `count` entries of live handles and
// values; `guess` 16 doubles; `pose_out` 16 writable doubles; `fitness_out`
// null or writable.
enum LmStatus lm_localizer_initialize(struct LmLocalizer *localizer,
                                      const struct LmCloud *const *scans,
                                      const double *timestamps,
                                      size_t count,
                                      const double *guess,
                                      double *pose_out,
                                      double *fitness_out);

// Starts tracking at a known pose.
//
// # Safety
// `localizer` must be a live handle; `pose` 16 doubles.
enum LmStatus lm_localizer_initialize_at(struct LmLocalizer *localizer,
                                         const double *pose,
                                         double timestamp);

// Tracks one scan. Writes the pose and whether the scan was degraded
// (pose carried over from the prediction).
//
// # Safety
// `localizer` and `scan` must be live handles; `pose_out` 16 writable
// doubles; `degraded_out` null or writable.
enum LmStatus lm_localizer_localize(struct LmLocalizer *localizer,
                                    double timestamp,
                                    const struct LmCloud *scan,
                                    double *pose_out,
                                    bool *degraded_out);

// Snapshot of the current map (prior plus inserted points).
//
// # Safety
// `localizer` must be a live handle; `out` a valid pointer.
enum LmStatus lm_localizer_map(const struct LmLocalizer *localizer, struct LmCloud **out);

// Releases a localizer. Null is ignored.
//
// # Safety
// `localizer` must be null or a handle not yet freed.
void lm_localizer_free(struct LmLocalizer *localizer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIDARMAP_H */
