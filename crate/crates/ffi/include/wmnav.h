#ifndef WMNAV_H
#define WMNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success, failures are negative.
typedef enum WmnavStatus {
  WMNAV_STATUS_OK = 0,
  WMNAV_STATUS_NULL_POINTER = -1,
  WMNAV_STATUS_INVALID_ARGUMENT = -2,
  WMNAV_STATUS_IO = -3,
  WMNAV_STATUS_PARSE = -4,
  WMNAV_STATUS_UNREACHABLE = -5,
  // A Rust panic was caught at the boundary.
  WMNAV_STATUS_INTERNAL = -6,
} WmnavStatus;

// VLM backend for [`wmnav_run_benchmark`].
typedef enum WmnavBackend {
  WMNAV_BACKEND_ORACLE = 0,
  // Answers from a recorded `vlm_calls.jsonl`.
  WMNAV_BACKEND_REPLAY = 1,
} WmnavBackend;

// A curiosity value map.
typedef struct WmnavMap WmnavMap;

// A loaded scene and its simulator.
typedef struct WmnavScene WmnavScene;

// One scored episode, as input to [`wmnav_spl`].
typedef struct WmnavEpisodeResult {
  bool success;
  double path_length;
  // Shortest path length; negative when unknown.
  double optimal_length;
} WmnavEpisodeResult;

typedef struct WmnavSummary {
  size_t episodes;
  size_t successes;
  double sr;
  double spl;
  double mean_steps;
} WmnavSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *wmnav_version(void);

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len - 1` bytes). Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or writable for `len` bytes.
size_t wmnav_last_error_message(char *buf, size_t len);

// Loads a scene JSON file.
//
// # Safety
// `path` must be a valid string; `out` must be writable.
enum WmnavStatus wmnav_scene_load(const char *path, struct WmnavScene **out);

// Parses a scene from a JSON string.
//
// # Safety
// `json` must be a valid string; `out` must be writable.
enum WmnavStatus wmnav_scene_from_json(const char *json, struct WmnavScene **out);

// # Safety
// `scene` must be null or a handle from this library, not yet freed.
void wmnav_scene_free(struct WmnavScene *scene);

// Shortest obstacle-avoiding path length between two floor points for the
// default agent body.
//
// # Safety
// `scene` must be a live handle; `out` must be writable.
enum WmnavStatus wmnav_scene_geodesic_distance(const struct WmnavScene *scene,
                                               double ax,
                                               double ay,
                                               double bx,
                                               double by,
                                               double *out);

// Creates a `map_size` x `map_size` map of `resolution` metre cells
// centred on (`cx`, `cy`), every cell at the maximum score.
//
// # Safety
// `out` must be writable.
enum WmnavStatus wmnav_map_new(size_t map_size,
                               double resolution,
                               double cx,
                               double cy,
                               struct WmnavMap **out);

// # Safety
// `map` must be null or a handle from this library, not yet freed.
void wmnav_map_free(struct WmnavMap *map);

// Number of cells, `map_size * map_size`; zero for a null handle.
//
// # Safety
// `map` must be null or a live handle.
size_t wmnav_map_len(const struct WmnavMap *map);

// Copies all cell values, row-major from the `-y` edge, into `out`.
//
// # Safety
// `map` must be a live handle; `out` must be writable for `len` floats.
enum WmnavStatus wmnav_map_values(const struct WmnavMap *map, float *out, size_t len);

// Folds per-cell scores into the map, keeping the lower value in each
// cell. `cells` holds row-major indices and `scores` the matching values.
//
// # Safety
// `map` must be a live handle; `cells` and `scores` readable for `n` items.
enum WmnavStatus wmnav_map_merge(struct WmnavMap *map,
                                 const size_t *cells,
                                 const float *scores,
                                 size_t n);

// Zeroes cells within `r_visit` of (`x`, `y`) unless `goal_flag` is set.
//
// # Safety
// `map` must be a live handle.
enum WmnavStatus wmnav_map_mark_visited(struct WmnavMap *map,
                                        double x,
                                        double y,
                                        double r_visit,
                                        bool goal_flag);

// Writes the map as a plain-text PGM image.
//
// # Safety
// `map` must be a live handle; `path` a valid string.
enum WmnavStatus wmnav_map_write_pgm(const struct WmnavMap *map, const char *path);

// Extracts six direction scores (0..=10) from a model reply.
//
// # Safety
// `text` must be a valid string; `out` writable for six bytes.
enum WmnavStatus wmnav_parse_prediction(const char *text, uint8_t *out);

// Reads the chosen marker number from a reply and stores its zero-based
// index among `count` candidates.
//
// # Safety
// `text` must be a valid string; `out_index` writable.
enum WmnavStatus wmnav_parse_action(const char *text, size_t count, size_t *out_index);

// Success rate and SPL over `n` results.
//
// # Safety
// `results` readable for `n` items; `spl` and `sr` writable.
enum WmnavStatus wmnav_spl(const struct WmnavEpisodeResult *results,
                           size_t n,
                           double *spl,
                           double *sr);

// Runs a suite and writes the usual artifacts under `out_dir`. `replay`
// names the recorded calls for `WMNAV_BACKEND_REPLAY` and is otherwise
// ignored. `summary` may be null.
//
// # Safety
// String arguments must be valid; `summary` null or writable.
enum WmnavStatus wmnav_run_benchmark(const char *suite,
                                     const char *out_dir,
                                     enum WmnavBackend backend,
                                     const char *replay,
                                     uint64_t seed,
                                     struct WmnavSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WMNAV_H */
