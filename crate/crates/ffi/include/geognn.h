#ifndef GEOGNN_H
#define GEOGNN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum GgStatus {
  GG_STATUS_OK = 0,
  GG_STATUS_NULL_POINTER = 1,
  GG_STATUS_INVALID_INPUT = 2,
  GG_STATUS_DOMAIN = 3,
  GG_STATUS_SHAPE = 4,
  GG_STATUS_INGESTION = 5,
  GG_STATUS_FORMAT = 6,
  GG_STATUS_NON_FINITE_GRADIENT = 7,
  GG_STATUS_CONFIG = 8,
  GG_STATUS_IO = 9,
  GG_STATUS_PANIC = 10,
} GgStatus;

// Loaded transaction graph.
typedef struct GgGraph GgGraph;

// Trained model restored from a checkpoint.
typedef struct GgModel GgModel;

// Fitted normalization statistics.
typedef struct GgStats GgStats;

// Sampled ego subgraph.
typedef struct GgSubgraph GgSubgraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next `gg_*` call on the same thread.
const char *gg_last_error(void);

// Library version as a static NUL-terminated string.
const char *gg_version(void);

// Exponential map at the origin: `dim` tangent coordinates to a ball point.
//
// # Safety
// `v` and `out` must point to `dim` doubles.
enum GgStatus gg_exp0(double c, const double *v, size_t dim, double *out);

// Logarithmic map at the origin.
//
// # Safety
// `x` and `out` must point to `dim` doubles.
enum GgStatus gg_log0(double c, const double *x, size_t dim, double *out);

// Poincaré coordinates to Klein coordinates.
//
// # Safety
// `x` and `out` must point to `dim` doubles.
enum GgStatus gg_poincare_to_klein(double c, const double *x, size_t dim, double *out);

// Klein coordinates to Poincaré coordinates.
//
// # Safety
// `x` and `out` must point to `dim` doubles.
enum GgStatus gg_klein_to_poincare(double c, const double *x, size_t dim, double *out);

// Unweighted Klein-model mean of `n` ball points stored row-major.
//
// # Safety
// `points` must point to `n * dim` doubles and `out` to `dim`.
enum GgStatus gg_klein_mean(double c, const double *points, size_t n, size_t dim, double *out);

// Geodesic distance between two ball points.
//
// # Safety
// `x` and `y` must point to `dim` doubles; `out` to one double.
enum GgStatus gg_distance(double c, const double *x, const double *y, size_t dim, double *out);

// Loads an edge list plus optional feature and label files (NULL to skip).
//
// # Safety
// Paths must be NUL-terminated strings or NULL; `out` must be writable.
enum GgStatus gg_graph_load(const char *edges,
                            const char *features,
                            const char *labels,
                            struct GgGraph **out);

// Number of nodes, or 0 for NULL.
//
// # Safety
// `graph` must be NULL or a live handle.
size_t gg_graph_node_count(const struct GgGraph *graph);

// Number of feature columns, or 0 for NULL.
//
// # Safety
// `graph` must be NULL or a live handle.
size_t gg_graph_feature_dim(const struct GgGraph *graph);

// # Safety
// `graph` must be NULL or a handle not yet freed.
void gg_graph_free(struct GgGraph *graph);

// Samples the ego subgraph of `seed` with `depth` per-hop fan-outs. The
// draw is determined by `(rng_seed, seed)`.
//
// # Safety
// `fanouts` must point to `depth` values; `out` must be writable.
enum GgStatus gg_sample_ego(const struct GgGraph *graph,
                            size_t seed,
                            const size_t *fanouts,
                            size_t depth,
                            uint64_t rng_seed,
                            struct GgSubgraph **out);

// Node count of a subgraph, or 0 for NULL.
//
// # Safety
// `sub` must be NULL or a live handle.
size_t gg_subgraph_len(const struct GgSubgraph *sub);

// Copies up to `cap` original node ids (seed first) into `out` and
// returns the total count.
//
// # Safety
// `out` must hold `cap` values or be NULL with `cap == 0`.
size_t gg_subgraph_nodes(const struct GgSubgraph *sub, size_t *out, size_t cap);

// # Safety
// `sub` must be NULL or a handle not yet freed.
void gg_subgraph_free(struct GgSubgraph *sub);

// Loads normalization statistics written by the `normalize` stage.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GgStatus gg_stats_load(const char *file, struct GgStats **out);

// Normalizes a subgraph's features in place.
//
// # Safety
// Both handles must be live.
enum GgStatus gg_subgraph_normalize(struct GgSubgraph *sub, const struct GgStats *stats);

// # Safety
// `stats` must be NULL or a handle not yet freed.
void gg_stats_free(struct GgStats *stats);

// Restores a model from a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GgStatus gg_model_load(const char *file, struct GgModel **out);

// Feature width the model expects, or 0 for NULL.
//
// # Safety
// `model` must be NULL or a live handle.
size_t gg_model_input_dim(const struct GgModel *model);

// Predicted class index (0..7) of the subgraph's seed.
//
// # Safety
// Both handles must be live; `class_out` must be writable.
enum GgStatus gg_model_predict(const struct GgModel *model,
                               const struct GgSubgraph *sub,
                               uint32_t *class_out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void gg_model_free(struct GgModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOGNN_H */
