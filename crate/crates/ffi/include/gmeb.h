/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GMEB_H
#define GMEB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GmebStatus {
  GMEB_STATUS_OK = 0,
  GMEB_STATUS_NULL_POINTER = 1,
  GMEB_STATUS_INVALID_ARGUMENT = 2,
  GMEB_STATUS_INVALID_GRAPH = 3,
  GMEB_STATUS_IO = 4,
  GMEB_STATUS_FORMAT = 5,
  GMEB_STATUS_CONFIG = 6,
  GMEB_STATUS_BUDGET = 7,
  GMEB_STATUS_TRAINING = 8,
  GMEB_STATUS_PANIC = 9,
} GmebStatus;

/**
 * Response transforms exposed by [`gmeb_transform_probs`].
 */
typedef enum GmebTransform {
  /**
   * One-hot argmax; `param` unused.
   */
  GMEB_TRANSFORM_TOP1 = 0,
  /**
   * Rounding to `2^param` levels, then renormalised.
   */
  GMEB_TRANSFORM_QUANTIZE = 1,
  /**
   * Runner-up mass moved to the least likely class; `param` is the strength.
   */
  GMEB_TRANSFORM_REDIRECT = 2,
  /**
   * Reversed vector below confidence `param`.
   */
  GMEB_TRANSFORM_MISINFORM = 3,
} GmebTransform;

/**
 * Opaque graph handle.
 */
typedef struct GmebGraph GmebGraph;

/**
 * Structural summary of a graph.
 */
typedef struct GmebGraphStats {
  size_t num_nodes;
  size_t num_edges;
  size_t num_classes;
  size_t feat_dim;
  double avg_degree;
  double density;
  double edge_homophily;
} GmebGraphStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on this thread.
 */
const char *gmeb_last_error(void);

/**
 * Loads a graph bundle directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GmebStatus gmeb_graph_load(const char *dir, struct GmebGraph **out);

/**
 * Generates a planted-partition graph.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GmebStatus gmeb_graph_generate_sbm(size_t n,
                                        size_t num_classes,
                                        double p_in,
                                        double p_out,
                                        size_t feat_dim,
                                        double feat_signal,
                                        uint64_t seed,
                                        struct GmebGraph **out);

/**
 * Releases a graph handle. Null is ignored.
 *
 * # Safety
 * `g` must come from this library and not be used afterwards.
 */
void gmeb_graph_free(struct GmebGraph *g);

/**
 * # Safety
 * `g` must be a live handle; `out` must be valid for writes.
 */
enum GmebStatus gmeb_graph_stats(const struct GmebGraph *g, struct GmebGraphStats *out);

/**
 * Edge homophily; 0 for a graph without edges.
 *
 * # Safety
 * `g` must be a live handle; `out` must be valid for writes.
 */
enum GmebStatus gmeb_graph_homophily(const struct GmebGraph *g, double *out);

/**
 * Runs one track of a JSON experiment config and returns its records as
 * JSONL. Release `*out` with [`gmeb_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be valid for
 * writes.
 */
enum GmebStatus gmeb_run_track_json(const char *config_json, char **out);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void gmeb_string_free(char *s);

/**
 * Applies a response transform to one probability vector of length `len`,
 * writing `len` values to `out` (which may alias `probs`).
 *
 * # Safety
 * `probs` must be readable and `out` writable for `len` doubles.
 */
enum GmebStatus gmeb_transform_probs(enum GmebTransform kind,
                                     double param,
                                     const double *probs,
                                     size_t len,
                                     double *out);

/**
 * 1 when `subject` is strictly above both references, else 0.
 */
uint8_t gmeb_e_ave(double subject, double clean, double random);

/**
 * Fraction of positions where two label arrays of length `len` agree.
 *
 * # Safety
 * `a` and `b` must be readable for `len` elements; `out` writable.
 */
enum GmebStatus gmeb_fidelity(const size_t *a, const size_t *b, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMEB_H */
