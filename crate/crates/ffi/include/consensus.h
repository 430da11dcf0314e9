#ifndef CONSENSUS_H
#define CONSENSUS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ConsensusStatus {
  CONSENSUS_STATUS_OK = 0,
  CONSENSUS_STATUS_NULL_POINTER = 1,
  CONSENSUS_STATUS_INVALID_ARGUMENT = 2,
  CONSENSUS_STATUS_PARSE = 3,
  CONSENSUS_STATUS_VALIDATION = 4,
  CONSENSUS_STATUS_NUMERICAL = 5,
  CONSENSUS_STATUS_IO = 6,
  CONSENSUS_STATUS_PANIC = 7,
} ConsensusStatus;

typedef enum ConsensusVariant {
  CONSENSUS_VARIANT_BASELINE = 0,
  CONSENSUS_VARIANT_REJECT = 1,
  CONSENSUS_VARIANT_CONSTANT_POINT = 2,
} ConsensusVariant;

/**
 * Per-sample vector selected by [`consensus_trajectory_sample`].
 */
typedef enum ConsensusChannel {
  CONSENSUS_CHANNEL_X = 0,
  CONSENSUS_CHANNEL_XHAT = 1,
  CONSENSUS_CHANNEL_WHAT = 2,
  CONSENSUS_CHANNEL_U = 3,
  CONSENSUS_CHANNEL_W = 4,
} ConsensusChannel;

typedef struct ConsensusGraph ConsensusGraph;

typedef struct ConsensusScenario ConsensusScenario;

typedef struct ConsensusTrajectory ConsensusTrajectory;

/**
 * `(π₊, π₋, π₀)` of a matrix spectrum.
 */
typedef struct ConsensusInertia {
  size_t positive;
  size_t negative;
  size_t zero;
} ConsensusInertia;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failed call on this thread, or an empty
 * string. Valid until the next call into this library on the same thread.
 */
const char *consensus_last_error_message(void);

/**
 * Static, nul-terminated name of a status code.
 */
const char *consensus_status_name(enum ConsensusStatus status);

void consensus_string_free(char *s);

/**
 * `edges` holds `edge_count` pairs as `2 * edge_count` zero-based indices.
 */
enum ConsensusStatus consensus_graph_new(size_t n,
                                         const size_t *edges,
                                         size_t edge_count,
                                         struct ConsensusGraph **out);

enum ConsensusStatus consensus_graph_cycle(size_t n, struct ConsensusGraph **out);

void consensus_graph_free(struct ConsensusGraph *g);

enum ConsensusStatus consensus_graph_node_count(const struct ConsensusGraph *g, size_t *out);

/**
 * Second-smallest Laplacian eigenvalue.
 */
enum ConsensusStatus consensus_graph_fiedler_value(const struct ConsensusGraph *g, double *out);

/**
 * Inertia of `K·Q` for `K = diag(k)`, `k` of length `n`.
 */
enum ConsensusStatus consensus_kq_inertia(const struct ConsensusGraph *g,
                                          const double *k,
                                          size_t k_len,
                                          struct ConsensusInertia *out);

/**
 * Inertia of the `2n × 2n` predictor/estimator error matrix.
 */
enum ConsensusStatus consensus_error_system_inertia(const struct ConsensusGraph *g,
                                                    const double *k,
                                                    size_t k_len,
                                                    double m,
                                                    double q,
                                                    struct ConsensusInertia *out);

enum ConsensusStatus consensus_scenario_parse(const char *text, struct ConsensusScenario **out);

/**
 * Built-in example 1, 2 or 3.
 */
enum ConsensusStatus consensus_scenario_example(uint32_t id, struct ConsensusScenario **out);

void consensus_scenario_free(struct ConsensusScenario *s);

enum ConsensusStatus consensus_scenario_render(const struct ConsensusScenario *s, char **out);

enum ConsensusStatus consensus_scenario_apply_variant(struct ConsensusScenario *s,
                                                      enum ConsensusVariant variant);

enum ConsensusStatus consensus_scenario_set_horizon(struct ConsensusScenario *s, double horizon);

enum ConsensusStatus consensus_scenario_set_step(struct ConsensusScenario *s, double step);

enum ConsensusStatus consensus_scenario_node_count(const struct ConsensusScenario *s, size_t *out);

/**
 * Runs the scenario and analyzes the result.
 */
enum ConsensusStatus consensus_simulate(const struct ConsensusScenario *s,
                                        struct ConsensusTrajectory **out);

void consensus_trajectory_free(struct ConsensusTrajectory *t);

/**
 * Number of retained samples.
 */
enum ConsensusStatus consensus_trajectory_len(const struct ConsensusTrajectory *t, size_t *out);

enum ConsensusStatus consensus_trajectory_node_count(const struct ConsensusTrajectory *t,
                                                     size_t *out);

enum ConsensusStatus consensus_trajectory_time(const struct ConsensusTrajectory *t,
                                               size_t index,
                                               double *out);

/**
 * Copies one channel of sample `index` into `buf`, which must hold `n` values.
 */
enum ConsensusStatus consensus_trajectory_sample(const struct ConsensusTrajectory *t,
                                                 enum ConsensusChannel channel,
                                                 size_t index,
                                                 double *buf,
                                                 size_t buf_len);

/**
 * Writes the trajectory CSV atomically.
 */
enum ConsensusStatus consensus_trajectory_write_csv(const struct ConsensusTrajectory *t,
                                                    const char *path);

/**
 * Convergence report as a flat JSON object.
 */
enum ConsensusStatus consensus_trajectory_report_json(const struct ConsensusTrajectory *t,
                                                      char **out);

/**
 * `max(x(T)) − min(x(T))`
 */
enum ConsensusStatus consensus_trajectory_spread_final(const struct ConsensusTrajectory *t,
                                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONSENSUS_H */
