#ifndef SOTS_H
#define SOTS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Largest roster a graph handle accepts.
#define SOTS_MAX_NODES 9999

typedef enum SotsStatus {
  SOTS_STATUS_OK = 0,
  SOTS_STATUS_NULL_POINTER = 1,
  SOTS_STATUS_INVALID_ARGUMENT = 2,
  SOTS_STATUS_INVALID_UTF8 = 3,
  // Malformed ballots, bad team size or an unknown node.
  SOTS_STATUS_AFFINITY = 4,
  // The roster is too large for exhaustive search.
  SOTS_STATUS_TOO_LARGE = 5,
  SOTS_STATUS_PARSE = 6,
  SOTS_STATUS_SIMULATION = 7,
  SOTS_STATUS_PANIC = 8,
} SotsStatus;

// Team partition; members are node indices of the graph it was built from.
typedef struct SotsAssignment SotsAssignment;

// Affinity graph over nodes `0..n`.
typedef struct SotsGraph SotsGraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer is
// valid until the next call into this library from the same thread.
const char *sots_last_error(void);

// Builds a graph from an `n * n` row-major matrix of edge weights in half
// units (0..=6). Only the upper triangle is read.
//
// # Safety
// `halves` must point to `n * n` readable bytes and `out` must be writable.
enum SotsStatus sots_graph_from_halves(size_t n, const uint8_t *halves, struct SotsGraph **out);

// Builds a graph from a JSON array of ballots
// (`{"voter", "previous_teammate", "stay_with_previous", "chosen"}`).
// The roster is the set of voters; node `i` is the i-th voter id in
// lexicographic order.
//
// # Safety
// `json` must be a NUL-terminated string and `out` must be writable.
enum SotsStatus sots_graph_from_ballots_json(const char *json, struct SotsGraph **out);

// # Safety
// `graph` must be NULL or a handle from a `sots_graph_*` constructor.
void sots_graph_free(struct SotsGraph *graph);

// # Safety
// `graph` must be a live graph handle.
size_t sots_graph_len(const struct SotsGraph *graph);

// Edge weight between nodes `i` and `j`, in half units.
//
// # Safety
// `graph` must be a live graph handle and `out` writable.
enum SotsStatus sots_graph_edge_halves(const struct SotsGraph *graph,
                                       size_t i,
                                       size_t j,
                                       uint8_t *out);

// Greedy partition into teams of `k` with seeded tie-breaking.
//
// # Safety
// `graph` must be a live graph handle and `out` writable.
enum SotsStatus sots_greedy_assign(const struct SotsGraph *graph,
                                   size_t k,
                                   uint64_t seed,
                                   struct SotsAssignment **out);

// Exact optimum by exhaustive search; requires `k` to divide the roster and
// at most twelve nodes.
//
// # Safety
// `graph` must be a live graph handle and `out` writable.
enum SotsStatus sots_brute_force_assign(const struct SotsGraph *graph,
                                        size_t k,
                                        struct SotsAssignment **out);

// # Safety
// `a` must be NULL or a handle from an assign function.
void sots_assignment_free(struct SotsAssignment *a);

// # Safety
// `a` must be a live assignment handle.
size_t sots_assignment_team_count(const struct SotsAssignment *a);

// Copies the node indices of team `team` into `members`, which holds
// `capacity` entries, and stores the team size in `len`.
//
// # Safety
// `a` must be a live assignment handle, `len` writable, and `members`
// writable for `capacity` entries.
enum SotsStatus sots_assignment_team(const struct SotsAssignment *a,
                                     size_t team,
                                     size_t *members,
                                     size_t capacity,
                                     size_t *len);

// Total score as an exact fraction.
//
// # Safety
// `a` must be a live assignment handle and both outputs writable.
enum SotsStatus sots_assignment_score(const struct SotsAssignment *a,
                                      uint64_t *numer,
                                      uint64_t *denom);

// Turn-taking over a segment author sequence given as integer labels.
// Writes the raw sum and the normalized score as a reduced fraction.
//
// # Safety
// `authors` must point to `len` readable labels; outputs must be writable.
enum SotsStatus sots_turn_taking(const uint32_t *authors,
                                 size_t len,
                                 int64_t *raw_sum,
                                 int64_t *numer,
                                 int64_t *denom);

// Runs a simulation plan given as TOML and returns its newline-delimited
// event log. Free the log with [`sots_string_free`].
//
// # Safety
// `plan_toml` must be a NUL-terminated string and `log` writable.
enum SotsStatus sots_simulate(const char *plan_toml, char **log);

// # Safety
// `s` must be NULL or a string returned by this library.
void sots_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOTS_H */
