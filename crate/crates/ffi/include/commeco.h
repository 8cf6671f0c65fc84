#ifndef COMMECO_H
#define COMMECO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the nonzero pipeline codes match the CLI exit codes.
typedef enum {
  COMMECO_STATUS_OK = 0,
  COMMECO_STATUS_FAILURE = 1,
  COMMECO_STATUS_CONFIG_ERROR = 2,
  COMMECO_STATUS_DEPENDENCY_ERROR = 3,
  COMMECO_STATUS_NUMERICAL_ERROR = 4,
  COMMECO_STATUS_INVALID_ARGUMENT = 5,
  COMMECO_STATUS_NULL_POINTER = 6,
  COMMECO_STATUS_PANIC = 7,
} CommecoStatus;

// Opaque list of episodes.
typedef struct CommecoEpisodes CommecoEpisodes;

// Opaque S-Map Jacobian sequence.
typedef struct CommecoJacobians CommecoJacobians;

// Opaque pipeline bound to one configuration file.
typedef struct CommecoPipeline CommecoPipeline;

// One sign episode; `sign` is +1 for mutualism and -1 for competition.
typedef struct {
  uintptr_t target;
  uintptr_t source;
  uintptr_t start_week;
  uintptr_t duration;
  int32_t sign;
  double mean_strength;
  double mean_value;
} CommecoEpisode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the next
// call into this library on the same thread.
const char *commeco_last_error(void);

// Library version as a static NUL-terminated string.
const char *commeco_version(void);

// Fits S-Map Jacobians to `n` series of length `t`, stored row-major in
// `series` (`series[c * t + w]`; NaN marks a missing week). With
// `theta < 0` the hyperparameters are chosen by leave-one-out
// cross-validation over the default grid; otherwise `(theta, alpha, lambda)`
// are used as given.
//
// # Safety
// `series` must point to `n * t` doubles and `out` to writable storage.
CommecoStatus commeco_smap_fit(const double *series,
                               uintptr_t n,
                               uintptr_t t,
                               double theta,
                               double alpha,
                               double lambda,
                               CommecoJacobians **out);

// # Safety
// `j` must be null or a handle from [`commeco_smap_fit`] not yet freed.
void commeco_jacobians_free(CommecoJacobians *j);

// Number of communities.
//
// # Safety
// `j` must be a live handle.
uintptr_t commeco_jacobians_dim(const CommecoJacobians *j);

// Number of fitted steps.
//
// # Safety
// `j` must be a live handle.
uintptr_t commeco_jacobians_len(const CommecoJacobians *j);

// Week of step `step` and the effect of `source` on `target` there.
//
// # Safety
// `j` must be a live handle; `week` and `value` must be writable.
CommecoStatus commeco_jacobians_get(const CommecoJacobians *j,
                                    uintptr_t step,
                                    uintptr_t target,
                                    uintptr_t source,
                                    uintptr_t *week,
                                    double *value);

// Extracts every off-diagonal sign episode.
//
// # Safety
// `j` must be a live handle and `out` writable.
CommecoStatus commeco_episodes_extract(const CommecoJacobians *j, CommecoEpisodes **out);

// # Safety
// `e` must be a live handle.
uintptr_t commeco_episodes_len(const CommecoEpisodes *e);

// Copies episode `index` into `out`.
//
// # Safety
// `e` must be a live handle and `out` writable.
CommecoStatus commeco_episodes_get(const CommecoEpisodes *e, uintptr_t index, CommecoEpisode *out);

// # Safety
// `e` must be null or a live handle.
void commeco_episodes_free(CommecoEpisodes *e);

// Loads and validates a TOML configuration.
//
// # Safety
// `config_path` must be a NUL-terminated string and `out` writable.
CommecoStatus commeco_pipeline_open(const char *config_path, CommecoPipeline **out);

// Runs one stage by name (`"ingest"`, `"smap"`, ...). `up_to_date` (if not
// null) is set to 1 when the stage had nothing to do.
//
// # Safety
// `p` must be a live handle and `stage` a NUL-terminated string.
CommecoStatus commeco_pipeline_run(CommecoPipeline *p,
                                   const char *stage,
                                   bool force,
                                   int32_t *up_to_date);

// # Safety
// `p` must be null or a live handle.
void commeco_pipeline_free(CommecoPipeline *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMMECO_H */
