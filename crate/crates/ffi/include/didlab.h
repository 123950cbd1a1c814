#ifndef DIDLAB_H
#define DIDLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum DidlabStatus {
  DIDLAB_STATUS_OK = 0,
  // A required pointer argument was null.
  DIDLAB_STATUS_NULL = 1,
  DIDLAB_STATUS_INVALID_INPUT = 2,
  DIDLAB_STATUS_IO = 3,
  DIDLAB_STATUS_SCHEMA = 4,
  DIDLAB_STATUS_INSUFFICIENT_DATA = 5,
  DIDLAB_STATUS_OVERLAP = 6,
  DIDLAB_STATUS_NUMERIC = 7,
  // Index out of range or name not found.
  DIDLAB_STATUS_UNKNOWN = 8,
  DIDLAB_STATUS_PANIC = 99,
} DidlabStatus;

// Values accepted in [`DidlabEstimateOptions::outcome`].
typedef enum DidlabOutcome {
  DIDLAB_OUTCOME_WEIGHT = 0,
  DIDLAB_OUTCOME_AMOUNT = 1,
  DIDLAB_OUTCOME_EXPENDITURE = 2,
  DIDLAB_OUTCOME_PRICE_PER100 = 3,
  DIDLAB_OUTCOME_AVG_PACKAGE_SIZE = 4,
} DidlabOutcome;

// Estimated event study with its windows and pre-trend test.
typedef struct DidlabEventStudy DidlabEventStudy;

// A prepared household-by-quarter panel for one product.
typedef struct DidlabPanel DidlabPanel;

typedef struct DidlabEstimateOptions {
  // One of the `DidlabOutcome` values.
  uint32_t outcome;
  // Doubly robust with all household covariates when true, plain
  // difference in means otherwise.
  bool conditional;
  // Multiplier-bootstrap draws for simultaneous bands; 0 disables them.
  uint32_t bootstrap_reps;
  double level;
  uint64_t seed;
  int32_t reference_year;
  uint32_t reference_quarter;
} DidlabEstimateOptions;

typedef struct DidlabAttPoint {
  int32_t year;
  uint32_t quarter;
  double estimate;
  double se;
  double p_value;
  double ci_lo;
  double ci_hi;
  double band_lo;
  double band_hi;
  size_t n_treated;
  size_t n_control;
} DidlabAttPoint;

typedef struct DidlabWindow {
  double estimate;
  double se;
  double p_value;
  // NaN when the baseline is unavailable.
  double pct_change;
  size_t n_treated;
  size_t n_control;
} DidlabWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *didlab_version(void);

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *didlab_last_error(void);

// Prepare the panel of `product` from a purchases file and an annual
// household file, with default cleaning settings.
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum DidlabStatus didlab_panel_prepare(const char *purchases_csv,
                                       const char *households_csv,
                                       const char *product,
                                       struct DidlabPanel **out);

// Load a panel written by `didlab prepare` (or [`didlab_panel_save`]).
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum DidlabStatus didlab_panel_load(const char *dir, const char *product, struct DidlabPanel **out);

// Write the panel file and its metadata into `dir`. Household profiles are
// not written; `profiles.csv` must be provided separately for reloading.
//
// # Safety
// `panel` must come from this library; `dir` must be NUL-terminated.
enum DidlabStatus didlab_panel_save(const struct DidlabPanel *panel, const char *dir);

// # Safety
// `panel` must come from this library; `out` must be writable.
enum DidlabStatus didlab_panel_n_households(const struct DidlabPanel *panel, size_t *out);

// Release a panel. NULL is ignored.
//
// # Safety
// `panel` must come from this library and not be used afterwards.
void didlab_panel_free(struct DidlabPanel *panel);

// Defaults: weight, conditional, 1000 bootstrap draws, 95% level, seed 0,
// reference quarter 2011Q1.
//
// # Safety
// `out` must be writable.
enum DidlabStatus didlab_estimate_options_default(struct DidlabEstimateOptions *out);

// Estimate the event study of one outcome on a panel.
//
// # Safety
// `panel` must come from this library; `options` must be readable and
// `out` writable. A NULL `options` uses the defaults.
enum DidlabStatus didlab_estimate(const struct DidlabPanel *panel,
                                  const struct DidlabEstimateOptions *options,
                                  struct DidlabEventStudy **out);

// # Safety
// `es` must come from this library; `out` must be writable.
enum DidlabStatus didlab_event_study_n_points(const struct DidlabEventStudy *es, size_t *out);

// Point `index` in calendar order.
//
// # Safety
// `es` must come from this library; `out` must be writable.
enum DidlabStatus didlab_event_study_point(const struct DidlabEventStudy *es,
                                           size_t index,
                                           struct DidlabAttPoint *out);

// Window average by name (`"tax"` or `"post"`).
//
// # Safety
// `es` must come from this library; `name` must be NUL-terminated and
// `out` writable.
enum DidlabStatus didlab_event_study_window(const struct DidlabEventStudy *es,
                                            const char *name,
                                            struct DidlabWindow *out);

// p-value of the joint pre-trend test; `DIDLAB_STATUS_INSUFFICIENT_DATA`
// when it could not be computed.
//
// # Safety
// `es` must come from this library; `out` must be writable.
enum DidlabStatus didlab_event_study_pretrend_p(const struct DidlabEventStudy *es, double *out);

// Release an event study. NULL is ignored.
//
// # Safety
// `es` must come from this library and not be used afterwards.
void didlab_event_study_free(struct DidlabEventStudy *es);

// `100 * estimate / baseline`.
//
// # Safety
// `out` must be writable.
enum DidlabStatus didlab_pct_change(double estimate, double baseline, double *out);

// Upper tail of the chi-square distribution.
//
// # Safety
// `out` must be writable.
enum DidlabStatus didlab_chi_square_sf(double statistic, size_t dof, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIDLAB_H */
