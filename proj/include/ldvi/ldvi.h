#ifndef LDVI_LDVI_H
#define LDVI_LDVI_H

/* C interface to the training engine. Plans, configs and run records cross
 * the boundary as JSON text. Strings returned through char** out-parameters
 * are owned by the caller and released with ldvi_string_free. Every call
 * returning ldvi_status leaves a message for ldvi_last_error on failure. */

#include <stddef.h>

#if defined(_WIN32)
#define LDVI_API __declspec(dllexport)
#else
#define LDVI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ldvi_status {
  LDVI_OK = 0,
  LDVI_INVALID_ARGUMENT = 1,
  LDVI_IO_ERROR = 2,
  /* The call ran, but at least one run ended diverged or failed. */
  LDVI_RUN_INCOMPLETE = 3,
  LDVI_INTERNAL_ERROR = 4
} ldvi_status;

typedef struct ldvi_session ldvi_session;

/* Receives each run record (one JSON line) as soon as it finishes. */
typedef void (*ldvi_record_callback)(const char* record_json, void* user);

LDVI_API const char* ldvi_version(void);

/* Message of the last failing call on this thread; "" if none. */
LDVI_API const char* ldvi_last_error(void);

LDVI_API void ldvi_string_free(char* s);

/* data_dir holds the benchmark CSV files; NULL means "data". */
LDVI_API ldvi_status ldvi_session_create(const char* data_dir, ldvi_session** out);
LDVI_API void ldvi_session_destroy(ldvi_session* session);

/* Chain-parallel worker threads per run; 0 keeps each plan's own value. */
LDVI_API ldvi_status ldvi_session_set_threads(ldvi_session* session, size_t threads);

/* Expands a grid config into a JSON array of plans. */
LDVI_API ldvi_status ldvi_expand_config(ldvi_session* session, const char* config_json, char** plans_json);

/* Trains one plan (a JSON object as produced by ldvi_expand_config; missing
 * keys take their defaults). */
LDVI_API ldvi_status ldvi_train(ldvi_session* session, const char* plan_json, char** record_json);

/* Runs every plan of a config in order. Records are appended to out_path
 * (NDJSON) when it is not NULL and passed to callback when it is not NULL.
 * completed and total may be NULL. */
LDVI_API ldvi_status ldvi_run_grid(ldvi_session* session, const char* config_json, const char* out_path,
                                   ldvi_record_callback callback, void* user, size_t* completed, size_t* total);

/* Renders best-learning-rate tables from NDJSON records. */
LDVI_API ldvi_status ldvi_report(const char* ndjson, char** text, char** csv);
LDVI_API ldvi_status ldvi_report_file(const char* path, char** text, char** csv);

/* Runs the fast oracle and invariant suite. results_json is an array of
 * {name, passed, value, limit, detail}. */
LDVI_API ldvi_status ldvi_selfcheck(char** results_json, int* all_passed);

/* Trains plain VI on the four benchmark models and compares with the
 * published values. options_json may be NULL or set steps, seeds,
 * eval_samples, pretrain_steps and models. summary_json is an array of
 * {model, published, mean, sd, seeds, difference, within}; all_within is 1
 * when every difference is at most 2 nats. */
LDVI_API ldvi_status ldvi_reproduce_plainvi(ldvi_session* session, const char* options_json, const char* out_path,
                                            ldvi_record_callback callback, void* user, char** summary_json,
                                            int* all_within);

#ifdef __cplusplus
}
#endif

#endif
