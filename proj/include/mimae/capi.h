/* C interface to the MI-MAE training library.
 *
 * All functions return a mimae_status; on any non-OK status a human-readable
 * message is available from mimae_last_error() (thread-local). Handles are
 * opaque; free them with their matching *_free function.
 */
#ifndef MIMAE_CAPI_H
#define MIMAE_CAPI_H

#include <stddef.h>

#if defined(_WIN32)
#define MIMAE_API __declspec(dllexport)
#else
#define MIMAE_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mimae_status {
  MIMAE_OK = 0,
  MIMAE_ERR_INVALID_ARGUMENT = 1,
  MIMAE_ERR_CONFIG = 2,
  MIMAE_ERR_IO = 3,
  MIMAE_ERR_FORMAT = 4,
  MIMAE_ERR_NUMERIC = 5,
  MIMAE_ERR_INTERNAL = 6
} mimae_status;

typedef struct mimae_config mimae_config;

typedef struct mimae_epoch_stats {
  long long epoch;
  long long step;
  float lr;
  float rec;
  float max_mi;
  float min_mi;
  float approx;
  int gate_open;
} mimae_epoch_stats;

typedef void (*mimae_progress_fn)(const mimae_epoch_stats* stats, void* user_data);
typedef void (*mimae_key_fn)(const char* key, const char* value, const char* doc, void* user_data);

MIMAE_API const char* mimae_version(void);
MIMAE_API const char* mimae_status_name(mimae_status status);
/* message of the most recent failure on this thread; never NULL */
MIMAE_API const char* mimae_last_error(void);

/* configuration: documented `key = value` entries with defaults */
MIMAE_API mimae_status mimae_config_create(mimae_config** out);
MIMAE_API mimae_status mimae_config_load(const char* path, mimae_config** out);
MIMAE_API mimae_status mimae_config_set(mimae_config* cfg, const char* key, const char* value);
MIMAE_API mimae_status mimae_config_get(const mimae_config* cfg, const char* key, char* buf,
                                        size_t buf_len);
MIMAE_API mimae_status mimae_config_keys(const mimae_config* cfg, mimae_key_fn fn, void* user_data);
MIMAE_API mimae_status mimae_config_save(const mimae_config* cfg, const char* path);
MIMAE_API void mimae_config_free(mimae_config* cfg);

/* pipeline entry points (the CLI subcommands) */
MIMAE_API mimae_status mimae_gen_data(const mimae_config* cfg);
MIMAE_API mimae_status mimae_pretrain(const mimae_config* cfg, mimae_progress_fn progress,
                                      void* user_data);
MIMAE_API mimae_status mimae_probe(const mimae_config* cfg, float* accuracy_out);
/* writes the sandwich CSV; *all_pass_out is 1 when every rho met both bounds */
MIMAE_API mimae_status mimae_mi_bench(const mimae_config* cfg, int* all_pass_out);
MIMAE_API mimae_status mimae_plot(const mimae_config* cfg);

#ifdef __cplusplus
}
#endif

#endif /* MIMAE_CAPI_H */
