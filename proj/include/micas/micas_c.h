#ifndef MICAS_C_H
#define MICAS_C_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MICAS_API __declspec(dllexport)
#else
#define MICAS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum micas_status {
  MICAS_OK = 0,
  MICAS_ERR_DOMAIN = 1,
  MICAS_ERR_CONTRACT = 2,
  MICAS_ERR_NUMERIC = 3,
  MICAS_ERR_CONFIG = 4,
  MICAS_ERR_IO = 5,
  MICAS_ERR_FORMAT = 6,
  MICAS_ERR_INVALID_ARGUMENT = 7,
  MICAS_ERR_INTERNAL = 8
} micas_status;

/* Message of the last failing call on this thread; empty after success. */
MICAS_API const char* micas_last_error(void);
MICAS_API const char* micas_status_name(micas_status status);
MICAS_API const char* micas_version(void);

/* Functions that fill a caller buffer write at most `capacity` bytes including
 * the terminating NUL and always report the full length (without NUL) in
 * `*needed` when it is non-null. A short buffer is not an error. */

/* ---- configuration ---- */
typedef struct micas_config micas_config;

MICAS_API micas_status micas_config_create(const char* profile, micas_config** out);
MICAS_API micas_status micas_config_load(const char* path, micas_config** out);
MICAS_API micas_status micas_config_set(micas_config* cfg, const char* key, const char* value);
MICAS_API micas_status micas_config_get(const micas_config* cfg, const char* key, char* buffer,
                                        size_t capacity, size_t* needed);
MICAS_API micas_status micas_config_serialize(const micas_config* cfg, char* buffer,
                                              size_t capacity, size_t* needed);
MICAS_API micas_status micas_config_hash(const micas_config* cfg, uint64_t* out);
MICAS_API micas_status micas_config_validate(const micas_config* cfg);
MICAS_API void micas_config_destroy(micas_config* cfg);

/* ---- point clouds ---- */
typedef struct micas_cloud micas_cloud;

/* `xyz` holds `count` row-major triples. */
MICAS_API micas_status micas_cloud_create(const double* xyz, size_t count, micas_cloud** out);
/* Reads MICASPC1 files, or "x y z [label]" text when the name ends in .xyz. */
MICAS_API micas_status micas_cloud_load(const char* path, micas_cloud** out);
MICAS_API micas_status micas_cloud_save(const micas_cloud* cloud, const char* path);
MICAS_API micas_status micas_cloud_size(const micas_cloud* cloud, size_t* out);
/* Copies 3 * size doubles into `xyz`; `capacity` counts doubles. */
MICAS_API micas_status micas_cloud_points(const micas_cloud* cloud, double* xyz, size_t capacity);
MICAS_API void micas_cloud_destroy(micas_cloud* cloud);

/* Symmetric mean squared nearest-neighbour distance. */
MICAS_API micas_status micas_chamfer(const micas_cloud* a, const micas_cloud* b, double* out);
/* Farthest point sampling from index 0; writes `count` indices. */
MICAS_API micas_status micas_fps(const micas_cloud* cloud, size_t count, size_t* indices);

/* ---- pipeline commands (all files live in `run_dir`) ---- */
typedef struct micas_epoch {
  long epoch;
  double lr;
  double tau;
  double loss;
} micas_epoch;

typedef void (*micas_epoch_callback)(void* user, const micas_epoch* epoch);

typedef struct micas_ranker_summary {
  uint64_t sampler_hash_before;
  uint64_t sampler_hash_after;
  uint64_t params_hash;
  int label_cache_reused;
  double heldout_spearman;
} micas_ranker_summary;

MICAS_API micas_status micas_gen_data(const micas_config* cfg, const char* run_dir);
MICAS_API micas_status micas_train_sampler(const micas_config* cfg, const char* run_dir,
                                           micas_epoch_callback on_epoch, void* user,
                                           uint64_t* params_hash);
MICAS_API micas_status micas_train_ranker(const micas_config* cfg, const char* run_dir,
                                          micas_epoch_callback on_epoch, void* user,
                                          micas_ranker_summary* summary);
/* `ablations` holds entries like "fps,random" or "all"; none means fps,random. */
MICAS_API micas_status micas_eval(const micas_config* cfg, const char* run_dir,
                                  const char* const* ablations, size_t ablation_count);
MICAS_API micas_status micas_report(const char* run_dir, char* buffer, size_t capacity,
                                    size_t* needed);

/* Hash of a MICASNN1 parameter file. */
MICAS_API micas_status micas_params_file_hash(const char* path, uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif
