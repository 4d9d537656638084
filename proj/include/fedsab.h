/* fedsab: federated-learning backdoor simulator, C API.
 *
 * All functions return fedsab_status (FEDSAB_OK on success); on failure
 * fedsab_last_error() holds a message for the calling thread. Handles are
 * opaque and freed with their matching *_free function. Strings returned by
 * the library are freed with fedsab_string_free.
 */
#ifndef FEDSAB_H
#define FEDSAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FEDSAB_API __declspec(dllexport)
#else
#define FEDSAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fedsab_status {
  FEDSAB_OK = 0,
  FEDSAB_ERR_IO = 1,
  FEDSAB_ERR_FORMAT = 2,
  FEDSAB_ERR_CONFIG = 3,
  FEDSAB_ERR_INPUT = 4,
  FEDSAB_ERR_USAGE = 5,
  FEDSAB_ERR_TRAINING = 6,
  FEDSAB_ERR_PROTOCOL = 7,
  FEDSAB_ERR_INTERNAL = 8
} fedsab_status;

typedef struct fedsab_config fedsab_config; /* opaque experiment configuration */

FEDSAB_API const char* fedsab_version(void);

/* Message for the last failing call on this thread; empty string if none. */
FEDSAB_API const char* fedsab_last_error(void);

/* Bounds the worker threads used inside a run; never changes results. */
FEDSAB_API void fedsab_set_threads(int n);

FEDSAB_API fedsab_status fedsab_config_load(const char* path, fedsab_config** out);
FEDSAB_API fedsab_status fedsab_config_parse(const char* json_text, const char* base_dir,
                                             fedsab_config** out);
/* Merges a JSON object of the same schema (e.g. {"seed": 7}) onto the config. */
FEDSAB_API fedsab_status fedsab_config_override(fedsab_config* cfg, const char* overrides_json);
FEDSAB_API char* fedsab_config_canonical(const fedsab_config* cfg);
FEDSAB_API char* fedsab_config_hash(const fedsab_config* cfg);
FEDSAB_API void fedsab_config_free(fedsab_config* cfg);
FEDSAB_API void fedsab_string_free(char* s);

/* Runs the experiment into out_dir (rounds.csv, model and stego artifacts,
 * manifest.json). Refuses a non-empty out_dir unless overwrite != 0. */
FEDSAB_API fedsab_status fedsab_run(const fedsab_config* cfg, const char* out_dir, int overwrite);

/* Joins rounds.csv across n run directories into one CSV. */
FEDSAB_API fedsab_status fedsab_compare(const char* const* run_dirs, size_t n,
                                        const char* out_csv);

/* STRIP entropy histograms for the run's model; model_path may be NULL for
 * the final snapshot. intersection_out may be NULL. */
FEDSAB_API fedsab_status fedsab_strip_eval(const char* run_dir, const char* model_path,
                                           int cohort_size, const char* out_dir,
                                           double* intersection_out);

/* Saliency heatmaps (and in-patch mass CSV for patch attacks). class_index < 0
 * selects the run's attack target; triggered != 0 applies the run's trigger. */
FEDSAB_API fedsab_status fedsab_gradcam_dump(const char* run_dir, const char* model_path,
                                             int count, int class_index, int triggered,
                                             const char* out_dir);

/* Perceptual-hash distance distributions for the named attacks (comma list,
 * e.g. "sab,badnets,dba") against the run's test images. */
FEDSAB_API fedsab_status fedsab_phash_eval_run(const char* run_dir, const char* attacks_csv,
                                               int count, const char* out_dir);

/* Directory mode: original and poisoned cohorts of PGM/PPM files. */
FEDSAB_API fedsab_status fedsab_phash_eval_dirs(const char* original_dir,
                                                const char* const* poisoned_dirs, size_t n,
                                                const char* out_dir);

/* 64-bit perceptual hash of one PGM/PPM image. */
FEDSAB_API fedsab_status fedsab_phash64_file(const char* pnm_path, uint64_t* hash_out);
FEDSAB_API int fedsab_phash_distance(uint64_t a, uint64_t b);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* FEDSAB_H */
