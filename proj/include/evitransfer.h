/* C interface to the evidence-transfer detection library. */
#ifndef EVITRANSFER_H
#define EVITRANSFER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define EVT_API __declspec(dllexport)
#else
#define EVT_API __attribute__((visibility("default")))
#endif

/* Status codes double as process exit codes for the command-line tool. */
typedef enum evt_status {
  EVT_OK = 0,
  EVT_ERR_IO = 1,
  EVT_ERR_CONFIG = 2,
  EVT_ERR_DATA = 3,
  EVT_ERR_NUMERIC = 4,
  EVT_ERR_INTERNAL = 5
} evt_status;

typedef enum evt_detector {
  EVT_DETECTOR_KMEANS = 0,
  EVT_DETECTOR_AGGLOMERATIVE = 1,
  EVT_DETECTOR_OCSVM = 2
} evt_detector;

typedef struct evt_config evt_config;
typedef struct evt_result evt_result;

EVT_API const char* evt_version(void);

/* Message of the most recent failure on the calling thread, or "". */
EVT_API const char* evt_last_error(void);

EVT_API evt_status evt_config_default(evt_config** out);
EVT_API evt_status evt_config_load(const char* path, evt_config** out);
EVT_API evt_status evt_config_from_json(const char* json_text, evt_config** out);
EVT_API void evt_config_free(evt_config* config);

EVT_API evt_status evt_config_set_seed(evt_config* config, uint64_t seed);
EVT_API evt_status evt_config_set_output_dir(evt_config* config, const char* dir);
EVT_API evt_status evt_config_set_detector(evt_config* config, evt_detector detector);
EVT_API evt_status evt_config_set_lambda(evt_config* config, double lambda);
EVT_API evt_status evt_config_set_screening(evt_config* config, int enabled);

/* Both return a malloc'ed string that the caller releases with evt_string_free. */
EVT_API evt_status evt_config_to_json(const evt_config* config, char** out);
EVT_API evt_status evt_config_hash(const evt_config* config, char** out);
EVT_API void evt_string_free(char* s);

/* Each verb runs the experiment and writes its reports under the output dir. */
EVT_API evt_status evt_run(const evt_config* config, evt_result** out);
EVT_API evt_status evt_rotate(const evt_config* config, evt_result** out);
EVT_API evt_status evt_sampling_compare(const evt_config* config, evt_result** out);
EVT_API evt_status evt_screen(const evt_config* config, evt_result** out);

/* Writes the configured synthetic corpus as a feature file and event catalog. */
EVT_API evt_status evt_synth(const evt_config* config, const char* feature_path,
                             const char* catalog_path);

EVT_API size_t evt_result_cell_count(const evt_result* result);
EVT_API const char* evt_result_cell_name(const evt_result* result, size_t cell);

/* Looks up a report value such as "transfer.micro.f1" or "screening.<source>.entropy_ratio". */
EVT_API evt_status evt_result_metric(const evt_result* result, size_t cell, const char* key,
                                     double* out);
EVT_API const char* evt_result_report_path(const evt_result* result);
EVT_API void evt_result_free(evt_result* result);

#ifdef __cplusplus
}
#endif

#endif
