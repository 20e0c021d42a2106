/* Copyright 2026 The qedft Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef QEDFT_QEDFT_H_
#define QEDFT_QEDFT_H_

#include <stddef.h>
#include <stdint.h>

#if defined(QEDFT_BUILDING_LIBRARY)
#define QEDFT_API __attribute__((visibility("default")))
#else
#define QEDFT_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qedft_status {
  QEDFT_OK = 0,
  QEDFT_ERR_INVALID_ARGUMENT = 1,
  QEDFT_ERR_CONFIG = 2,
  QEDFT_ERR_UNSUPPORTED = 3,
  QEDFT_ERR_SOLVER = 4,
  QEDFT_ERR_IO = 5,
  QEDFT_ERR_INTERNAL = 6
} qedft_status;

typedef struct qedft_config qedft_config;
typedef struct qedft_result qedft_result;

typedef struct qedft_run_options {
  int workers;          /* <= 0 means 1 */
  int has_seed;         /* nonzero: seed overrides the config */
  uint64_t seed;
  const char* output;   /* NULL: the config's output directory */
} qedft_run_options;

/* Library version string, e.g. "0.1.0". */
QEDFT_API const char* qedft_version(void);

/* Message of the last failed call on this thread ("" when none). */
QEDFT_API const char* qedft_last_error(void);

QEDFT_API const char* qedft_status_name(qedft_status s);

QEDFT_API qedft_status qedft_config_load(const char* path, qedft_config** out);
QEDFT_API qedft_status qedft_config_parse(const char* json_text, qedft_config** out);
QEDFT_API void qedft_config_free(qedft_config* cfg);

/* Method name ("harris-ate", ...). Valid while cfg lives. */
QEDFT_API const char* qedft_config_method(const qedft_config* cfg);
QEDFT_API int qedft_config_has_scan(const qedft_config* cfg);

/* 16 hex digits plus NUL; len must be at least 17. */
QEDFT_API qedft_status qedft_config_hash(const qedft_config* cfg, char* buf, size_t len);

QEDFT_API void qedft_run_options_init(qedft_run_options* opts);

/* Runs the experiment (or the scan) and writes artifacts. opts may be NULL. */
QEDFT_API qedft_status qedft_run(const qedft_config* cfg, const qedft_run_options* opts, qedft_result** out);
QEDFT_API qedft_status qedft_scan(const qedft_config* cfg, const qedft_run_options* opts, qedft_result** out);

/* summary.json content. Valid while result lives. */
QEDFT_API const char* qedft_result_json(const qedft_result* result);

/* Looks up a number by JSON pointer, e.g. "/result/fidelity_final". */
QEDFT_API qedft_status qedft_result_number(const qedft_result* result, const char* pointer, double* value);
QEDFT_API void qedft_result_free(qedft_result* result);

/* "<value> <unit>" in internal units for a dimension (length,
 * inverse-length, time, energy, density, angle). */
QEDFT_API qedft_status qedft_parse_quantity(const char* text, const char* dimension, double* value);

#ifdef __cplusplus
}
#endif

#endif  /* QEDFT_QEDFT_H_ */
