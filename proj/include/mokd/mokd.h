/* Copyright 2026 The MOKD Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef MOKD_MOKD_H_
#define MOKD_MOKD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MOKD_API __declspec(dllexport)
#else
#define MOKD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit statuses. */
typedef enum mokd_status {
  MOKD_OK = 0,
  MOKD_ERR_USAGE = 1,
  MOKD_ERR_CONFIG = 2,
  MOKD_ERR_SHAPE = 3,
  MOKD_ERR_PARAMETER = 4,
  MOKD_ERR_NUMERIC = 5,
  MOKD_ERR_STRUCTURAL = 6,
  MOKD_ERR_FORMAT = 7,
  MOKD_ERR_IO = 8,
  MOKD_ERR_CORRUPTION = 9,
  MOKD_ERR_INCOMPATIBLE = 10,
  MOKD_ERR_INTERNAL = 11
} mokd_status;

/* Opaque configuration: an ordered list of key assignments over the
 * defaults, resolved when read or run. */
typedef struct mokd_config mokd_config;

/* Receives one line of output without a trailing newline. */
typedef void (*mokd_output_fn)(const char* line, void* user);

typedef struct mokd_checkpoint_info {
  uint32_t version;
  uint64_t config_hash;
  int64_t step;
  int64_t epoch;
  int64_t step_in_epoch;
  uint64_t seed;
  size_t tensor_count;
} mokd_checkpoint_info;

MOKD_API const char* mokd_version(void);
MOKD_API const char* mokd_status_string(mokd_status status);

/* Message of the last failure on the calling thread; empty after success. */
MOKD_API const char* mokd_last_error(void);

MOKD_API mokd_status mokd_config_create(mokd_config** out);
MOKD_API void mokd_config_destroy(mokd_config* config);

/* Appends the assignments of an INI file. Later assignments win. */
MOKD_API mokd_status mokd_config_load_file(mokd_config* config, const char* path);

/* Appends one dotted-key assignment after checking the key and its range. */
MOKD_API mokd_status mokd_config_set(mokd_config* config, const char* key, const char* value);

/* Text getters copy a NUL-terminated string into buf when it fits and
 * always report the required size (including the NUL) through needed. */
MOKD_API mokd_status mokd_config_get(const mokd_config* config, const char* key, char* buf, size_t capacity,
                                     size_t* needed);
MOKD_API mokd_status mokd_config_to_ini(const mokd_config* config, char* buf, size_t capacity, size_t* needed);

/* Full validation, including cross-field rules. */
MOKD_API mokd_status mokd_config_validate(const mokd_config* config);

MOKD_API size_t mokd_config_key_count(void);
MOKD_API const char* mokd_config_key_name(size_t index);

MOKD_API size_t mokd_command_count(void);
MOKD_API const char* mokd_command_name(size_t index);
MOKD_API const char* mokd_command_usage(const char* command);

/* Runs pretrain, eval-knn, eval-linear, analyze-mad, consistency or
 * export-embeddings. resume may be NULL; force accepts checkpoints written
 * under a different config. Either callback may be NULL. */
MOKD_API mokd_status mokd_run_command(const mokd_config* config, const char* command, const char* resume, int force,
                                      mokd_output_fn out, mokd_output_fn err, void* user);

MOKD_API mokd_status mokd_checkpoint_read_info(const char* path, mokd_checkpoint_info* out);

#ifdef __cplusplus
}
#endif

#endif /* MOKD_MOKD_H_ */
