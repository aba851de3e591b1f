/* SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the mmreg library. All strings are UTF-8. Strings returned
 * through `char**` are owned by the caller and released with mmreg_free_string.
 * On any non-OK status, mmreg_last_error() describes the failure for the
 * calling thread.
 */
#ifndef MMREG_H
#define MMREG_H

#include <stddef.h>

#if defined(_WIN32)
#define MMREG_API __declspec(dllexport)
#else
#define MMREG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mmreg_status {
    MMREG_OK = 0,
    MMREG_ERR_VALIDATION = 1,
    MMREG_ERR_CHECK_FAILED = 2,
    MMREG_ERR_IO = 3,
    MMREG_ERR_NUMERIC = 4,
    MMREG_ERR_INTERNAL = 5
} mmreg_status;

typedef struct mmreg_config mmreg_config;

MMREG_API const char* mmreg_version(void);
MMREG_API const char* mmreg_last_error(void);
MMREG_API void mmreg_free_string(char* s);

/* Config handles. */
MMREG_API mmreg_status mmreg_config_default(mmreg_config** out);
MMREG_API mmreg_status mmreg_config_parse(const char* text, mmreg_config** out);
MMREG_API mmreg_status mmreg_config_load(const char* path, mmreg_config** out);
MMREG_API mmreg_status mmreg_config_set(mmreg_config* cfg, const char* key, const char* value);
MMREG_API mmreg_status mmreg_config_render(const mmreg_config* cfg, char** out);
MMREG_API void mmreg_config_free(mmreg_config* cfg);

/* Pipeline commands. Each writes into the configured output directory and
 * returns its JSON report. The loaded config text (or the rendered default)
 * is snapshotted into the output directory by every command. */
MMREG_API mmreg_status mmreg_gen_data(const mmreg_config* cfg, char** report_json);
MMREG_API mmreg_status mmreg_pretrain(const mmreg_config* cfg, char** report_json);
MMREG_API mmreg_status mmreg_train_joint(const mmreg_config* cfg, int baseline, char** report_json);
MMREG_API mmreg_status mmreg_eval(const mmreg_config* cfg, char** report_json);
/* MMREG_ERR_CHECK_FAILED when any check fails; the report is still returned. */
MMREG_API mmreg_status mmreg_theory(const mmreg_config* cfg, char** report_json);
MMREG_API mmreg_status mmreg_probe(const mmreg_config* cfg, char** report_json);

/* Stateless helpers. out_metrics receives r2, mse, mae, gm, smape. */
MMREG_API mmreg_status mmreg_metrics(const double* y, const double* yhat, size_t n, double out_metrics[5]);
MMREG_API mmreg_status mmreg_minnorm_two(const double* g1, const double* g2, size_t n, double* alpha_mm,
                                         double* alpha_uni);
MMREG_API mmreg_status mmreg_margin_at(size_t t, double m0, double beta, size_t t_n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* MMREG_H */
