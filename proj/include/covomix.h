/* C interface to the covomix dialogue synthesis toolkit.
 *
 * All work goes through an opaque context that carries a flat key = value
 * configuration and the last error message. Commands return covomix_status;
 * the numeric values double as process exit codes (0 ok, 1 usage, 2 data,
 * 3 numeric failure).
 */

#ifndef COVOMIX_H
#define COVOMIX_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct covomix_ctx covomix_ctx;

typedef enum covomix_status {
  COVOMIX_OK = 0,
  COVOMIX_ERR_USAGE = 1,
  COVOMIX_ERR_DATA = 2,
  COVOMIX_ERR_NUMERIC = 3
} covomix_status;

const char* covomix_version(void);

/* Context lifecycle. covomix_create returns NULL only on allocation failure. */
covomix_ctx* covomix_create(void);
void covomix_destroy(covomix_ctx* ctx);

/* Message for the most recent failing call on this context ("" if none). */
const char* covomix_last_error(const covomix_ctx* ctx);

/* Configuration. Getters return NULL for missing keys. The returned pointer
 * stays valid until the next call on the same context. */
covomix_status covomix_config_set(covomix_ctx* ctx, const char* key, const char* value);
const char* covomix_config_get(covomix_ctx* ctx, const char* key);
covomix_status covomix_config_load(covomix_ctx* ctx, const char* path);
covomix_status covomix_config_dump(covomix_ctx* ctx, const char* path);

/* Pipeline commands; see the project README for the keys each one reads. */
covomix_status covomix_prepare(covomix_ctx* ctx);
covomix_status covomix_fit_codebook(covomix_ctx* ctx);
covomix_status covomix_train_t2s(covomix_ctx* ctx);
covomix_status covomix_train_acoustic(covomix_ctx* ctx);
covomix_status covomix_synth(covomix_ctx* ctx);
covomix_status covomix_voice_convert(covomix_ctx* ctx);
covomix_status covomix_eval(covomix_ctx* ctx);

#ifdef __cplusplus
}
#endif

#endif /* COVOMIX_H */
