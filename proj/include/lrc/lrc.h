/*
 * C interface to the lrc compression toolkit.
 *
 * Objects are opaque handles owned by the caller and released with the
 * matching *_free function. Every fallible call returns an lrc_status; on
 * failure lrc_last_error() describes what went wrong on the calling thread.
 * Strings returned through char** out-parameters are heap allocated and must
 * be released with lrc_string_free().
 */
#ifndef LRC_LRC_H
#define LRC_LRC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(LRC_BUILDING)
#    define LRC_API __declspec(dllexport)
#  else
#    define LRC_API __declspec(dllimport)
#  endif
#else
#  define LRC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lrc_status {
  LRC_OK = 0,
  LRC_ERR_INVALID_ARGUMENT = 1,
  LRC_ERR_IO = 2,
  LRC_ERR_FORMAT = 3,  /* malformed store, config, network or label file */
  LRC_ERR_DATA = 4,    /* shape mismatch, name collision, empty selection, missing weight */
  LRC_ERR_NUMERIC = 5, /* NaN/Inf input or SVD non-convergence */
  LRC_ERR_INTERNAL = 6
} lrc_status;

/* Fine-grained failure kinds, reported by lrc_last_error_kind(). */
typedef enum lrc_error_kind {
  LRC_KIND_NONE = -1,
  LRC_KIND_INVALID_ARGUMENT = 0,
  LRC_KIND_IO,
  LRC_KIND_TRUNCATED_HEADER,
  LRC_KIND_TRUNCATED_MANIFEST,
  LRC_KIND_MALFORMED_MANIFEST,
  LRC_KIND_UNSUPPORTED_DTYPE,
  LRC_KIND_TRUNCATED_BLOB,
  LRC_KIND_LENGTH_MISMATCH,
  LRC_KIND_NAME_COLLISION,
  LRC_KIND_SHAPE_MISMATCH,
  LRC_KIND_NON_FINITE,
  LRC_KIND_NON_CONVERGENCE,
  LRC_KIND_EMPTY_SELECTION,
  LRC_KIND_PARSE_ERROR,
  LRC_KIND_MISSING_WEIGHT
} lrc_error_kind;

typedef struct lrc_store lrc_store;

LRC_API const char* lrc_version(void);
LRC_API const char* lrc_last_error(void);
LRC_API lrc_error_kind lrc_last_error_kind(void);
LRC_API void lrc_string_free(char* s);

/* Weight stores (.wstore files). */
LRC_API lrc_status lrc_store_create(lrc_store** out);
LRC_API lrc_status lrc_store_load(const char* path, lrc_store** out);
LRC_API lrc_status lrc_store_save(const lrc_store* store, const char* path, uint64_t* bytes_written);
LRC_API void lrc_store_free(lrc_store* store);

/* role: "conv-weight", "bias", "other" or "svd-factor"; NULL means "other". */
LRC_API lrc_status lrc_store_add(lrc_store* store, const char* name, const int64_t* shape, size_t rank,
                                 const float* data, const char* role);
LRC_API lrc_status lrc_store_set_metadata(lrc_store* store, const char* key, const char* value);
LRC_API size_t lrc_store_size(const lrc_store* store);
/* Returned name/role pointers stay valid until the store is modified or freed. */
LRC_API lrc_status lrc_store_entry(const lrc_store* store, size_t index, const char** name, const char** role,
                                   size_t* rank);
LRC_API lrc_status lrc_store_entry_shape(const lrc_store* store, size_t index, int64_t* shape, size_t capacity);
LRC_API lrc_status lrc_store_entry_data(const lrc_store* store, size_t index, const float** data, size_t* count);
LRC_API lrc_status lrc_store_serialized_size(const lrc_store* store, uint64_t* bytes);

/* Manifest, per-tensor statistics, factored groups and totals. Either output may be NULL. */
LRC_API lrc_status lrc_store_inspect(const lrc_store* store, char** json, char** text);

/* Runs the prune/SVD pipeline described by config_json. report_text is the
 * aligned plain-text table; either report output may be NULL. */
LRC_API lrc_status lrc_compress(const lrc_store* in, const char* config_json, lrc_store** out,
                                char** report_json, char** report_text);

/* Evaluates YOLO-format label/prediction directories at the given IoU.
 * eleven_point selects 11-point instead of all-points interpolation. */
LRC_API lrc_status lrc_evaluate_dirs(const char* labels_dir, const char* preds_dir, double iou_threshold,
                                     int eleven_point, char** report_json);

/* Times forward passes of network_json over the given weights; runs >= 3, warmup >= 1. */
LRC_API lrc_status lrc_benchmark(const char* network_json, const lrc_store* weights, int64_t channels,
                                 int64_t height, int64_t width, int runs, int warmup, char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* LRC_LRC_H */
