/*
 * C interface to the gcam engine: CNN inference/training, GradCAM, and the
 * explanation-manipulation surgery toolkit.
 *
 * Objects are opaque handles created by gcam_*_create/load/... functions and
 * released with the matching gcam_*_free. Every fallible call returns a
 * gcam_status; on failure gcam_last_error() holds a message for the calling
 * thread until its next failing call.
 */
#ifndef GCAM_GCAM_H
#define GCAM_GCAM_H

#include <stddef.h>
#include <stdint.h>

#if defined(GCAM_BUILDING_LIBRARY)
#define GCAM_API __attribute__((visibility("default")))
#else
#define GCAM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum gcam_status {
    GCAM_OK = 0,
    GCAM_ERR_INVALID_ARGUMENT = 1,
    GCAM_ERR_DIMENSION = 2,
    GCAM_ERR_GRAPH = 3,
    GCAM_ERR_FORMAT = 4,
    GCAM_ERR_IO = 5,
    GCAM_ERR_SURGERY = 6,
    GCAM_ERR_UNSUPPORTED_ARCHITECTURE = 7,
    GCAM_ERR_TRAINING = 8,
    GCAM_ERR_INTERNAL = 9
} gcam_status;

typedef enum gcam_dtype { GCAM_F32 = 0, GCAM_F64 = 1 } gcam_dtype;

typedef enum gcam_technique {
    GCAM_NONE = 0,
    GCAM_T1 = 1,
    GCAM_T2 = 2,
    GCAM_T3 = 3,
    GCAM_T4 = 4
} gcam_technique;

typedef enum gcam_split { GCAM_SPLIT_TRAIN = 0, GCAM_SPLIT_VAL = 1 } gcam_split;

typedef struct gcam_model gcam_model;
typedef struct gcam_dataset gcam_dataset;
typedef struct gcam_report gcam_report;

GCAM_API const char* gcam_last_error(void);
GCAM_API const char* gcam_status_string(gcam_status status);

/* ---- models ---------------------------------------------------------- */

typedef struct gcam_model_info {
    gcam_dtype dtype;
    size_t input_channels, input_height, input_width;
    size_t channels;      /* K: featuremaps at the hook point */
    size_t a_height, a_width;
    size_t z_pixels;      /* N_Z */
    size_t class_count;
    gcam_technique technique; /* GCAM_NONE for unmodified models */
} gcam_model_info;

GCAM_API gcam_status gcam_model_build_minivgg(uint64_t seed, gcam_dtype dtype, gcam_model** out);
GCAM_API gcam_status gcam_model_load(const char* path, gcam_model** out);
GCAM_API gcam_status gcam_model_save(const gcam_model* model, const char* path);
GCAM_API gcam_status gcam_model_cast(const gcam_model* model, gcam_dtype dtype, gcam_model** out);
GCAM_API gcam_status gcam_model_info_get(const gcam_model* model, gcam_model_info* out);
GCAM_API void gcam_model_free(gcam_model* model);

/* Scores y for one input of input_channels*input_height*input_width values. */
GCAM_API gcam_status gcam_model_forward(const gcam_model* model, const double* input, size_t input_len,
                                        double* scores, size_t scores_len);

/* ---- datasets -------------------------------------------------------- */

GCAM_API gcam_status gcam_dataset_generate(uint64_t seed, size_t n, gcam_split split, gcam_dataset** out);
/* bitmap may be NULL to use the built-in 8x8 smiley. */
GCAM_API gcam_status gcam_dataset_apply_stickers(const gcam_dataset* ds, const uint8_t* bitmap, size_t height,
                                                 size_t width, size_t count, uint64_t seed, gcam_dataset** out);
GCAM_API size_t gcam_dataset_size(const gcam_dataset* ds);
/* Copies image `index` (1x32x32) into `pixels` and its label into `label`. */
GCAM_API gcam_status gcam_dataset_image(const gcam_dataset* ds, size_t index, double* pixels, size_t pixels_len,
                                        size_t* label);
GCAM_API void gcam_dataset_free(gcam_dataset* ds);

/* ---- training -------------------------------------------------------- */

typedef struct gcam_train_options {
    int epochs;
    double lr;
    size_t batch_size;
    uint64_t seed;
} gcam_train_options;

GCAM_API void gcam_train_options_default(gcam_train_options* options);
GCAM_API gcam_status gcam_train(const gcam_model* model, const gcam_dataset* train,
                                const gcam_train_options* options, gcam_model** out);
GCAM_API gcam_status gcam_accuracy(const gcam_model* model, const gcam_dataset* ds, double* out);

/* ---- surgery --------------------------------------------------------- */

typedef struct gcam_attack_config {
    double c_A, c_W, c_I, epsilon, c_G, c_F;
    uint64_t f_seed;
    const double* target; /* T2: target_height*target_width values in [0,1], or NULL */
    size_t target_height, target_width;
    const uint8_t* sticker; /* T4: 0/1 bitmap, or NULL for the built-in smiley */
    size_t sticker_height, sticker_width;
} gcam_attack_config;

GCAM_API gcam_status gcam_attack_config_default(gcam_technique technique, gcam_attack_config* out);
GCAM_API gcam_status gcam_attack(const gcam_model* model, gcam_technique technique, const gcam_attack_config* cfg,
                                 gcam_model** out);

/* ---- explanations ---------------------------------------------------- */

typedef struct gcam_explanation {
    size_t class_index;
    size_t height, width; /* heatmap extents (A's resolution) */
    int collapsed;        /* raw heatmap identically zero */
} gcam_explanation;

/* class_index < 0 explains the highest-scoring class. heatmap receives the
 * normalized map (height*width values). */
GCAM_API gcam_status gcam_explain(const gcam_model* model, const double* input, size_t input_len, long class_index,
                                  double* heatmap, size_t heatmap_len, gcam_explanation* info);

/* ---- raster I/O ------------------------------------------------------ */

/* base may be NULL (grayscale PNG); otherwise an RGB overlay is written. */
GCAM_API gcam_status gcam_write_heatmap_png(const double* heatmap, size_t height, size_t width, const double* base,
                                            size_t base_height, size_t base_width, size_t out_size,
                                            const char* path);
/* Reads a PNG as grayscale, bilinearly resized to size x size, clamped to [0,1]. */
GCAM_API gcam_status gcam_read_png_resized(const char* path, size_t size, double* out, size_t out_len);
/* Reads a sticker PNG (pixel > 127 -> 1). Pass bitmap = NULL to query the extents. */
GCAM_API gcam_status gcam_read_sticker_png(const char* path, uint8_t* bitmap, size_t capacity, size_t* height,
                                           size_t* width);
/* The built-in 8x8 smiley sticker; same query convention as above. */
GCAM_API gcam_status gcam_default_sticker(uint8_t* bitmap, size_t capacity, size_t* height, size_t* width);
/* Writes an 8-bit grayscale PNG of height*width values in [0,1] (clamped). */
GCAM_API gcam_status gcam_write_image_png(const double* pixels, size_t height, size_t width, const char* path);

/* ---- evaluation ------------------------------------------------------ */

typedef struct gcam_report_row {
    char model_tag[16];
    char dataset_tag[16];
    double accuracy;
    double score_drift;  /* NaN when empty */
    double heatmap_dist; /* NaN when empty */
    double zero_heatmap_fraction;
    double dominance_ratio; /* NaN when empty */
} gcam_report_row;

/* stickered may be NULL. All models must share a dtype. *violations receives
 * the number of hard score-bound violations (T1/T2 drift != 0, T3/T4 drift > epsilon). */
GCAM_API gcam_status gcam_evaluate(const gcam_model* original, const gcam_model* const* attacked, size_t n_attacked,
                                   const gcam_dataset* clean, const gcam_dataset* stickered, gcam_report** out,
                                   size_t* violations);
GCAM_API size_t gcam_report_row_count(const gcam_report* report);
GCAM_API gcam_status gcam_report_row_get(const gcam_report* report, size_t index, gcam_report_row* out);
GCAM_API gcam_status gcam_report_write_csv(const gcam_report* report, const char* path);
/* Text table and violation messages; owned by the report. */
GCAM_API const char* gcam_report_table(const gcam_report* report);
GCAM_API const char* gcam_report_violations(const gcam_report* report);
GCAM_API void gcam_report_free(gcam_report* report);

#ifdef __cplusplus
}
#endif

#endif /* GCAM_GCAM_H */
