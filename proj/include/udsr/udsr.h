/* udsr — unpaired depth super-resolution pipeline.
 *
 * C API over the core library: opaque handles, integer status codes.
 * Functions return UDSR_OK (0) on success; on failure they return a
 * nonzero status and udsr_last_error() describes what went wrong
 * (thread-local, valid until the next call on the same thread).
 *
 * Depth rasters are 16-bit grayscale PNGs holding millimeters, 0 = hole.
 * RGB images are 8-bit RGB PNGs. Option strings are JSON documents; pass
 * NULL anywhere a default configuration is acceptable.
 */

#ifndef UDSR_H
#define UDSR_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef UDSR_API
#if defined(_WIN32)
#define UDSR_API __declspec(dllexport)
#else
#define UDSR_API __attribute__((visibility("default")))
#endif
#endif

typedef enum udsr_status {
  UDSR_OK = 0,
  UDSR_ERR_RUNTIME = 1,
  UDSR_ERR_USAGE = 2,
  UDSR_ERR_CONFIG = 3
} udsr_status;

UDSR_API const char* udsr_version(void);
UDSR_API const char* udsr_last_error(void);

/* Caps internal data-parallel workers. n <= 0 restores the default. */
UDSR_API void udsr_set_threads(int n);

/* ---- depth rasters ---- */

typedef struct udsr_depth udsr_depth;

UDSR_API udsr_depth* udsr_depth_load(const char* png_path);
UDSR_API udsr_depth* udsr_depth_create(int width, int height,
                                       const float* mm_values);
UDSR_API int udsr_depth_save(const udsr_depth* d, const char* png_path);
UDSR_API void udsr_depth_free(udsr_depth* d);
UDSR_API int udsr_depth_width(const udsr_depth* d);
UDSR_API int udsr_depth_height(const udsr_depth* d);
UDSR_API float udsr_depth_get(const udsr_depth* d, int x, int y);
UDSR_API udsr_depth* udsr_depth_bicubic_upsample(const udsr_depth* d, int factor);

/* ---- evaluation reports ---- */

typedef struct udsr_report udsr_report;

UDSR_API udsr_report* udsr_evaluate(const udsr_depth* pred, const udsr_depth* gt,
                                    const udsr_depth* input_lq);
/* field: rmse, rmse_h, rmse_d, mae, mae_h, mae_d, mse_v, mae_v,
 * n_total, n_h, n_d. Returns NaN for an unknown field. */
UDSR_API double udsr_report_value(const udsr_report* r, const char* field);
/* Write the CSV row (optionally with header line) or the JSON object into
 * buf; returns the number of bytes that would be written (snprintf style). */
UDSR_API int udsr_report_csv(const udsr_report* r, int with_header, char* buf,
                             size_t cap);
UDSR_API int udsr_report_json(const udsr_report* r, char* buf, size_t cap);
UDSR_API void udsr_report_free(udsr_report* r);

/* ---- dataset pipeline (file based) ---- */

/* Renders synthetic RGB-D scenes under out_dir/scenes/<scene>/<frame>.*.
 * options_json keys: frames_per_scene, noise_coeff_mm, quant_step_mm,
 * grazing_nz_threshold, blob_rate, downsample_factor, planes, spheres,
 * boxes. */
UDSR_API int udsr_synth(const char* out_dir, int num_scenes, int width,
                        int height, uint64_t seed, const char* options_json);

/* Scene-disjoint split assignment over out_dir/scenes; writes the manifest. */
UDSR_API int udsr_split(const char* data_dir, double train_frac, double val_frac,
                        double test_frac, uint64_t seed, const char* manifest_out);

/* Applies the sensor degradation model to one depth PNG. */
UDSR_API int udsr_degrade(const char* depth_png_in, const char* depth_png_out,
                          uint64_t seed, const char* options_json);

/* SSIM patch filter over (lq, hqdown) pairs of a manifest; keeps frames
 * with ssim > threshold and no rendering-introduced holes. */
UDSR_API int udsr_filter(const char* manifest_in, const char* data_dir,
                         const char* manifest_out, double ssim_threshold,
                         int* kept, int* total);

UDSR_API int udsr_upsample(const char* depth_png_in, const char* depth_png_out,
                           int factor);

/* ---- training phases ----
 * config_json_path and net_config_path may be NULL for defaults. Logs are
 * CSV (step, lr, loss components); pass NULL to skip logging. */

UDSR_API int udsr_train_guidance(const char* manifest, const char* data_dir,
                                 const char* config_json_path,
                                 const char* net_config_path,
                                 const char* ckpt_out, const char* log_csv);

UDSR_API int udsr_train_translation(const char* manifest, const char* data_dir,
                                    const char* config_json_path,
                                    const char* net_config_path,
                                    const char* ckpt_out, const char* log_csv);

UDSR_API int udsr_train_enhancement(const char* manifest, const char* data_dir,
                                    const char* translation_ckpt,
                                    const char* guidance_ckpt,
                                    const char* config_json_path,
                                    const char* net_config_path,
                                    const char* ckpt_out, const char* log_csv);

UDSR_API int udsr_finetune_sr(const char* manifest, const char* data_dir,
                              const char* translation_ckpt,
                              const char* guidance_ckpt,
                              const char* enhancement_ckpt,
                              const char* config_json_path,
                              const char* net_config_path, const char* ckpt_out,
                              const char* log_csv);

/* ---- inference & evaluation ---- */

UDSR_API int udsr_infer(const char* rgb_png, const char* depth_png,
                        const char* guidance_ckpt, const char* enhancement_ckpt,
                        const char* net_config_path, int factor,
                        const char* out_png);

UDSR_API int udsr_eval_files(const char* pred_png, const char* gt_png,
                             const char* input_png, const char* csv_out,
                             const char* json_out);

/* Runs the full gradient-check suite (64-bit, kink exclusion). Writes the
 * suite-wide max relative error to *max_rel_err when non-NULL; returns
 * UDSR_OK iff the maximum is within tolerance. */
UDSR_API int udsr_gradcheck(double tolerance, double* max_rel_err);

#ifdef __cplusplus
}
#endif

#endif /* UDSR_H */
