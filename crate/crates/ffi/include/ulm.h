#ifndef ULM_H
#define ULM_H

#include <stddef.h>
#include <stdint.h>

typedef enum UlmStatus {
  ULM_STATUS_OK = 0,
  ULM_STATUS_INVALID_PARAMETER = 1,
  ULM_STATUS_INVALID_INPUT = 2,
  ULM_STATUS_FIT_FAILED = 3,
  ULM_STATUS_FORMAT = 4,
  ULM_STATUS_CONFIG = 5,
  ULM_STATUS_IO = 6,
  ULM_STATUS_NULL_POINTER = 7,
  ULM_STATUS_BUFFER_TOO_SMALL = 8,
  ULM_STATUS_PANIC = 9,
} UlmStatus;

typedef enum UlmBeamformer {
  ULM_BEAMFORMER_DAS = 0,
  ULM_BEAMFORMER_FDMAS = 1,
} UlmBeamformer;

typedef enum UlmLocalizer {
  ULM_LOCALIZER_SP_INTERP = 0,
  ULM_LOCALIZER_GAUSS_FIT = 1,
  ULM_LOCALIZER_WEIGHTED_AVERAGE = 2,
  ULM_LOCALIZER_RADIAL_SYMMETRY = 3,
} UlmLocalizer;

typedef enum UlmContrastMode {
  ULM_CONTRAST_MODE_MASKED = 0,
  ULM_CONTRAST_MODE_FULL = 1,
} UlmContrastMode;

typedef struct UlmAcquisition UlmAcquisition;

typedef struct UlmConfig UlmConfig;

typedef struct UlmImage UlmImage;

typedef struct UlmRun UlmRun;

// Pixel geometry of an image; bin centers in meters.
typedef struct UlmGrid {
  double x0;
  double dx;
  uint64_t nx;
  double z0;
  double dz;
  uint64_t nz;
} UlmGrid;

// One localized microbubble; positions in meters.
typedef struct UlmDetection {
  double x;
  double z;
  double intensity;
  uint64_t frame_index;
} UlmDetection;

// Scores of one beamformer/localizer combination.
typedef struct UlmMetrics {
  enum UlmBeamformer beamformer;
  enum UlmLocalizer localizer;
  double local_contrast_mean;
  double local_contrast_std;
  // NaN when no usable canal row was found.
  double lateral_spread_lambda;
} UlmMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`) and returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t ulm_last_error_message(char *buf, size_t len);

// Default configuration (bundled phantom, both beamformers, all localizers).
//
// # Safety
// `out_cfg` must be a valid pointer.
enum UlmStatus ulm_config_default(struct UlmConfig **out_cfg);

// Parses `key = value` configuration text; unspecified keys keep their defaults.
//
// # Safety
// `text` must be a NUL-terminated string; `out_cfg` must be valid.
enum UlmStatus ulm_config_from_text(const char *text, struct UlmConfig **out_cfg);

// Wavelength of the configured probe in meters.
//
// # Safety
// `cfg` and `out_lambda` must be valid.
enum UlmStatus ulm_config_wavelength(const struct UlmConfig *cfg, double *out_lambda);

// # Safety
// `cfg` must be null or a handle from this library, not yet freed.
void ulm_config_free(struct UlmConfig *cfg);

// Simulates the configured phantom.
//
// # Safety
// `cfg` and `out_acq` must be valid.
enum UlmStatus ulm_simulate(const struct UlmConfig *cfg, struct UlmAcquisition **out_acq);

// Reads an RF container file.
//
// # Safety
// `path` must be a NUL-terminated string; `out_acq` must be valid.
enum UlmStatus ulm_acquisition_read(const char *path, struct UlmAcquisition **out_acq);

// Writes an RF container file.
//
// # Safety
// `acq` must be valid; `path` must be a NUL-terminated string.
enum UlmStatus ulm_acquisition_write(const struct UlmAcquisition *acq, const char *path);

// # Safety
// `acq` and every output pointer must be valid.
enum UlmStatus ulm_acquisition_dims(const struct UlmAcquisition *acq,
                                    size_t *n_frames,
                                    size_t *n_samples,
                                    size_t *n_channels);

// Copies one frame's RF samples, sample-major (`n_samples × n_channels`).
//
// # Safety
// `acq` must be valid; `dst` must point to `len` writable floats.
enum UlmStatus ulm_acquisition_frame(const struct UlmAcquisition *acq,
                                     size_t frame_index,
                                     float *dst,
                                     size_t len);

// # Safety
// `acq` must be null or a handle from this library, not yet freed.
void ulm_acquisition_free(struct UlmAcquisition *acq);

// Envelope image of one frame on the configured λ grid.
//
// # Safety
// `cfg`, `acq` and `out_img` must be valid.
enum UlmStatus ulm_beamform(const struct UlmConfig *cfg,
                            const struct UlmAcquisition *acq,
                            size_t frame_index,
                            enum UlmBeamformer which,
                            struct UlmImage **out_img);

// # Safety
// `img` and `out_grid` must be valid.
enum UlmStatus ulm_image_grid(const struct UlmImage *img, struct UlmGrid *out_grid);

// Copies the image row-major (`nz × nx`, rows along depth).
//
// # Safety
// `img` must be valid; `dst` must point to `len` writable doubles.
enum UlmStatus ulm_image_copy(const struct UlmImage *img, double *dst, size_t len);

// # Safety
// `img` must be null or a handle from this library, not yet freed.
void ulm_image_free(struct UlmImage *img);

// Detects and localizes microbubbles in one envelope image.
//
// Writes up to `cap` detections and stores the total found in `n_found`;
// returns `BufferTooSmall` when `n_found > cap`.
//
// # Safety
// `cfg`, `img` and `n_found` must be valid; `dst` must point to `cap` writable entries.
enum UlmStatus ulm_localize(const struct UlmConfig *cfg,
                            const struct UlmImage *img,
                            enum UlmLocalizer localizer,
                            struct UlmDetection *dst,
                            size_t cap,
                            size_t *n_found);

// Runs the full pipeline for every configured beamformer and localizer.
//
// # Safety
// `cfg`, `acq` and `out_run` must be valid.
enum UlmStatus ulm_run(const struct UlmConfig *cfg,
                       const struct UlmAcquisition *acq,
                       struct UlmRun **out_run);

// Per-combination scores of a run, in beamformer then localizer order.
// Same capacity protocol as [`ulm_localize`].
//
// # Safety
// `run` and `n_found` must be valid; `dst` must point to `cap` writable entries.
enum UlmStatus ulm_run_metrics(const struct UlmRun *run,
                               struct UlmMetrics *dst,
                               size_t cap,
                               size_t *n_found);

// Density map of one combination as a new image handle.
//
// # Safety
// `run` and `out_img` must be valid.
enum UlmStatus ulm_run_density(const struct UlmRun *run,
                               enum UlmBeamformer which,
                               enum UlmLocalizer localizer,
                               struct UlmImage **out_img);

// # Safety
// `run` must be null or a handle from this library, not yet freed.
void ulm_run_free(struct UlmRun *run);

// DMAS output for one pixel's delay-compensated channel samples.
//
// # Safety
// `v` must point to `n` readable doubles; `out_value` must be valid.
enum UlmStatus ulm_dmas_pixel(const double *v, size_t n, double *out_value);

// Full width at half maximum of a 1-D profile, in the units of `pitch`.
// `censored` is set to 1 when the main lobe does not fall to half on both sides.
//
// # Safety
// `profile` must point to `n` readable doubles; outputs must be valid.
enum UlmStatus ulm_fwhm(const double *profile,
                        size_t n,
                        double pitch,
                        double *out_width,
                        int32_t *out_censored);

// Local contrast score of a row-major `rows × cols` map.
//
// # Safety
// `map` must point to `rows * cols` readable doubles; outputs must be valid.
enum UlmStatus ulm_local_contrast(const double *map,
                                  size_t rows,
                                  size_t cols,
                                  enum UlmContrastMode mode,
                                  double *out_mean,
                                  double *out_std);

// Lateral spread (in λ) of a vertical canal filling the whole row-major map.
//
// # Safety
// `map` must point to `rows * cols` readable doubles; `out_lambdas` must be valid.
enum UlmStatus ulm_lateral_spread(const double *map,
                                  size_t rows,
                                  size_t cols,
                                  double pitch,
                                  double lambda,
                                  double *out_lambdas);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ULM_H */
