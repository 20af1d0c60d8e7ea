//! C ABI over `ulm-core`.
//!
//! Objects cross the boundary as opaque handles created by functions such as
//! `ulm_config_default` or `ulm_simulate` and released with the matching `ulm_*_free`. Every entry point returns a
//! [`UlmStatus`]; on failure the message is kept per thread and can be fetched
//! with [`ulm_last_error_message`].
//!
//! The generated header lives at `include/ulm.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ndarray::Array2;
use ulm_core::beamform::{BfImage, Beamformer};
use ulm_core::config::PipelineConfig;
use ulm_core::localize::{localize_frame, Method};
use ulm_core::metrics::{self, ContrastMode, Region};
use ulm_core::pipeline::{beamform_frame, run_pipeline, PipelineOutput};
use ulm_core::rfsim::{simulate_acquisition, Acquisition};
use ulm_core::{io, UlmError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlmStatus {
    Ok = 0,
    InvalidParameter = 1,
    InvalidInput = 2,
    FitFailed = 3,
    Format = 4,
    Config = 5,
    Io = 6,
    NullPointer = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlmBeamformer {
    Das = 0,
    Fdmas = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlmLocalizer {
    SpInterp = 0,
    GaussFit = 1,
    WeightedAverage = 2,
    RadialSymmetry = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlmContrastMode {
    Masked = 0,
    Full = 1,
}

/// One localized microbubble; positions in meters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UlmDetection {
    pub x: f64,
    pub z: f64,
    pub intensity: f64,
    pub frame_index: u64,
}

/// Scores of one beamformer/localizer combination.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UlmMetrics {
    pub beamformer: UlmBeamformer,
    pub localizer: UlmLocalizer,
    pub local_contrast_mean: f64,
    pub local_contrast_std: f64,
    /// NaN when no usable canal row was found.
    pub lateral_spread_lambda: f64,
}

/// Pixel geometry of an image; bin centers in meters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UlmGrid {
    pub x0: f64,
    pub dx: f64,
    pub nx: u64,
    pub z0: f64,
    pub dz: f64,
    pub nz: u64,
}

pub struct UlmConfig {
    inner: PipelineConfig,
}

pub struct UlmAcquisition {
    inner: Acquisition,
}

pub struct UlmImage {
    inner: BfImage,
}

pub struct UlmRun {
    inner: PipelineOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.as_bytes().to_vec());
}

fn status_of(e: &UlmError) -> UlmStatus {
    match e {
        UlmError::InvalidParameter(_) => UlmStatus::InvalidParameter,
        UlmError::InvalidInput(_) => UlmStatus::InvalidInput,
        UlmError::FitFailed(_) => UlmStatus::FitFailed,
        UlmError::Format(_) => UlmStatus::Format,
        UlmError::Config(_) => UlmStatus::Config,
        UlmError::Io(_) => UlmStatus::Io,
    }
}

enum Failure {
    Core(UlmError),
    Status(UlmStatus, String),
}

impl From<UlmError> for Failure {
    fn from(e: UlmError) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn null(what: &str) -> Failure {
    Failure::Status(UlmStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> UlmStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UlmStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(&msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            UlmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn c_str(p: *const c_char, what: &str) -> FfiResult<String> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::Status(UlmStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn map_from(data: *const f64, rows: usize, cols: usize) -> FfiResult<Array2<f64>> {
    let n = rows.checked_mul(cols).ok_or_else(|| {
        Failure::Status(UlmStatus::InvalidInput, "map size overflows".into())
    })?;
    let v = slice(data, n, "map")?.to_vec();
    Array2::from_shape_vec((rows, cols), v)
        .map_err(|e| Failure::Status(UlmStatus::InvalidInput, e.to_string()))
}

fn beamformer(b: UlmBeamformer) -> Beamformer {
    match b {
        UlmBeamformer::Das => Beamformer::Das,
        UlmBeamformer::Fdmas => Beamformer::Fdmas,
    }
}

fn ffi_beamformer(b: Beamformer) -> UlmBeamformer {
    match b {
        Beamformer::Das => UlmBeamformer::Das,
        Beamformer::Fdmas => UlmBeamformer::Fdmas,
    }
}

fn method(m: UlmLocalizer) -> Method {
    match m {
        UlmLocalizer::SpInterp => Method::SpInterp,
        UlmLocalizer::GaussFit => Method::GaussFit,
        UlmLocalizer::WeightedAverage => Method::WeightedAverage,
        UlmLocalizer::RadialSymmetry => Method::RadialSymmetry,
    }
}

fn ffi_method(m: Method) -> UlmLocalizer {
    match m {
        Method::SpInterp => UlmLocalizer::SpInterp,
        Method::GaussFit => UlmLocalizer::GaussFit,
        Method::WeightedAverage => UlmLocalizer::WeightedAverage,
        Method::RadialSymmetry => UlmLocalizer::RadialSymmetry,
    }
}

fn contrast_mode(m: UlmContrastMode) -> ContrastMode {
    match m {
        UlmContrastMode::Masked => ContrastMode::Masked,
        UlmContrastMode::Full => ContrastMode::Full,
    }
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ulm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Default configuration (bundled phantom, both beamformers, all localizers).
///
/// # Safety
/// `out_cfg` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ulm_config_default(out_cfg: *mut *mut UlmConfig) -> UlmStatus {
    guard(|| {
        *out(out_cfg, "out_cfg")? = boxed(UlmConfig { inner: PipelineConfig::default() });
        Ok(())
    })
}

/// Parses `key = value` configuration text; unspecified keys keep their defaults.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out_cfg` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_config_from_text(text: *const c_char, out_cfg: *mut *mut UlmConfig) -> UlmStatus {
    guard(|| {
        let slot = out(out_cfg, "out_cfg")?;
        let cfg = PipelineConfig::from_text(&c_str(text, "text")?)?;
        cfg.validate()?;
        *slot = boxed(UlmConfig { inner: cfg });
        Ok(())
    })
}

/// Wavelength of the configured probe in meters.
///
/// # Safety
/// `cfg` and `out_lambda` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_config_wavelength(cfg: *const UlmConfig, out_lambda: *mut f64) -> UlmStatus {
    guard(|| {
        *out(out_lambda, "out_lambda")? = deref(cfg, "cfg")?.inner.lambda();
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ulm_config_free(cfg: *mut UlmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Simulates the configured phantom.
///
/// # Safety
/// `cfg` and `out_acq` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_simulate(cfg: *const UlmConfig, out_acq: *mut *mut UlmAcquisition) -> UlmStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let slot = out(out_acq, "out_acq")?;
        cfg.validate()?;
        let acq = simulate_acquisition(&cfg.phantom, &cfg.probe)?;
        *slot = boxed(UlmAcquisition { inner: acq });
        Ok(())
    })
}

/// Reads an RF container file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_acq` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_acquisition_read(path: *const c_char, out_acq: *mut *mut UlmAcquisition) -> UlmStatus {
    guard(|| {
        let slot = out(out_acq, "out_acq")?;
        let acq = io::read_container(&PathBuf::from(c_str(path, "path")?))?;
        *slot = boxed(UlmAcquisition { inner: acq });
        Ok(())
    })
}

/// Writes an RF container file.
///
/// # Safety
/// `acq` must be valid; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ulm_acquisition_write(acq: *const UlmAcquisition, path: *const c_char) -> UlmStatus {
    guard(|| {
        let acq = &deref(acq, "acq")?.inner;
        io::write_container(&PathBuf::from(c_str(path, "path")?), acq)?;
        Ok(())
    })
}

/// # Safety
/// `acq` and every output pointer must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_acquisition_dims(
    acq: *const UlmAcquisition,
    n_frames: *mut usize,
    n_samples: *mut usize,
    n_channels: *mut usize,
) -> UlmStatus {
    guard(|| {
        let a = &deref(acq, "acq")?.inner;
        *out(n_frames, "n_frames")? = a.frames.len();
        *out(n_samples, "n_samples")? = a.n_samples();
        *out(n_channels, "n_channels")? = a.probe.n_elements;
        Ok(())
    })
}

/// Copies one frame's RF samples, sample-major (`n_samples × n_channels`).
///
/// # Safety
/// `acq` must be valid; `dst` must point to `len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn ulm_acquisition_frame(
    acq: *const UlmAcquisition,
    frame_index: usize,
    dst: *mut f32,
    len: usize,
) -> UlmStatus {
    guard(|| {
        let a = &deref(acq, "acq")?.inner;
        let f = a.frames.get(frame_index).ok_or_else(|| {
            Failure::Status(UlmStatus::InvalidParameter, format!("frame {frame_index} out of range"))
        })?;
        let n = f.samples.len();
        if len < n {
            return Err(Failure::Status(UlmStatus::BufferTooSmall, format!("need {n} values, got {len}")));
        }
        if dst.is_null() {
            return Err(null("dst"));
        }
        for (k, v) in f.samples.iter().enumerate() {
            *dst.add(k) = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `acq` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ulm_acquisition_free(acq: *mut UlmAcquisition) {
    if !acq.is_null() {
        drop(Box::from_raw(acq));
    }
}

/// Envelope image of one frame on the configured λ grid.
///
/// # Safety
/// `cfg`, `acq` and `out_img` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_beamform(
    cfg: *const UlmConfig,
    acq: *const UlmAcquisition,
    frame_index: usize,
    which: UlmBeamformer,
    out_img: *mut *mut UlmImage,
) -> UlmStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let a = &deref(acq, "acq")?.inner;
        let slot = out(out_img, "out_img")?;
        let frame = a.frames.get(frame_index).ok_or_else(|| {
            Failure::Status(UlmStatus::InvalidParameter, format!("frame {frame_index} out of range"))
        })?;
        let img = beamform_frame(frame, cfg, beamformer(which))?;
        *slot = boxed(UlmImage { inner: img });
        Ok(())
    })
}

/// # Safety
/// `img` and `out_grid` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_image_grid(img: *const UlmImage, out_grid: *mut UlmGrid) -> UlmStatus {
    guard(|| {
        let g = deref(img, "img")?.inner.grid;
        *out(out_grid, "out_grid")? =
            UlmGrid { x0: g.x0, dx: g.dx, nx: g.nx as u64, z0: g.z0, dz: g.dz, nz: g.nz as u64 };
        Ok(())
    })
}

/// Copies the image row-major (`nz × nx`, rows along depth).
///
/// # Safety
/// `img` must be valid; `dst` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ulm_image_copy(img: *const UlmImage, dst: *mut f64, len: usize) -> UlmStatus {
    guard(|| {
        let v = &deref(img, "img")?.inner.values;
        if len < v.len() {
            return Err(Failure::Status(UlmStatus::BufferTooSmall, format!("need {} values, got {len}", v.len())));
        }
        if dst.is_null() {
            return Err(null("dst"));
        }
        for (k, x) in v.iter().enumerate() {
            *dst.add(k) = *x;
        }
        Ok(())
    })
}

/// # Safety
/// `img` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ulm_image_free(img: *mut UlmImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// Detects and localizes microbubbles in one envelope image.
///
/// Writes up to `cap` detections and stores the total found in `n_found`;
/// returns `BufferTooSmall` when `n_found > cap`.
///
/// # Safety
/// `cfg`, `img` and `n_found` must be valid; `dst` must point to `cap` writable entries.
#[no_mangle]
pub unsafe extern "C" fn ulm_localize(
    cfg: *const UlmConfig,
    img: *const UlmImage,
    localizer: UlmLocalizer,
    dst: *mut UlmDetection,
    cap: usize,
    n_found: *mut usize,
) -> UlmStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let img = &deref(img, "img")?.inner;
        let n_out = out(n_found, "n_found")?;
        let dets = localize_frame(img, 0, method(localizer), &cfg.detector, cfg.wa_mode);
        *n_out = dets.len();
        if cap > 0 && dst.is_null() {
            return Err(null("dst"));
        }
        for (k, d) in dets.iter().take(cap).enumerate() {
            *dst.add(k) =
                UlmDetection { x: d.x, z: d.z, intensity: d.intensity, frame_index: d.frame_index as u64 };
        }
        if dets.len() > cap {
            return Err(Failure::Status(
                UlmStatus::BufferTooSmall,
                format!("{} detections, capacity {cap}", dets.len()),
            ));
        }
        Ok(())
    })
}

/// Runs the full pipeline for every configured beamformer and localizer.
///
/// # Safety
/// `cfg`, `acq` and `out_run` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_run(
    cfg: *const UlmConfig,
    acq: *const UlmAcquisition,
    out_run: *mut *mut UlmRun,
) -> UlmStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let a = &deref(acq, "acq")?.inner;
        let slot = out(out_run, "out_run")?;
        *slot = boxed(UlmRun { inner: run_pipeline(a, cfg)? });
        Ok(())
    })
}

/// Per-combination scores of a run, in beamformer then localizer order.
/// Same capacity protocol as [`ulm_localize`].
///
/// # Safety
/// `run` and `n_found` must be valid; `dst` must point to `cap` writable entries.
#[no_mangle]
pub unsafe extern "C" fn ulm_run_metrics(
    run: *const UlmRun,
    dst: *mut UlmMetrics,
    cap: usize,
    n_found: *mut usize,
) -> UlmStatus {
    guard(|| {
        let run = &deref(run, "run")?.inner;
        let n_out = out(n_found, "n_found")?;
        let rows: Vec<UlmMetrics> = run
            .beamformers
            .iter()
            .flat_map(|b| b.combinations.iter())
            .map(|c| UlmMetrics {
                beamformer: ffi_beamformer(c.beamformer),
                localizer: ffi_method(c.localizer),
                local_contrast_mean: c.report.local_contrast_mean,
                local_contrast_std: c.report.local_contrast_std,
                lateral_spread_lambda: c.report.lateral_spread_lambda,
            })
            .collect();
        *n_out = rows.len();
        if cap > 0 && dst.is_null() {
            return Err(null("dst"));
        }
        for (k, r) in rows.iter().take(cap).enumerate() {
            *dst.add(k) = *r;
        }
        if rows.len() > cap {
            return Err(Failure::Status(UlmStatus::BufferTooSmall, format!("{} rows, capacity {cap}", rows.len())));
        }
        Ok(())
    })
}

/// Density map of one combination as a new image handle.
///
/// # Safety
/// `run` and `out_img` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_run_density(
    run: *const UlmRun,
    which: UlmBeamformer,
    localizer: UlmLocalizer,
    out_img: *mut *mut UlmImage,
) -> UlmStatus {
    guard(|| {
        let run = &deref(run, "run")?.inner;
        let slot = out(out_img, "out_img")?;
        let c = run.combination(beamformer(which), method(localizer)).ok_or_else(|| {
            Failure::Status(UlmStatus::InvalidParameter, "combination was not part of the run".into())
        })?;
        let img = BfImage::new(
            c.density.values.clone(),
            c.density.grid,
            ulm_core::beamform::ImageKind::Envelope,
            c.beamformer,
        )?;
        *slot = boxed(UlmImage { inner: img });
        Ok(())
    })
}

/// # Safety
/// `run` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ulm_run_free(run: *mut UlmRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// DMAS output for one pixel's delay-compensated channel samples.
///
/// # Safety
/// `v` must point to `n` readable doubles; `out_value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_dmas_pixel(v: *const f64, n: usize, out_value: *mut f64) -> UlmStatus {
    guard(|| {
        let o = out(out_value, "out_value")?;
        *o = ulm_core::beamform::dmas_pixel(slice(v, n, "v")?)?;
        Ok(())
    })
}

/// Full width at half maximum of a 1-D profile, in the units of `pitch`.
/// `censored` is set to 1 when the main lobe does not fall to half on both sides.
///
/// # Safety
/// `profile` must point to `n` readable doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_fwhm(
    profile: *const f64,
    n: usize,
    pitch: f64,
    out_width: *mut f64,
    out_censored: *mut i32,
) -> UlmStatus {
    guard(|| {
        let w = out(out_width, "out_width")?;
        let c = out(out_censored, "out_censored")?;
        let f = metrics::fwhm(slice(profile, n, "profile")?, pitch)?;
        *w = f.width;
        *c = f.censored as i32;
        Ok(())
    })
}

/// Local contrast score of a row-major `rows × cols` map.
///
/// # Safety
/// `map` must point to `rows * cols` readable doubles; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_local_contrast(
    map: *const f64,
    rows: usize,
    cols: usize,
    mode: UlmContrastMode,
    out_mean: *mut f64,
    out_std: *mut f64,
) -> UlmStatus {
    guard(|| {
        let m = out(out_mean, "out_mean")?;
        let s = out(out_std, "out_std")?;
        let (mean, std) = metrics::local_contrast_score(&map_from(map, rows, cols)?, contrast_mode(mode))?;
        *m = mean;
        *s = std;
        Ok(())
    })
}

/// Lateral spread (in λ) of a vertical canal filling the whole row-major map.
///
/// # Safety
/// `map` must point to `rows * cols` readable doubles; `out_lambdas` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ulm_lateral_spread(
    map: *const f64,
    rows: usize,
    cols: usize,
    pitch: f64,
    lambda: f64,
    out_lambdas: *mut f64,
) -> UlmStatus {
    guard(|| {
        let o = out(out_lambdas, "out_lambdas")?;
        let m = map_from(map, rows, cols)?;
        *o = metrics::lateral_spread_score(&m, Region::whole(&m), pitch, lambda)?.lambdas;
        Ok(())
    })
}
