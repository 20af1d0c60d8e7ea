//! End-to-end in-memory pipeline: beamform → clutter filter → localize → track → render → score.

use ndarray::Array2;
use rayon::prelude::*;

use crate::beamform::{self, BeamGrid, BfImage, Beamformer, ImageKind};
use crate::clutter::{svd_filter, ImageStack};
use crate::config::{PipelineConfig, Rect};
use crate::error::Result;
use crate::localize::{localize_frame, Detection, Method};
use crate::metrics::{evaluate_map, MetricReport, Region};
use crate::rfsim::{Acquisition, PhantomSpec, RfFrame};
use crate::track::{link_detections, power_doppler, render_density, render_velocity, MapKind, PowerDoppler, SuperResMap, Track};

/// Envelope image of one frame on the configured λ grid.
pub fn beamform_frame(frame: &RfFrame, cfg: &PipelineConfig, which: Beamformer) -> Result<BfImage> {
    let rf_grid = cfg.rf_grid()?;
    let rf = beamform::beamform(which, frame, &rf_grid, &cfg.apodization, &cfg.bandpass())?;
    beamform::envelope(&rf)?.decimate_rows(cfg.grid.rf_oversample)
}

/// Envelope images of every frame, computed in parallel and returned in frame order.
pub fn beamform_acquisition(acq: &Acquisition, cfg: &PipelineConfig, which: Beamformer) -> Result<Vec<BfImage>> {
    acq.frames.par_iter().map(|f| beamform_frame(f, cfg, which)).collect()
}

/// Optional SVD clutter filter on the envelope stack; filtered values are rectified.
pub fn clutter_filter(images: Vec<BfImage>, cfg: &PipelineConfig) -> Result<Vec<BfImage>> {
    if cfg.clutter_cut_low + cfg.clutter_cut_high == 0 || images.len() < 2 {
        return Ok(images);
    }
    let stack = svd_filter(&ImageStack::new(images)?, cfg.clutter_cut_low, cfg.clutter_cut_high)?;
    Ok(stack
        .frames
        .into_iter()
        .map(|mut f| {
            f.values.mapv_inplace(f64::abs);
            f
        })
        .collect())
}

/// Frame-averaged envelope, log-compressed.
pub fn bmode(images: &[BfImage], dynamic_range_db: f64) -> Result<BfImage> {
    let first = &images[0];
    let mut mean = Array2::<f64>::zeros(first.grid.shape());
    for img in images {
        mean += &img.values;
    }
    mean /= images.len() as f64;
    let env = BfImage::new(mean, first.grid, ImageKind::Envelope, first.beamformer)?;
    beamform::log_compress(&env, dynamic_range_db)
}

pub fn localize_all(images: &[BfImage], cfg: &PipelineConfig, method: Method) -> Vec<Detection> {
    images
        .iter()
        .enumerate()
        .flat_map(|(k, img)| localize_frame(img, k, method, &cfg.detector, cfg.wa_mode))
        .collect()
}

/// Map rows and columns whose bin centers fall inside `rect`.
pub fn region_on_grid(grid: &BeamGrid, rect: &Rect) -> Option<Region> {
    let cols: Vec<usize> = (0..grid.nx).filter(|&c| (rect.x_min..=rect.x_max).contains(&grid.x(c))).collect();
    let rows: Vec<usize> = (0..grid.nz).filter(|&r| (rect.z_min..=rect.z_max).contains(&grid.z(r))).collect();
    Some(Region {
        row_start: *rows.first()?,
        row_end: rows.last()? + 1,
        col_start: *cols.first()?,
        col_end: cols.last()? + 1,
    })
}

#[derive(Debug, Clone)]
pub struct Combination {
    pub beamformer: Beamformer,
    pub localizer: Method,
    pub detections: Vec<Detection>,
    pub tracks: Vec<Track>,
    pub density: SuperResMap,
    pub velocity: SuperResMap,
    pub report: MetricReport,
}

#[derive(Debug, Clone)]
pub struct BeamformerOutput {
    pub beamformer: Beamformer,
    pub bmode: BfImage,
    pub power_doppler: PowerDoppler,
    pub combinations: Vec<Combination>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub beamformers: Vec<BeamformerOutput>,
    pub warnings: Vec<String>,
}

impl PipelineOutput {
    pub fn reports(&self) -> Vec<MetricReport> {
        self.beamformers
            .iter()
            .flat_map(|b| b.combinations.iter().map(|c| c.report.clone()))
            .collect()
    }

    pub fn combination(&self, bf: Beamformer, method: Method) -> Option<&Combination> {
        self.beamformers
            .iter()
            .filter(|b| b.beamformer == bf)
            .flat_map(|b| &b.combinations)
            .find(|c| c.localizer == method)
    }
}

pub fn score_map(map: &SuperResMap, cfg: &PipelineConfig, beamformer: &str, localizer: &str) -> Result<MetricReport> {
    let region = cfg.spread_region.as_ref().and_then(|r| region_on_grid(&map.grid, r));
    evaluate_map(&map.values, cfg.contrast_mode, region, map.grid.dx, cfg.lambda(), beamformer, localizer)
}

fn run_localizer(images: &[BfImage], cfg: &PipelineConfig, bf: Beamformer, method: Method) -> Result<Combination> {
    let render = cfg.render_grid()?;
    let detections = localize_all(images, cfg, method);
    let tracks = link_detections(&detections, &cfg.link_params())?;
    let density = render_density(&tracks, &render)?;
    let velocity = render_velocity(&tracks, &render)?;
    let report = score_map(&density, cfg, bf.label(), method.label())?;
    Ok(Combination { beamformer: bf, localizer: method, detections, tracks, density, velocity, report })
}

/// Runs one beamformer over the acquisition and every configured localizer.
pub fn run_beamformer(acq: &Acquisition, cfg: &PipelineConfig, bf: Beamformer) -> Result<BeamformerOutput> {
    let raw = beamform_acquisition(acq, cfg, bf)?;
    let bmode = bmode(&raw, cfg.bmode_dynamic_range_db)?;
    let power_doppler = if raw.len() >= 2 {
        let stack = ImageStack::new(raw.clone())?;
        let rank = stack.n_frames().min(stack.n_pixels());
        let (lo, hi) = (cfg.doppler_cut_low, cfg.doppler_cut_high);
        let filtered = if lo + hi < rank { svd_filter(&stack, lo, hi)? } else { stack };
        power_doppler(&filtered)?
    } else {
        let p = raw[0].values.mapv(|v| v * v);
        let max = p.iter().fold(0.0_f64, |m, &v| m.max(v));
        let db = p.mapv(|v| if max > 0.0 { 10.0 * (v / max).log10() } else { f64::NEG_INFINITY });
        PowerDoppler { grid: raw[0].grid, power: p, db }
    };
    let images = clutter_filter(raw, cfg)?;
    let combinations = cfg
        .localizers
        .par_iter()
        .map(|&m| run_localizer(&images, cfg, bf, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamformerOutput { beamformer: bf, bmode, power_doppler, combinations })
}

pub fn run_pipeline(acq: &Acquisition, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let beamformers = cfg
        .beamformers
        .iter()
        .map(|&bf| run_beamformer(acq, cfg, bf))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    for b in &beamformers {
        for c in &b.combinations {
            if c.detections.is_empty() {
                warnings.push(format!("{} + {}: no detections", b.beamformer.label(), c.localizer.label()));
            } else if c.tracks.is_empty() {
                warnings.push(format!("{} + {}: no tracks", b.beamformer.label(), c.localizer.label()));
            }
        }
    }
    Ok(PipelineOutput { beamformers, warnings })
}

/// Binary map of the phantom's canals: a bin is set when its center lies inside
/// a canal or the canal centerline passes through it.
pub fn ground_truth_map(spec: &PhantomSpec, grid: &BeamGrid) -> Result<SuperResMap> {
    let mut values = Array2::<f64>::zeros(grid.shape());
    for canal in &spec.canals {
        for r in 0..grid.nz {
            for c in 0..grid.nx {
                if canal.distance_to_centerline(grid.x(c), grid.z(r)) <= 0.5 * canal.diameter {
                    values[[r, c]] = 1.0;
                }
            }
        }
        let step = 0.25 * grid.dx.min(grid.dz);
        let n = (canal.length() / step).ceil() as usize;
        for k in 0..=n {
            let ((x, z), _) = canal.point_at(k as f64 * step);
            let col = ((x - (grid.x0 - 0.5 * grid.dx)) / grid.dx).floor();
            let row = ((z - (grid.z0 - 0.5 * grid.dz)) / grid.dz).floor();
            if col >= 0.0 && row >= 0.0 && (col as usize) < grid.nx && (row as usize) < grid.nz {
                values[[row as usize, col as usize]] = 1.0;
            }
        }
    }
    Ok(SuperResMap { grid: *grid, values, kind: MapKind::Density, out_of_grid: 0 })
}
