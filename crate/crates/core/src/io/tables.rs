use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::localize::{Detection, Method};
use crate::metrics::MetricReport;
use crate::track::Track;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub frame_index: usize,
    pub x_m: f64,
    pub z_m: f64,
    pub intensity: f64,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub track_id: usize,
    pub frame_index: usize,
    pub x_m: f64,
    pub z_m: f64,
    pub vx: f64,
    pub vz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub beamformer: String,
    pub localizer: String,
    pub local_contrast_mean: f64,
    pub local_contrast_std: f64,
    pub lateral_spread_lambda: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    write_rows(
        path,
        detections.iter().map(|d| DetectionRow {
            frame_index: d.frame_index,
            x_m: d.x,
            z_m: d.z,
            intensity: d.intensity,
            method: d.method.key().to_string(),
        }),
    )
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<DetectionRow>()
        .map(|row| {
            let row = row?;
            Ok(Detection {
                x: row.x_m,
                z: row.z_m,
                intensity: row.intensity,
                frame_index: row.frame_index,
                method: Method::from_key(&row.method)?,
            })
        })
        .collect()
}

/// One row per detection; the final detection of a track repeats the last step velocity.
pub fn write_tracks(path: &Path, tracks: &[Track]) -> Result<()> {
    write_rows(
        path,
        tracks.iter().flat_map(|t| {
            t.detections.iter().enumerate().map(move |(k, d)| {
                let v = t.velocities.get(k).or(t.velocities.last()).copied().unwrap_or((0.0, 0.0));
                TrackRow { track_id: t.id, frame_index: d.frame_index, x_m: d.x, z_m: d.z, vx: v.0, vz: v.1 }
            })
        }),
    )
}

pub fn write_metrics(path: &Path, reports: &[MetricReport]) -> Result<()> {
    write_rows(
        path,
        reports.iter().map(|m| MetricRow {
            beamformer: m.beamformer.clone(),
            localizer: m.localizer.clone(),
            local_contrast_mean: m.local_contrast_mean,
            local_contrast_std: m.local_contrast_std,
            lateral_spread_lambda: m.lateral_spread_lambda,
        }),
    )
}
