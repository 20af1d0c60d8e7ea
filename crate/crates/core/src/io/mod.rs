//! On-disk formats: the RF container, raw raster grids with text sidecars, and CSV tables.

mod container;
mod raster;
mod tables;

pub use container::{read_container, read_header, write_container, ContainerHeader, MAGIC, VERSION};
pub use raster::{read_raster, write_pgm, write_raster, Raster};
pub use tables::{
    read_detections, write_detections, write_metrics, write_tracks, DetectionRow, MetricRow, TrackRow,
};
