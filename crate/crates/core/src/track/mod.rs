//! Tracking, velocimetry and super-resolved map rendering.

mod link;
mod render;

pub use link::{link_detections, velocities, LinkParams, Track};
pub use render::{power_doppler, render_density, render_velocity, resample_track, MapKind, PowerDoppler, SuperResMap};

#[cfg(test)]
mod tests;
