use std::cmp::Ordering;

use crate::error::{invalid_param, Result};
use crate::localize::Detection;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    /// Maximum frame-to-frame displacement (m).
    pub max_link_distance: f64,
    /// Frames a track may go unmatched before it is closed.
    pub max_gap: usize,
    pub min_track_length: usize,
    pub frame_rate: f64,
}

/// Linked detections of one microbubble.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: usize,
    pub detections: Vec<Detection>,
    /// Per-step `(vx, vz)` in m/s; one fewer than `detections`.
    pub velocities: Vec<(f64, f64)>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// Mean step speed (m/s).
    pub fn mean_speed(&self) -> f64 {
        if self.velocities.is_empty() {
            return 0.0;
        }
        self.velocities.iter().map(|v| v.0.hypot(v.1)).sum::<f64>() / self.velocities.len() as f64
    }
}

/// Finite-difference velocities `(p[k+1] - p[k]) · frame_rate / Δframe`.
pub fn velocities(detections: &[Detection], frame_rate: f64) -> Result<Vec<(f64, f64)>> {
    if detections.len() < 2 {
        return Err(invalid_param("velocity needs at least two detections"));
    }
    Ok(detections
        .windows(2)
        .map(|w| {
            let frames = (w[1].frame_index - w[0].frame_index).max(1) as f64;
            let scale = frame_rate / frames;
            ((w[1].x - w[0].x) * scale, (w[1].z - w[0].z) * scale)
        })
        .collect())
}

fn coord_order(a: &Detection, b: &Detection) -> Ordering {
    a.x.total_cmp(&b.x).then(a.z.total_cmp(&b.z))
}

struct OpenTrack {
    detections: Vec<Detection>,
}

impl OpenTrack {
    fn tail(&self) -> &Detection {
        self.detections.last().expect("open tracks are never empty")
    }
}

/// Greedy nearest-neighbor linking, frame by frame.
///
/// Candidate (track tail, detection) pairs are accepted in ascending distance
/// while both ends are free; ties are broken by coordinates so the result does
/// not depend on the input order within a frame.
pub fn link_detections(detections: &[Detection], params: &LinkParams) -> Result<Vec<Track>> {
    if !(params.max_link_distance >= 0.0) {
        return Err(invalid_param("max link distance must be non-negative"));
    }
    if !(params.frame_rate > 0.0) {
        return Err(invalid_param("frame rate must be positive"));
    }
    if detections.windows(2).any(|w| w[1].frame_index < w[0].frame_index) {
        return Err(invalid_param("detections must be sorted by frame"));
    }

    let mut open: Vec<OpenTrack> = Vec::new();
    let mut closed: Vec<OpenTrack> = Vec::new();
    let mut start = 0;
    while start < detections.len() {
        let frame = detections[start].frame_index;
        let end = start + detections[start..].iter().take_while(|d| d.frame_index == frame).count();
        let mut current: Vec<Detection> = detections[start..end].to_vec();
        current.sort_by(coord_order);
        start = end;

        // Close tracks that have coasted too long.
        let (keep, stale): (Vec<_>, Vec<_>) = open
            .into_iter()
            .partition(|t| frame - t.tail().frame_index <= params.max_gap + 1);
        closed.extend(stale);
        open = keep;

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in open.iter().enumerate() {
            let tail = t.tail();
            for (di, d) in current.iter().enumerate() {
                let dist = (d.x - tail.x).hypot(d.z - tail.z);
                if dist <= params.max_link_distance {
                    pairs.push((dist, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| coord_order(&current[a.2], &current[b.2]))
                .then_with(|| coord_order(open[a.1].tail(), open[b.1].tail()))
        });
        let mut track_used = vec![false; open.len()];
        let mut det_used = vec![false; current.len()];
        for (_, ti, di) in pairs {
            if track_used[ti] || det_used[di] {
                continue;
            }
            track_used[ti] = true;
            det_used[di] = true;
            open[ti].detections.push(current[di]);
        }
        for (d, used) in current.into_iter().zip(det_used) {
            if !used {
                open.push(OpenTrack { detections: vec![d] });
            }
        }
    }
    closed.extend(open);

    // Stable ids: order by first frame, then first position.
    closed.sort_by(|a, b| {
        a.detections[0]
            .frame_index
            .cmp(&b.detections[0].frame_index)
            .then_with(|| coord_order(&a.detections[0], &b.detections[0]))
    });
    let min_len = params.min_track_length.max(1);
    closed
        .into_iter()
        .filter(|t| t.detections.len() >= min_len)
        .enumerate()
        .map(|(id, t)| {
            let velocities = if t.detections.len() >= 2 {
                velocities(&t.detections, params.frame_rate)?
            } else {
                Vec::new()
            };
            Ok(Track { id, detections: t.detections, velocities })
        })
        .collect()
}
