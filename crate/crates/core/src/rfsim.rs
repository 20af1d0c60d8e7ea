//! Synthetic plane-wave RF acquisition of a microvascular phantom.
//!
//! Single-scattering point model: every microbubble is a unit scatterer whose
//! echo reaches element `i` after the plane-wave transmit leg `z_s` plus the
//! receive leg back to the element. Echo amplitude falls off as
//! `1 / max(z_s, z_min)`.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid_input, invalid_param, Result};

/// Floor applied to the depth in the spreading-loss term.
pub const SPREADING_Z_MIN: f64 = 1e-3;

const STREAM_NOISE: u64 = 1 << 62;

/// Linear array transducer and acquisition timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub n_elements: usize,
    /// Element pitch (m).
    pub pitch: f64,
    /// Transmit center frequency (Hz).
    pub fc: f64,
    /// RF sampling frequency (Hz).
    pub fs: f64,
    /// Speed of sound (m/s).
    pub c: f64,
    /// Plane-wave frame rate (Hz).
    pub frame_rate: f64,
}

impl Default for Probe {
    fn default() -> Self {
        Probe {
            n_elements: 128,
            pitch: 0.11e-3,
            fc: 15.625e6,
            fs: 100e6,
            c: 1540.0,
            frame_rate: 500.0,
        }
    }
}

impl Probe {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements < 2 {
            return Err(invalid_param("probe needs at least 2 elements"));
        }
        let positive = [
            ("pitch", self.pitch),
            ("fc", self.fc),
            ("fs", self.fs),
            ("c", self.c),
            ("frame_rate", self.frame_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid_param(format!("probe.{name} must be positive, got {v}")));
            }
        }
        if self.fs <= 2.0 * self.fc {
            return Err(invalid_param(format!(
                "sampling rate {} Hz aliases the {} Hz carrier",
                self.fs, self.fc
            )));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        self.c / self.fc
    }

    /// Lateral position of element `i`; the aperture is centered on x = 0.
    pub fn element_x(&self, i: usize) -> f64 {
        (i as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn element_positions(&self) -> Vec<f64> {
        (0..self.n_elements).map(|i| self.element_x(i)).collect()
    }
}

/// Hann-windowed cosine burst with unit peak at `tau = 0`.
#[derive(Debug, Clone, Copy)]
pub struct Pulse {
    fc: f64,
    duration: f64,
}

impl Pulse {
    pub fn new(probe: &Probe, n_cycles: usize) -> Result<Self> {
        probe.validate()?;
        if n_cycles == 0 {
            return Err(invalid_param("pulse needs at least one cycle"));
        }
        let len = pulse_len(probe, n_cycles);
        Ok(Pulse {
            fc: probe.fc,
            duration: len as f64 / probe.fs,
        })
    }

    pub fn half_duration(&self) -> f64 {
        0.5 * self.duration
    }

    /// Continuous waveform; zero outside the window support.
    pub fn eval(&self, tau: f64) -> f64 {
        if tau.abs() >= self.half_duration() {
            return 0.0;
        }
        let w = (std::f64::consts::PI * tau / self.duration).cos();
        w * w * (2.0 * std::f64::consts::PI * self.fc * tau).cos()
    }
}

fn pulse_len(probe: &Probe, n_cycles: usize) -> usize {
    ((n_cycles as f64 * probe.fs / probe.fc).round() as usize).max(1)
}

/// Samples the transmit pulse at `fs`: `round(n_cycles * fs / fc)` samples,
/// centered on the window, scaled to a peak magnitude of 1.
pub fn make_pulse(probe: &Probe, n_cycles: usize) -> Result<Vec<f64>> {
    let pulse = Pulse::new(probe, n_cycles)?;
    let len = pulse_len(probe, n_cycles);
    let mid = (len as f64 - 1.0) / 2.0;
    let mut samples: Vec<f64> = (0..len)
        .map(|k| pulse.eval((k as f64 - mid) / probe.fs))
        .collect();
    let peak = samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 && peak != 1.0 {
        samples.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(samples)
}

/// Axis-aligned imaging field (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Field {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min && x <= self.x_max && z >= self.z_min && z <= self.z_max
    }
}

/// A vessel: polyline centerline, lumen diameter and mean flow speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Canal {
    /// Ordered control points `(x, z)` in meters. Flow runs from first to last.
    pub points: Vec<(f64, f64)>,
    pub diameter: f64,
    /// Mean flow speed (m/s).
    pub speed: f64,
}

impl Canal {
    fn segment_lengths(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .collect()
    }

    pub fn length(&self) -> f64 {
        self.segment_lengths().iter().sum()
    }

    /// Centerline point and unit normal at arc length `s` (clamped to the canal).
    pub fn point_at(&self, s: f64) -> ((f64, f64), (f64, f64)) {
        let lengths = self.segment_lengths();
        let mut remaining = s.max(0.0);
        for (k, &len) in lengths.iter().enumerate() {
            if remaining <= len || k + 1 == lengths.len() {
                let (a, b) = (self.points[k], self.points[k + 1]);
                let t = if len > 0.0 { (remaining / len).min(1.0) } else { 0.0 };
                let tx = (b.0 - a.0) / len;
                let tz = (b.1 - a.1) / len;
                return ((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)), (-tz, tx));
            }
            remaining -= len;
        }
        unreachable!("validated canals have at least one segment")
    }

    /// Shortest distance from `(x, z)` to the centerline.
    pub fn distance_to_centerline(&self, x: f64, z: f64) -> f64 {
        self.points
            .windows(2)
            .map(|w| point_segment_distance((x, z), w[0], w[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dz) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dz * dz;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dz) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dz)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub field: Field,
    pub canals: Vec<Canal>,
    /// Number of bubbles in flight in every frame, shared across canals by length.
    pub bubbles_per_frame: usize,
    pub n_frames: usize,
    /// White-noise level relative to the reference echo (dB); `None` disables noise.
    pub noise_db: Option<f64>,
    pub pulse_cycles: usize,
    pub rng_seed: u64,
}

impl PhantomSpec {
    /// Reduced analogue of a microvascular flow phantom: two vertical canals
    /// 0.4λ apart (center to center), one horizontal canal and one S-shaped canal.
    pub fn bundled(probe: &Probe) -> Self {
        let lambda = probe.wavelength();
        let twin_x = -1.2e-3;
        let twin_half = 0.2 * lambda;
        let s_curve: Vec<(f64, f64)> = (0..=24)
            .map(|k| {
                let z = 7.6e-3 + 2.6e-3 * k as f64 / 24.0;
                let x = 1.2e-3 + 0.4e-3 * (2.0 * std::f64::consts::PI * (z - 7.6e-3) / 2.6e-3).sin();
                (x, z)
            })
            .collect();
        PhantomSpec {
            field: Field {
                x_min: -2.5e-3,
                x_max: 2.5e-3,
                z_min: 6.5e-3,
                z_max: 10.5e-3,
            },
            canals: vec![
                Canal {
                    points: vec![(twin_x - twin_half, 7.0e-3), (twin_x - twin_half, 10.0e-3)],
                    diameter: 0.1 * lambda,
                    speed: 8e-3,
                },
                Canal {
                    points: vec![(twin_x + twin_half, 7.0e-3), (twin_x + twin_half, 10.0e-3)],
                    diameter: 0.1 * lambda,
                    speed: 8e-3,
                },
                Canal {
                    points: vec![(-0.5e-3, 7.1e-3), (2.2e-3, 7.1e-3)],
                    diameter: 0.3 * lambda,
                    speed: 15e-3,
                },
                Canal {
                    points: s_curve,
                    diameter: 0.2 * lambda,
                    speed: 12e-3,
                },
            ],
            bubbles_per_frame: 8,
            n_frames: 200,
            noise_db: Some(-20.0),
            pulse_cycles: 5,
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(invalid_param("phantom.n_frames must be at least 1"));
        }
        if self.pulse_cycles == 0 {
            return Err(invalid_param("phantom.pulse_cycles must be at least 1"));
        }
        let f = &self.field;
        if !(f.x_min < f.x_max && f.z_min < f.z_max && f.z_min > 0.0) {
            return Err(invalid_param("phantom field must be a non-empty region below the probe"));
        }
        for (k, canal) in self.canals.iter().enumerate() {
            if canal.points.len() < 2 {
                return Err(invalid_param(format!("canal {k} needs at least 2 control points")));
            }
            if !(canal.diameter > 0.0) {
                return Err(invalid_param(format!("canal {k} diameter must be positive")));
            }
            if !(canal.speed >= 0.0 && canal.speed.is_finite()) {
                return Err(invalid_param(format!("canal {k} speed must be non-negative")));
            }
            if let Some(p) = canal.points.iter().find(|p| !f.contains(p.0, p.1)) {
                return Err(invalid_param(format!(
                    "canal {k} control point ({}, {}) lies outside the imaging field",
                    p.0, p.1
                )));
            }
            if canal.segment_lengths().iter().any(|&l| l <= 0.0) {
                return Err(invalid_param(format!("canal {k} has repeated control points")));
            }
        }
        if let Some(db) = self.noise_db {
            if !db.is_finite() {
                return Err(invalid_param("phantom.noise_db must be finite"));
            }
        }
        Ok(())
    }

    /// Number of bubbles per canal (largest-remainder split by canal length).
    pub fn bubble_allocation(&self) -> Vec<usize> {
        if self.canals.is_empty() {
            return Vec::new();
        }
        let lengths: Vec<f64> = self.canals.iter().map(Canal::length).collect();
        let total: f64 = lengths.iter().sum();
        let quotas: Vec<f64> = lengths
            .iter()
            .map(|l| self.bubbles_per_frame as f64 * l / total)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = self.bubbles_per_frame - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[k] += 1;
            left -= 1;
        }
        counts
    }

    /// Amplitude of a unit scatterer at the shallowest canal depth; the noise reference.
    pub fn reference_echo(&self) -> f64 {
        let z = self
            .canals
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.1))
            .fold(f64::INFINITY, f64::min);
        let z = if z.is_finite() { z } else { self.field.z_min };
        1.0 / z.max(SPREADING_Z_MIN)
    }

    /// Deepest point any echo must be recorded from.
    fn max_depth(&self) -> f64 {
        self.field.z_max
    }
}

/// One scatterer position in a given frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    /// Stable across frames; a respawned bubble keeps its id but its `pass` increments.
    pub id: usize,
    pub canal: usize,
    /// Number of completed canal traversals.
    pub pass: u64,
    pub x: f64,
    pub z: f64,
    /// Transverse offset from the centerline (m).
    pub jitter: f64,
}

fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) << 8);
    rng
}

/// Transverse entry offset of a bubble on a given pass, uniform in `[-d/2, d/2]`.
pub fn spawn_jitter(seed: u64, bubble: usize, pass: u64, diameter: f64) -> f64 {
    let mut rng = stream_rng(seed, 2 * bubble as u64 + 1, pass);
    let u: f64 = rng.gen_range(-0.5..=0.5);
    (u * diameter).clamp(-0.5 * diameter, 0.5 * diameter)
}

/// Positions of all bubbles at `frame_index`. Pure in `(spec, frame_rate, frame_index)`.
pub fn advance_bubbles(spec: &PhantomSpec, frame_rate: f64, frame_index: usize) -> Result<Vec<Bubble>> {
    if frame_index >= spec.n_frames {
        return Err(invalid_param(format!(
            "frame {frame_index} out of range for {} frames",
            spec.n_frames
        )));
    }
    if !(frame_rate > 0.0) {
        return Err(invalid_param("frame rate must be positive"));
    }
    let mut bubbles = Vec::with_capacity(spec.bubbles_per_frame);
    let mut id = 0;
    for (k, (canal, count)) in spec.canals.iter().zip(spec.bubble_allocation()).enumerate() {
        let length = canal.length();
        for _ in 0..count {
            let mut init = stream_rng(spec.rng_seed, 2 * id as u64, 0);
            let s0: f64 = init.gen_range(0.0..length);
            let travelled = s0 + canal.speed * frame_index as f64 / frame_rate;
            let pass = (travelled / length).floor();
            let s = travelled - pass * length;
            let pass = pass as u64;
            let jitter = spawn_jitter(spec.rng_seed, id, pass, canal.diameter);
            let ((cx, cz), (nx, nz)) = canal.point_at(s);
            bubbles.push(Bubble {
                id,
                canal: k,
                pass,
                x: cx + jitter * nx,
                z: cz + jitter * nz,
                jitter,
            });
            id += 1;
        }
    }
    Ok(bubbles)
}

/// One frame of per-channel RF, `samples[[sample, channel]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    pub samples: Array2<f32>,
    pub frame_index: usize,
    pub probe: Probe,
    /// Time of the first sample relative to transmit (s).
    pub t0: f64,
}

impl RfFrame {
    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels() != self.probe.n_elements {
            return Err(invalid_input(format!(
                "frame has {} channels, probe has {} elements",
                self.n_channels(),
                self.probe.n_elements
            )));
        }
        if self.n_samples() == 0 {
            return Err(invalid_input("frame has no samples"));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(invalid_input("frame contains non-finite samples"));
        }
        Ok(())
    }
}

/// Record length that covers the deepest field point seen by the outermost element.
pub fn record_length(spec: &PhantomSpec, probe: &Probe) -> usize {
    let f = &spec.field;
    let z = spec.max_depth();
    let aperture = probe.element_x(probe.n_elements - 1);
    let lateral = (aperture + f.x_max.abs().max(f.x_min.abs())).abs();
    let t_max = (z + lateral.hypot(z)) / probe.c;
    let tail = pulse_len(probe, spec.pulse_cycles) + 2;
    (t_max * probe.fs).ceil() as usize + tail
}

/// Two-way plane-wave arrival time of a scatterer at element `x_i`.
pub fn arrival_time(x_s: f64, z_s: f64, x_i: f64, c: f64) -> f64 {
    (z_s + (x_i - x_s).hypot(z_s)) / c
}

/// Adds one scatterer's echoes into a `[n_samples × n_channels]` f64 buffer.
fn add_scatterer(buf: &mut Array2<f64>, probe: &Probe, pulse: &Pulse, x_s: f64, z_s: f64) {
    let amp = 1.0 / z_s.max(SPREADING_Z_MIN);
    let n_samples = buf.nrows();
    let half = pulse.half_duration();
    for ch in 0..probe.n_elements {
        let t = arrival_time(x_s, z_s, probe.element_x(ch), probe.c);
        let first = (((t - half) * probe.fs).floor().max(0.0)) as usize;
        let last = (((t + half) * probe.fs).ceil() as usize).min(n_samples.saturating_sub(1));
        for n in first..=last {
            buf[[n, ch]] += amp * pulse.eval(n as f64 / probe.fs - t);
        }
    }
}

/// Noiseless RF of an explicit scatterer list.
pub fn simulate_scatterers(
    probe: &Probe,
    pulse_cycles: usize,
    n_samples: usize,
    scatterers: &[(f64, f64)],
) -> Result<Array2<f64>> {
    probe.validate()?;
    let pulse = Pulse::new(probe, pulse_cycles)?;
    if let Some(s) = scatterers.iter().find(|s| !(s.1 > 0.0)) {
        return Err(invalid_param(format!("scatterer depth must be positive, got {}", s.1)));
    }
    let mut buf = Array2::<f64>::zeros((n_samples, probe.n_elements));
    for &(x, z) in scatterers {
        add_scatterer(&mut buf, probe, &pulse, x, z);
    }
    Ok(buf)
}

/// Builds an `RfFrame` from scatterers, with optional seeded white noise.
pub fn frame_from_scatterers(
    probe: &Probe,
    pulse_cycles: usize,
    n_samples: usize,
    scatterers: &[(f64, f64)],
    noise: Option<(f64, u64)>,
    frame_index: usize,
) -> Result<RfFrame> {
    let mut buf = simulate_scatterers(probe, pulse_cycles, n_samples, scatterers)?;
    if let Some((sigma, seed)) = noise {
        if sigma > 0.0 {
            let mut rng = stream_rng(seed, STREAM_NOISE | frame_index as u64, 0);
            let normal = Normal::new(0.0, sigma).map_err(|e| invalid_param(e.to_string()))?;
            buf.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
        }
    }
    Ok(RfFrame {
        samples: buf.mapv(|v| v as f32),
        frame_index,
        probe: *probe,
        t0: 0.0,
    })
}

pub fn simulate_frame(spec: &PhantomSpec, probe: &Probe, frame_index: usize) -> Result<RfFrame> {
    spec.validate()?;
    probe.validate()?;
    let bubbles = advance_bubbles(spec, probe.frame_rate, frame_index)?;
    let positions: Vec<(f64, f64)> = bubbles.iter().map(|b| (b.x, b.z)).collect();
    let noise = spec
        .noise_db
        .map(|db| (spec.reference_echo() * 10f64.powf(db / 20.0), spec.rng_seed));
    frame_from_scatterers(
        probe,
        spec.pulse_cycles,
        record_length(spec, probe),
        &positions,
        noise,
        frame_index,
    )
}

/// A full acquisition: consecutive frames sharing one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub probe: Probe,
    pub frames: Vec<RfFrame>,
}

impl Acquisition {
    pub fn n_samples(&self) -> usize {
        self.frames.first().map_or(0, RfFrame::n_samples)
    }
}

/// Simulates every frame of the phantom; frames are generated in parallel.
pub fn simulate_acquisition(spec: &PhantomSpec, probe: &Probe) -> Result<Acquisition> {
    spec.validate()?;
    probe.validate()?;
    let frames = (0..spec.n_frames)
        .into_par_iter()
        .map(|k| simulate_frame(spec, probe, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(Acquisition { probe: *probe, frames })
}
