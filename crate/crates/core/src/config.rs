//! Plain-text `key=value` pipeline configuration with dotted sections.
//!
//! Unset keys fall back to defaults. Values written as `auto` are derived from
//! other settings when the pipeline runs. [`PipelineConfig::to_text`] emits
//! every key, and parsing that text reproduces the configuration exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::beamform::{Apodization, ApodizationKind, BandpassSpec, BeamGrid, Beamformer};
use crate::error::{Result, UlmError};
use crate::localize::{DetectorParams, Method, WeightedAverageMode};
use crate::metrics::ContrastMode;
use crate::rfsim::{Canal, Field, PhantomSpec, Probe};
use crate::track::LinkParams;

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    /// Imaging region; `None` uses the phantom field.
    pub region: Option<Rect>,
    /// Lateral and final axial pixel pitch; `None` means one wavelength.
    pub pitch: Option<f64>,
    /// Axial oversampling of the RF grid before envelope detection.
    pub rf_oversample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// `None` derives twice the largest per-frame canal displacement.
    pub max_link_distance: Option<f64>,
    pub max_gap: usize,
    pub min_track_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub probe: Probe,
    pub phantom: PhantomSpec,
    pub grid: GridConfig,
    pub apodization: Apodization,
    /// `None` centers the bandpass at twice the transmit frequency.
    pub bandpass_center: Option<f64>,
    pub bandpass_fractional_bandwidth: f64,
    pub bandpass_n_taps: usize,
    pub detector: DetectorParams,
    pub wa_mode: WeightedAverageMode,
    pub tracker: TrackerConfig,
    pub clutter_cut_low: usize,
    pub clutter_cut_high: usize,
    pub doppler_cut_low: usize,
    pub doppler_cut_high: usize,
    /// Super-resolved map pitch in wavelengths.
    pub render_pitch_lambda: f64,
    pub contrast_mode: ContrastMode,
    /// Lateral-spread region; `None` skips the score.
    pub spread_region: Option<Rect>,
    pub bmode_dynamic_range_db: f64,
    pub beamformers: Vec<Beamformer>,
    pub localizers: Vec<Method>,
    pub output_dir: PathBuf,
}

/// Lateral-spread box around the twin vertical canals of the bundled phantom.
fn default_spread_region(probe: &Probe) -> Rect {
    let lambda = probe.wavelength();
    Rect { x_min: -1.2e-3 - 1.5 * lambda, x_max: -1.2e-3 + 1.5 * lambda, z_min: 7.5e-3, z_max: 9.5e-3 }
}

impl PipelineConfig {
    pub fn for_probe(probe: Probe) -> Self {
        PipelineConfig {
            probe,
            phantom: PhantomSpec::bundled(&probe),
            grid: GridConfig { region: None, pitch: None, rf_oversample: 16 },
            apodization: Apodization::default(),
            bandpass_center: None,
            bandpass_fractional_bandwidth: 0.6,
            bandpass_n_taps: 63,
            detector: DetectorParams::default(),
            wa_mode: WeightedAverageMode::Matched,
            tracker: TrackerConfig { max_link_distance: None, max_gap: 0, min_track_length: 5 },
            clutter_cut_low: 0,
            clutter_cut_high: 0,
            doppler_cut_low: 1,
            doppler_cut_high: 0,
            render_pitch_lambda: 0.1,
            contrast_mode: ContrastMode::Masked,
            spread_region: Some(default_spread_region(&probe)),
            bmode_dynamic_range_db: 60.0,
            beamformers: vec![Beamformer::Das, Beamformer::Fdmas],
            localizers: Method::ALL.to_vec(),
            output_dir: PathBuf::from("ulm_out"),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.probe.wavelength()
    }

    pub fn bandpass(&self) -> BandpassSpec {
        BandpassSpec {
            center: self.bandpass_center.unwrap_or(2.0 * self.probe.fc),
            fractional_bandwidth: self.bandpass_fractional_bandwidth,
            n_taps: self.bandpass_n_taps,
        }
    }

    pub fn imaging_region(&self) -> Rect {
        self.grid.region.unwrap_or({
            let f = self.phantom.field;
            Rect { x_min: f.x_min, x_max: f.x_max, z_min: f.z_min, z_max: f.z_max }
        })
    }

    /// Final image grid at the configured pitch.
    pub fn image_grid(&self) -> Result<BeamGrid> {
        let r = self.imaging_region();
        let p = self.grid.pitch.unwrap_or(self.lambda());
        BeamGrid::square(r.x_min, r.x_max, r.z_min, r.z_max, p)
    }

    /// Beamforming grid: the image grid with rows refined by `rf_oversample`.
    pub fn rf_grid(&self) -> Result<BeamGrid> {
        let g = self.image_grid()?;
        let k = self.grid.rf_oversample;
        BeamGrid::new(g.x0, g.dx, g.nx, g.z0, g.dz / k as f64, (g.nz - 1) * k + 1)
    }

    /// Super-resolved map grid; bin centers tile the imaging region.
    pub fn render_grid(&self) -> Result<BeamGrid> {
        let r = self.imaging_region();
        let p = self.render_pitch_lambda * self.lambda();
        let nx = ((r.x_max - r.x_min) / p).round().max(1.0) as usize;
        let nz = ((r.z_max - r.z_min) / p).round().max(1.0) as usize;
        BeamGrid::new(r.x_min + 0.5 * p, p, nx, r.z_min + 0.5 * p, p, nz)
    }

    pub fn link_params(&self) -> LinkParams {
        let auto = || {
            let v = self.phantom.canals.iter().map(|c| c.speed).fold(0.0, f64::max);
            (2.0 * v / self.probe.frame_rate).max(0.5 * self.lambda())
        };
        LinkParams {
            max_link_distance: self.tracker.max_link_distance.unwrap_or_else(auto),
            max_gap: self.tracker.max_gap,
            min_track_length: self.tracker.min_track_length,
            frame_rate: self.probe.frame_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: UlmError| UlmError::Config(e.to_string());
        self.probe.validate().map_err(wrap)?;
        self.phantom.validate().map_err(wrap)?;
        self.image_grid().map_err(wrap)?;
        self.render_grid().map_err(wrap)?;
        let bpf = self.bandpass();
        let rf = self.rf_grid().map_err(wrap)?;
        bpf.validate(crate::beamform::axial_sampling_rate(&rf, self.probe.c)).map_err(wrap)?;
        let checks: [(bool, &str); 9] = [
            (self.grid.rf_oversample >= 1, "grid.rf_oversample must be at least 1"),
            (self.apodization.f_number > 0.0, "apodization.f_number must be positive"),
            (self.detector.max_count >= 1, "detector.max_count must be at least 1"),
            (
                self.detector.threshold_rel >= 0.0 && self.detector.threshold_rel <= 1.0,
                "detector.threshold_rel must lie in [0, 1]",
            ),
            (self.tracker.min_track_length >= 1, "tracker.min_track_length must be at least 1"),
            (self.render_pitch_lambda > 0.0, "render.pitch_lambda must be positive"),
            (self.bmode_dynamic_range_db > 0.0, "bmode.dynamic_range_db must be positive"),
            (!self.beamformers.is_empty(), "run.beamformers selects nothing"),
            (!self.localizers.is_empty(), "run.localizers selects nothing"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(UlmError::Config(msg.into()));
            }
        }
        if let Some(d) = self.tracker.max_link_distance {
            if !(d > 0.0) {
                return Err(UlmError::Config("tracker.max_link_distance must be positive".into()));
            }
        }
        Ok(())
    }

    /// Every key, one per line, in a stable order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let p = &self.probe;
        put("probe.n_elements", p.n_elements.to_string());
        put("probe.pitch", p.pitch.to_string());
        put("probe.fc", p.fc.to_string());
        put("probe.fs", p.fs.to_string());
        put("probe.c", p.c.to_string());
        put("probe.frame_rate", p.frame_rate.to_string());
        let ph = &self.phantom;
        put("phantom.field", rect_text(&field_rect(&ph.field)));
        put("phantom.bubbles_per_frame", ph.bubbles_per_frame.to_string());
        put("phantom.n_frames", ph.n_frames.to_string());
        put("phantom.noise_db", ph.noise_db.map_or("off".into(), |v| v.to_string()));
        put("phantom.pulse_cycles", ph.pulse_cycles.to_string());
        put("rng_seed", ph.rng_seed.to_string());
        for (k, c) in ph.canals.iter().enumerate() {
            let pts: Vec<String> = c.points.iter().map(|(x, z)| format!("{x}:{z}")).collect();
            put(&format!("phantom.canal.{k}.points"), pts.join(";"));
            put(&format!("phantom.canal.{k}.diameter"), c.diameter.to_string());
            put(&format!("phantom.canal.{k}.speed"), c.speed.to_string());
        }
        put("grid.region", self.grid.region.map_or("auto".into(), |r| rect_text(&r)));
        put("grid.pitch", auto_text(self.grid.pitch));
        put("grid.rf_oversample", self.grid.rf_oversample.to_string());
        put("apodization.kind", apod_key(self.apodization.kind).into());
        put("apodization.f_number", self.apodization.f_number.to_string());
        put("bandpass.center", auto_text(self.bandpass_center));
        put("bandpass.fractional_bandwidth", self.bandpass_fractional_bandwidth.to_string());
        put("bandpass.n_taps", self.bandpass_n_taps.to_string());
        put("detector.max_count", self.detector.max_count.to_string());
        put("detector.min_separation_px", self.detector.min_separation_px.to_string());
        put("detector.threshold_rel", self.detector.threshold_rel.to_string());
        put("localizer.wa_mode", wa_key(self.wa_mode).into());
        put("tracker.max_link_distance", auto_text(self.tracker.max_link_distance));
        put("tracker.max_gap", self.tracker.max_gap.to_string());
        put("tracker.min_track_length", self.tracker.min_track_length.to_string());
        put("clutter.cut_low", self.clutter_cut_low.to_string());
        put("clutter.cut_high", self.clutter_cut_high.to_string());
        put("doppler.cut_low", self.doppler_cut_low.to_string());
        put("doppler.cut_high", self.doppler_cut_high.to_string());
        put("render.pitch_lambda", self.render_pitch_lambda.to_string());
        put("metrics.contrast_mode", self.contrast_mode.key().into());
        put("metrics.spread_region", self.spread_region.map_or("none".into(), |r| rect_text(&r)));
        put("bmode.dynamic_range_db", self.bmode_dynamic_range_db.to_string());
        let bfs: Vec<&str> = self.beamformers.iter().map(Beamformer::key).collect();
        put("run.beamformers", bfs.join(","));
        let locs: Vec<&str> = self.localizers.iter().map(Method::key).collect();
        put("run.localizers", locs.join(","));
        put("output.dir", self.output_dir.display().to_string());
        s
    }

    /// Parses `key=value` lines; `#` starts a comment. Unknown or repeated keys are errors.
    /// If any `phantom.canal.*` key is present the canal list is replaced entirely.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if kv.insert(k.clone(), v).is_some() {
                return Err(cfg_err(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        let mut keys = Keys { kv };

        let mut probe = Probe::default();
        keys.parse("probe.n_elements", &mut probe.n_elements)?;
        keys.parse("probe.pitch", &mut probe.pitch)?;
        keys.parse("probe.fc", &mut probe.fc)?;
        keys.parse("probe.fs", &mut probe.fs)?;
        keys.parse("probe.c", &mut probe.c)?;
        keys.parse("probe.frame_rate", &mut probe.frame_rate)?;

        let mut cfg = PipelineConfig::for_probe(probe);
        let ph = &mut cfg.phantom;
        if let Some(v) = keys.take("phantom.field") {
            let r = parse_rect(&v)?;
            ph.field = Field { x_min: r.x_min, x_max: r.x_max, z_min: r.z_min, z_max: r.z_max };
        }
        keys.parse("phantom.bubbles_per_frame", &mut ph.bubbles_per_frame)?;
        keys.parse("phantom.n_frames", &mut ph.n_frames)?;
        if let Some(v) = keys.take("phantom.noise_db") {
            ph.noise_db = if v == "off" { None } else { Some(parse_num(&v, "phantom.noise_db")?) };
        }
        keys.parse("phantom.pulse_cycles", &mut ph.pulse_cycles)?;
        keys.parse("rng_seed", &mut ph.rng_seed)?;
        let canal_keys: Vec<String> = keys.kv.keys().filter(|k| k.starts_with("phantom.canal.")).cloned().collect();
        if !canal_keys.is_empty() {
            let mut canals = Vec::new();
            for k in 0.. {
                let prefix = format!("phantom.canal.{k}.");
                if !canal_keys.iter().any(|c| c.starts_with(&prefix)) {
                    break;
                }
                let need = |keys: &mut Keys, f: &str| {
                    keys.take(&format!("{prefix}{f}")).ok_or_else(|| cfg_err(format!("missing {prefix}{f}")))
                };
                let points = parse_points(&need(&mut keys, "points")?)?;
                let diameter = parse_num(&need(&mut keys, "diameter")?, "canal diameter")?;
                let speed = parse_num(&need(&mut keys, "speed")?, "canal speed")?;
                canals.push(Canal { points, diameter, speed });
            }
            ph.canals = canals;
        }

        if let Some(v) = keys.take("grid.region") {
            cfg.grid.region = if v == "auto" { None } else { Some(parse_rect(&v)?) };
        }
        keys.parse_auto("grid.pitch", &mut cfg.grid.pitch)?;
        keys.parse("grid.rf_oversample", &mut cfg.grid.rf_oversample)?;
        if let Some(v) = keys.take("apodization.kind") {
            cfg.apodization.kind = match v.as_str() {
                "hann" => ApodizationKind::Hann,
                "rect" => ApodizationKind::Rect,
                _ => return Err(cfg_err(format!("apodization.kind: unknown '{v}'"))),
            };
        }
        keys.parse("apodization.f_number", &mut cfg.apodization.f_number)?;
        keys.parse_auto("bandpass.center", &mut cfg.bandpass_center)?;
        keys.parse("bandpass.fractional_bandwidth", &mut cfg.bandpass_fractional_bandwidth)?;
        keys.parse("bandpass.n_taps", &mut cfg.bandpass_n_taps)?;
        keys.parse("detector.max_count", &mut cfg.detector.max_count)?;
        keys.parse("detector.min_separation_px", &mut cfg.detector.min_separation_px)?;
        keys.parse("detector.threshold_rel", &mut cfg.detector.threshold_rel)?;
        if let Some(v) = keys.take("localizer.wa_mode") {
            cfg.wa_mode = match v.as_str() {
                "matched" => WeightedAverageMode::Matched,
                "literal" => WeightedAverageMode::Literal,
                _ => return Err(cfg_err(format!("localizer.wa_mode: unknown '{v}'"))),
            };
        }
        keys.parse_auto("tracker.max_link_distance", &mut cfg.tracker.max_link_distance)?;
        keys.parse("tracker.max_gap", &mut cfg.tracker.max_gap)?;
        keys.parse("tracker.min_track_length", &mut cfg.tracker.min_track_length)?;
        keys.parse("clutter.cut_low", &mut cfg.clutter_cut_low)?;
        keys.parse("clutter.cut_high", &mut cfg.clutter_cut_high)?;
        keys.parse("doppler.cut_low", &mut cfg.doppler_cut_low)?;
        keys.parse("doppler.cut_high", &mut cfg.doppler_cut_high)?;
        keys.parse("render.pitch_lambda", &mut cfg.render_pitch_lambda)?;
        if let Some(v) = keys.take("metrics.contrast_mode") {
            cfg.contrast_mode = ContrastMode::from_key(&v).map_err(|e| cfg_err(e.to_string()))?;
        }
        if let Some(v) = keys.take("metrics.spread_region") {
            cfg.spread_region = if v == "none" { None } else { Some(parse_rect(&v)?) };
        }
        keys.parse("bmode.dynamic_range_db", &mut cfg.bmode_dynamic_range_db)?;
        if let Some(v) = keys.take("run.beamformers") {
            cfg.beamformers = parse_beamformers(&v)?;
        }
        if let Some(v) = keys.take("run.localizers") {
            cfg.localizers = parse_list(&v, |s| Method::from_key(s).map_err(|e| cfg_err(e.to_string())))?;
        }
        if let Some(v) = keys.take("output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(k) = keys.kv.keys().next() {
            return Err(cfg_err(format!("unknown key '{k}'")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::for_probe(Probe::default())
    }
}

struct Keys {
    kv: BTreeMap<String, String>,
}

impl Keys {
    fn take(&mut self, k: &str) -> Option<String> {
        self.kv.remove(k)
    }

    fn parse<T: std::str::FromStr>(&mut self, k: &str, out: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(k) {
            *out = v.parse().map_err(|e| cfg_err(format!("{k}: '{v}': {e}")))?;
        }
        Ok(())
    }

    fn parse_auto(&mut self, k: &str, out: &mut Option<f64>) -> Result<()> {
        if let Some(v) = self.take(k) {
            *out = if v == "auto" { None } else { Some(parse_num(&v, k)?) };
        }
        Ok(())
    }
}

fn cfg_err(msg: impl Into<String>) -> UlmError {
    UlmError::Config(msg.into())
}

fn parse_num(v: &str, what: &str) -> Result<f64> {
    v.trim().parse().map_err(|e| cfg_err(format!("{what}: '{v}': {e}")))
}

fn parse_list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect()
}

fn parse_beamformers(v: &str) -> Result<Vec<Beamformer>> {
    if v == "both" {
        return Ok(vec![Beamformer::Das, Beamformer::Fdmas]);
    }
    parse_list(v, |s| match s.to_ascii_lowercase().as_str() {
        "das" => Ok(Beamformer::Das),
        "fdmas" | "f-dmas" => Ok(Beamformer::Fdmas),
        _ => Err(cfg_err(format!("unknown beamformer '{s}'"))),
    })
}

fn parse_rect(v: &str) -> Result<Rect> {
    let n = parse_list(v, |s| parse_num(s, "rectangle"))?;
    if n.len() != 4 {
        return Err(cfg_err(format!("expected x_min,x_max,z_min,z_max, got '{v}'")));
    }
    Ok(Rect { x_min: n[0], x_max: n[1], z_min: n[2], z_max: n[3] })
}

fn parse_points(v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(';')
        .map(|p| {
            let (x, z) = p.split_once(':').ok_or_else(|| cfg_err(format!("canal point '{p}' is not x:z")))?;
            Ok((parse_num(x, "canal x")?, parse_num(z, "canal z")?))
        })
        .collect()
}

fn rect_text(r: &Rect) -> String {
    format!("{},{},{},{}", r.x_min, r.x_max, r.z_min, r.z_max)
}

fn field_rect(f: &Field) -> Rect {
    Rect { x_min: f.x_min, x_max: f.x_max, z_min: f.z_min, z_max: f.z_max }
}

fn auto_text(v: Option<f64>) -> String {
    v.map_or("auto".into(), |x| x.to_string())
}

fn apod_key(k: ApodizationKind) -> &'static str {
    match k {
        ApodizationKind::Hann => "hann",
        ApodizationKind::Rect => "rect",
    }
}

fn wa_key(m: WeightedAverageMode) -> &'static str {
    match m {
        WeightedAverageMode::Matched => "matched",
        WeightedAverageMode::Literal => "literal",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_text();
        let back = PipelineConfig::from_text(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn custom_values_round_trip() {
        let text = "\
# custom run
probe.fc = 7.8125e6
phantom.noise_db = off
phantom.n_frames = 12
phantom.field = -2e-3,2e-3,4e-3,9e-3
phantom.canal.0.points = 0:5e-3;0.0001:8e-3
phantom.canal.0.diameter = 3e-5
phantom.canal.0.speed = 0.025
tracker.max_link_distance = 1e-4
localizer.wa_mode = literal
metrics.spread_region = none
run.beamformers = fdmas
run.localizers = rs,gauss_fit
";
        let cfg = PipelineConfig::from_text(text).unwrap();
        assert_eq!(cfg.phantom.canals.len(), 1);
        assert_eq!(cfg.phantom.noise_db, None);
        assert_eq!(cfg.localizers, vec![Method::RadialSymmetry, Method::GaussFit]);
        assert_eq!(cfg.bandpass().center, 2.0 * 7.8125e6);
        assert_eq!(PipelineConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in [
            "phantom.n_frames=0",
            "nonsense.key=1",
            "probe.fc=abc",
            "probe.fc=1\nprobe.fc=2",
            "phantom.canal.0.points=0:7e-3;0:8e-3",
            "run.localizers=",
            "just text",
        ] {
            assert!(matches!(PipelineConfig::from_text(bad), Err(UlmError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn derived_grids() {
        let cfg = PipelineConfig::default();
        let img = cfg.image_grid().unwrap();
        let rf = cfg.rf_grid().unwrap();
        assert_eq!(rf.decimate_rows(16).unwrap(), img);
        let r = cfg.render_grid().unwrap();
        assert!((r.dx - 0.1 * cfg.lambda()).abs() < 1e-15);
        let link = cfg.link_params();
        assert!((link.max_link_distance - (2.0_f64 * 15e-3 / 500.0).max(0.5 * cfg.lambda())).abs() < 1e-15);
    }
}
