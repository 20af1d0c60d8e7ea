//! Batch subcommands behind the `ulm` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{PipelineConfig, Rect};
use crate::error::{Result, UlmError};
use crate::io::{self, Raster};
use crate::metrics::{local_contrast_score, lateral_spread_score, ContrastMode, MetricReport, Region};
use crate::pipeline::{ground_truth_map, region_on_grid, run_pipeline, PipelineOutput};
use crate::rfsim::simulate_acquisition;
use crate::track::SuperResMap;

#[derive(Debug, Parser)]
#[command(name = "ulm", about = "Ultrasound localization microscopy with DAS and F-DMAS beamforming")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the configured phantom and write an RF container.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth canal map as a raster.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Beamform, localize, track, render and score an RF container.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an existing raster.
    Evaluate {
        #[arg(long)]
        map: PathBuf,
        /// `x_min,x_max,z_min,z_max` in meters; the whole raster when omitted.
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
        /// Wavelength in meters; defaults to the default probe's.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value = "masked")]
        mode: String,
    },
    /// Print an RF container header.
    Inspect { path: PathBuf },
    /// Print the full default configuration.
    Defaults,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::from_text(&fs::read_to_string(p)?),
        None => Ok(PipelineConfig::default()),
    }
}

pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path, truth: Option<&Path>) -> Result<String> {
    cfg.validate()?;
    let acq = simulate_acquisition(&cfg.phantom, &cfg.probe)?;
    let bytes = io::write_container(out, &acq)?;
    if let Some(t) = truth {
        let map = ground_truth_map(&cfg.phantom, &cfg.render_grid()?)?;
        write_map(t, &map, "ground_truth")?;
    }
    Ok(format!(
        "frames={} bubbles_per_frame={} samples={} channels={} bytes={}",
        acq.frames.len(),
        cfg.phantom.bubbles_per_frame,
        acq.n_samples(),
        acq.probe.n_elements,
        bytes
    ))
}

fn write_map(path: &Path, map: &SuperResMap, kind: &str) -> Result<()> {
    io::write_raster(path, &Raster { values: map.values.clone(), grid: map.grid, kind: kind.into() })?;
    io::write_pgm(&path.with_extension("pgm"), &map.values)
}

fn write_outputs(dir: &Path, cfg: &PipelineConfig, out: &PipelineOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    for b in &out.beamformers {
        let bdir = dir.join(b.beamformer.key());
        fs::create_dir_all(&bdir)?;
        let bm = Raster { values: b.bmode.values.clone(), grid: b.bmode.grid, kind: "bmode_db".into() };
        io::write_raster(&bdir.join("bmode.f32"), &bm)?;
        io::write_pgm(&bdir.join("bmode.pgm"), &bm.values)?;
        let floor = -cfg.bmode_dynamic_range_db;
        let pd_db = b.power_doppler.db.mapv(|v| v.max(floor));
        io::write_raster(
            &bdir.join("power_doppler.f32"),
            &Raster { values: pd_db.clone(), grid: b.power_doppler.grid, kind: "power_doppler_db".into() },
        )?;
        io::write_pgm(&bdir.join("power_doppler.pgm"), &pd_db)?;
        for c in &b.combinations {
            let cdir = bdir.join(c.localizer.key());
            fs::create_dir_all(&cdir)?;
            io::write_detections(&cdir.join("detections.csv"), &c.detections)?;
            io::write_tracks(&cdir.join("tracks.csv"), &c.tracks)?;
            write_map(&cdir.join("density.f32"), &c.density, "density")?;
            write_map(&cdir.join("velocity.f32"), &c.velocity, "velocity_norm")?;
        }
    }
    io::write_metrics(&dir.join("metrics.csv"), &out.reports())?;
    let mut log = String::new();
    for w in &out.warnings {
        let _ = writeln!(log, "warning: {w}");
    }
    fs::write(dir.join("run.log"), log)?;
    Ok(())
}

pub fn cmd_run(cfg: &PipelineConfig, input: &Path, out_dir: &Path) -> Result<String> {
    cfg.validate()?;
    let acq = io::read_container(input)?;
    if acq.probe != cfg.probe {
        return Err(UlmError::Config("container probe differs from the configured probe".into()));
    }
    let out = run_pipeline(&acq, cfg)?;
    write_outputs(out_dir, cfg, &out)?;
    let mut s = String::new();
    for w in &out.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    for r in out.reports() {
        let _ = writeln!(
            s,
            "{} {} contrast={:.4}±{:.4} spread={:.4}λ",
            r.beamformer, r.localizer, r.local_contrast_mean, r.local_contrast_std, r.lateral_spread_lambda
        );
    }
    Ok(s.trim_end().to_string())
}

fn parse_region(text: &str) -> Result<Rect> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| UlmError::InvalidInput(format!("region '{text}': {e}"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(UlmError::InvalidInput(format!("region '{text}' needs 4 values")));
    }
    Ok(Rect { x_min: v[0], x_max: v[1], z_min: v[2], z_max: v[3] })
}

/// Both metrics on a stored raster. Unlike the pipeline, a missing lateral spread is an error.
pub fn evaluate_raster(raster: &Raster, region: Option<Rect>, lambda: f64, mode: ContrastMode) -> Result<MetricReport> {
    let region = match region {
        Some(r) => region_on_grid(&raster.grid, &r)
            .ok_or_else(|| UlmError::InvalidInput("region lies outside the raster".into()))?,
        None => Region::whole(&raster.values),
    };
    let (mean, std) = if raster.values.iter().any(|&v| v > 0.0) {
        local_contrast_score(&raster.values, mode)?
    } else {
        (0.0, 0.0)
    };
    let spread = lateral_spread_score(&raster.values, region, raster.grid.dx, lambda).map_err(|e| {
        UlmError::InvalidInput(format!("lateral spread censored: {e}; local contrast {mean}, {std}"))
    })?;
    Ok(MetricReport {
        beamformer: "-".into(),
        localizer: raster.kind.clone(),
        local_contrast_mean: mean,
        local_contrast_std: std,
        lateral_spread_lambda: spread.lambdas,
    })
}

pub fn cmd_evaluate(map: &Path, region: Option<&str>, lambda: Option<f64>, mode: &str) -> Result<String> {
    let raster = io::read_raster(map)?;
    let lambda = lambda.unwrap_or_else(|| crate::rfsim::Probe::default().wavelength());
    let region = region.map(parse_region).transpose()?;
    let r = evaluate_raster(&raster, region, lambda, ContrastMode::from_key(mode)?)?;
    Ok(format!(
        "local_contrast_mean,local_contrast_std,lateral_spread_lambda\n{},{},{}",
        r.local_contrast_mean, r.local_contrast_std, r.lateral_spread_lambda
    ))
}

pub fn cmd_inspect(path: &Path) -> Result<String> {
    let h = io::read_header(path)?;
    Ok(format!(
        "magic=ULMF\nversion={}\nn_frames={}\nn_samples={}\nn_channels={}\npitch={}\nfc={}\nfs={}\nc={}\nframe_rate={}\nt0={}\npayload_bytes={}",
        h.version, h.n_frames, h.n_samples, h.n_channels, h.pitch, h.fc, h.fs, h.c, h.frame_rate, h.t0, h.payload_len()
    ))
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Simulate { config, out, truth } => {
            cmd_simulate(&load_config(config.as_deref())?, &out, truth.as_deref())
        }
        Command::Run { config, input, out } => {
            let cfg = load_config(config.as_deref())?;
            let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            cmd_run(&cfg, &input, &dir)
        }
        Command::Evaluate { map, region, lambda, mode } => cmd_evaluate(&map, region.as_deref(), lambda, &mode),
        Command::Inspect { path } => cmd_inspect(&path),
        Command::Defaults => Ok(PipelineConfig::default().to_text().trim_end().to_string()),
    }
}

/// Parses arguments, runs, prints; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            if !out.is_empty() {
                println!("{out}");
            }
            0
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.kind(), msg);
            1
        }
    }
}
