use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ulm_core::config::PipelineConfig;

fn ulm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ulm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.txt");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn simulate(dir: &Path, cfg: &str) -> String {
    let acq = dir.join("acq.ulmf");
    let o = ulm(&["simulate", "--config", cfg, "--out", acq.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    acq.to_str().unwrap().to_string()
}

#[test]
fn defaults_round_trip_through_the_parser() {
    let o = ulm(&["defaults"]);
    assert!(o.status.success());
    let cfg = PipelineConfig::from_text(&stdout(&o)).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn simulate_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phantom.n_frames = 3\n");
    let o = ulm(&["simulate", "--config", &cfg, "--out", dir.path().join("a.ulmf").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("frames=3 "));
    let o = ulm(&["inspect", dir.path().join("a.ulmf").to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("magic=ULMF"));
    assert!(text.contains("n_frames=3\n"));
    assert!(text.contains("n_channels=128\n"));
}

#[test]
fn zero_frames_is_a_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phantom.n_frames = 0\n");
    let o = ulm(&["simulate", "--config", &cfg, "--out", dir.path().join("a.ulmf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert!(err.contains("n_frames"));
    assert_eq!(err.trim_end().lines().count(), 1);
    assert!(!dir.path().join("a.ulmf").exists());
}

#[test]
fn single_combination_run_writes_one_metric_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "phantom.n_frames = 12\nphantom.bubbles_per_frame = 4\nrun.beamformers = das\nrun.localizers = rs\n",
    );
    let acq = simulate(dir.path(), &cfg);
    let out = dir.path().join("out");
    let o = ulm(&["run", "--config", &cfg, "--input", &acq, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines.len(), 2, "{metrics}");
    assert_eq!(lines[0], "beamformer,localizer,local_contrast_mean,local_contrast_std,lateral_spread_lambda");
    assert!(lines[1].starts_with("DAS,RS,"));
    for f in ["config.txt", "run.log", "das/bmode.f32", "das/bmode.txt", "das/power_doppler.pgm"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    for f in ["detections.csv", "tracks.csv", "density.f32", "density.pgm", "velocity.f32"] {
        assert!(out.join("das/rs").join(f).exists(), "{f} missing");
    }
    assert!(!out.join("fdmas").exists());
    let saved = PipelineConfig::from_text(&fs::read_to_string(out.join("config.txt")).unwrap()).unwrap();
    assert_eq!(saved, PipelineConfig::from_text(&fs::read_to_string(&cfg).unwrap()).unwrap());
}

#[test]
fn truth_raster_evaluates_to_one_bin_spread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phantom.n_frames = 1\n");
    let truth = dir.path().join("truth.f32");
    let o = ulm(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        dir.path().join("a.ulmf").to_str().unwrap(),
        "--truth",
        truth.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let d = PipelineConfig::default();
    let r = d.spread_region.unwrap();
    let region = format!("{},{},{},{}", r.x_min, r.x_max, r.z_min, r.z_max);
    let o = ulm(&["evaluate", "--map", truth.to_str().unwrap(), "--region", &region]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!(row[0] > 0.0);
    assert!((row[2] - 0.1).abs() < 1e-9, "{text}");
}

#[test]
fn evaluate_outside_region_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phantom.n_frames = 1\n");
    let truth = dir.path().join("t.f32");
    let a = dir.path().join("a.ulmf");
    let o = ulm(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap(), "--truth", truth.to_str().unwrap()]);
    assert!(o.status.success());
    let o = ulm(&["evaluate", "--map", truth.to_str().unwrap(), "--region", "1,2,1,2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("outside"));
}

#[test]
fn probe_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "phantom.n_frames = 2\n");
    let acq = simulate(dir.path(), &cfg);
    let other = dir.path().join("other.txt");
    fs::write(&other, "probe.c = 1500\n").unwrap();
    let o = ulm(&["run", "--config", other.to_str().unwrap(), "--input", &acq, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: config: "));
}

#[test]
fn garbage_container_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("junk.ulmf");
    fs::write(&p, b"definitely not a container").unwrap();
    let o = ulm(&["inspect", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: format: "), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(ulm(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ulm(&["run"]).status.code(), Some(2));
    assert_eq!(ulm(&["--help"]).status.code(), Some(0));
}
