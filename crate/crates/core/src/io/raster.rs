use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::beamform::BeamGrid;
use crate::error::{Result, UlmError};

/// A 2-D grid of values on known coordinates. On disk: `<stem>.f32` holds raw
/// little-endian f32 in row-major order and `<stem>.txt` the sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub values: Array2<f64>,
    pub grid: BeamGrid,
    pub kind: String,
}

fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("txt")
}

fn format_err(path: &Path, msg: impl std::fmt::Display) -> UlmError {
    UlmError::Format(format!("{}: {msg}", path.display()))
}

/// Writes `path` (raw f32) and its `.txt` sidecar. Values are stored as f32.
pub fn write_raster(path: &Path, raster: &Raster) -> Result<()> {
    let g = &raster.grid;
    if raster.values.dim() != g.shape() {
        return Err(UlmError::InvalidInput("raster values do not match its grid".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for v in raster.values.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    let sidecar = format!(
        "rows={}\ncols={}\nx0={}\ndx={}\nz0={}\ndz={}\nkind={}\n",
        g.nz, g.nx, g.x0, g.dx, g.z0, g.dz, raster.kind
    );
    std::fs::write(sidecar_path(path), sidecar)?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<Raster> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side)?;
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(&side, format!("malformed line '{line}'")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| format_err(&side, format!("missing '{k}'")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|e| format_err(&side, format!("{k}: {e}"))) };
    let count = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|e| format_err(&side, format!("{k}: {e}"))) };
    let grid = BeamGrid::new(num("x0")?, num("dx")?, count("cols")?, num("z0")?, num("dz")?, count("rows")?)?;
    let bytes = std::fs::read(path)?;
    if bytes.len() != grid.nx * grid.nz * 4 {
        return Err(format_err(
            path,
            format!("{} bytes, sidecar implies {}", bytes.len(), grid.nx * grid.nz * 4),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Raster {
        values: Array2::from_shape_vec(grid.shape(), values).expect("length checked"),
        grid,
        kind: get("kind")?.clone(),
    })
}

/// 8-bit binary PGM, linearly scaled from `[min, max]` to `[0, 255]`.
pub fn write_pgm(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (rows, cols) = values.dim();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{cols} {rows}\n255\n")?;
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&pixels)?;
    w.flush()?;
    Ok(())
}
