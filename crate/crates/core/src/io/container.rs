use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, UlmError};
use crate::rfsim::{Acquisition, Probe, RfFrame};

pub const MAGIC: &[u8; 4] = b"ULMF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 6 * 8;

/// Fixed-size little-endian header at the start of every container.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub version: u16,
    pub n_frames: u32,
    pub n_samples: u32,
    pub n_channels: u32,
    pub pitch: f64,
    pub fc: f64,
    pub fs: f64,
    pub c: f64,
    pub frame_rate: f64,
    pub t0: f64,
}

impl ContainerHeader {
    pub fn payload_len(&self) -> u64 {
        self.n_frames as u64 * self.n_samples as u64 * self.n_channels as u64 * 4
    }

    pub fn probe(&self) -> Probe {
        Probe {
            n_elements: self.n_channels as usize,
            pitch: self.pitch,
            fc: self.fc,
            fs: self.fs,
            c: self.c,
            frame_rate: self.frame_rate,
        }
    }

    fn to_bytes(self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN);
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        for v in [self.n_frames, self.n_samples, self.n_channels] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.pitch, self.fc, self.fs, self.c, self.frame_rate, self.t0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if &b[0..4] != MAGIC {
            return Err(UlmError::Format("not a ULMF container (bad magic)".into()));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(UlmError::Format(format!("unsupported container version {version}")));
        }
        let u = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let f = |o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        Ok(ContainerHeader {
            version,
            n_frames: u(6),
            n_samples: u(10),
            n_channels: u(14),
            pitch: f(18),
            fc: f(26),
            fs: f(34),
            c: f(42),
            frame_rate: f(50),
            t0: f(58),
        })
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| UlmError::Format(format!("{what} {v} does not fit the container header")))
}

pub fn write_container(path: &Path, acq: &Acquisition) -> Result<u64> {
    let first = acq
        .frames
        .first()
        .ok_or_else(|| UlmError::InvalidInput("acquisition has no frames".into()))?;
    let (n_samples, n_channels) = first.samples.dim();
    if acq.frames.iter().any(|f| f.samples.dim() != (n_samples, n_channels)) {
        return Err(UlmError::InvalidInput("frames differ in shape".into()));
    }
    let header = ContainerHeader {
        version: VERSION,
        n_frames: to_u32(acq.frames.len(), "frame count")?,
        n_samples: to_u32(n_samples, "sample count")?,
        n_channels: to_u32(n_channels, "channel count")?,
        pitch: acq.probe.pitch,
        fc: acq.probe.fc,
        fs: acq.probe.fs,
        c: acq.probe.c,
        frame_rate: acq.probe.frame_rate,
        t0: first.t0,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header.to_bytes())?;
    for frame in &acq.frames {
        for v in frame.samples.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(HEADER_LEN as u64 + header.payload_len())
}

pub fn read_header(path: &Path) -> Result<ContainerHeader> {
    let mut r = File::open(path)?;
    read_header_from(&mut r)
}

fn read_header_from(r: &mut impl Read) -> Result<ContainerHeader> {
    let mut b = [0u8; HEADER_LEN];
    r.read_exact(&mut b)
        .map_err(|_| UlmError::Format("file too short for a ULMF header".into()))?;
    ContainerHeader::from_bytes(&b)
}

pub fn read_container(path: &Path) -> Result<Acquisition> {
    let file = File::open(path)?;
    let actual = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let header = read_header_from(&mut r)?;
    let expected = HEADER_LEN as u64 + header.payload_len();
    if actual != expected {
        return Err(UlmError::Format(format!(
            "container is {actual} bytes, header implies {expected}"
        )));
    }
    let probe = header.probe();
    probe.validate()?;
    let (ns, nc) = (header.n_samples as usize, header.n_channels as usize);
    let mut buf = vec![0u8; ns * nc * 4];
    let mut frames = Vec::with_capacity(header.n_frames as usize);
    for k in 0..header.n_frames as usize {
        r.read_exact(&mut buf)?;
        let values: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let samples = Array2::from_shape_vec((ns, nc), values).expect("payload sized from header");
        frames.push(RfFrame { samples, frame_index: k, probe, t0: header.t0 });
    }
    Ok(Acquisition { probe, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Acquisition {
        let probe = Probe { n_elements: 3, ..Probe::default() };
        let frames = (0..2)
            .map(|k| RfFrame {
                samples: Array2::from_shape_fn((4, 3), |(s, c)| (k * 100 + s * 10 + c) as f32 - 0.5),
                frame_index: k,
                probe,
                t0: 0.0,
            })
            .collect();
        Acquisition { probe, frames }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ulmf");
        let acq = tiny();
        let bytes = write_container(&path, &acq).unwrap();
        assert_eq!(bytes, std::fs::metadata(&path).unwrap().len());
        assert_eq!(read_container(&path).unwrap(), acq);
        let h = read_header(&path).unwrap();
        assert_eq!((h.n_frames, h.n_samples, h.n_channels), (2, 4, 3));
    }

    #[test]
    fn rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ulmf");
        write_container(&path, &tiny()).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_container(&path), Err(UlmError::Format(_))));

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_container(&path), Err(UlmError::Format(_))));

        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(matches!(read_container(&path), Err(UlmError::Format(_))));

        std::fs::write(&path, &good[..10]).unwrap();
        assert!(matches!(read_container(&path), Err(UlmError::Format(_))));
    }
}
