//! Binary feature cache.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "CBND"
//! version      u16      1
//! channels     u32      C
//! mode         u8       0 = ggd, 1 = mean-std, 2 = alpha, 3 = sigma
//! frame_count  u32
//! frame_count records:
//!   frame_index u32
//!   values      f32 x (2C, or C for single-feature modes)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureMode, NssFeatureVector};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CBND";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub channels: usize,
    pub mode: FeatureMode,
    pub frames: Vec<NssFeatureVector>,
}

impl FeatureCache {
    pub fn new(channels: usize, mode: FeatureMode, frames: Vec<NssFeatureVector>) -> Result<Self> {
        let dim = mode.dimension(channels);
        for f in &frames {
            if f.mode != mode || f.values.len() != dim {
                return Err(Error::CacheFormat(format!(
                    "frame {} has {} {} values, cache expects {dim} {mode} values",
                    f.frame_index,
                    f.values.len(),
                    f.mode
                )));
            }
        }
        Ok(FeatureCache {
            channels,
            mode,
            frames,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mode.dimension(self.channels)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let count = u32::try_from(self.frames.len())
            .map_err(|_| Error::CacheFormat("too many frames".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.channels as u32).to_le_bytes())?;
        w.write_all(&[self.mode.code()])?;
        w.write_all(&count.to_le_bytes())?;
        for f in &self.frames {
            w.write_all(&(f.frame_index as u32).to_le_bytes())?;
            for v in &f.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::CacheFormat("bad magic, not a feature cache".into()));
        }
        let version = u16::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(Error::CacheFormat(format!("unsupported version {version}")));
        }
        let channels = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let [code] = read_array::<1>(&mut r)?;
        let mode = FeatureMode::from_code(code)
            .ok_or_else(|| Error::CacheFormat(format!("unknown mode {code}")))?;
        let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let dim = mode.dimension(channels);

        let mut frames = Vec::with_capacity(count.min(1 << 16));
        let mut buf = vec![0u8; dim * 4];
        for _ in 0..count {
            let frame_index = u32::from_le_bytes(read_array(&mut r)?) as usize;
            read(&mut r, &mut buf)?;
            let values = buf
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            frames.push(NssFeatureVector {
                values,
                mode,
                frame_index,
                diagnostics: Vec::new(),
            });
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::CacheFormat(
                "trailing bytes after last record".into(),
            ));
        }
        Ok(FeatureCache {
            channels,
            mode,
            frames,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::read_from(BufReader::new(file)).map_err(|e| match e {
            Error::CacheFormat(msg) => Error::CacheFormat(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Writes one row per frame: `frame_index, alpha_0, sigma_0, ...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["frame_index".to_string()];
        for c in 0..self.channels {
            header.extend(self.mode.labels().iter().map(|l| format!("{l}_{c}")));
        }
        out.write_record(&header)?;
        for f in &self.frames {
            let mut row = vec![f.frame_index.to_string()];
            row.extend(f.values.iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn read<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::CacheFormat("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    read(r, &mut buf)?;
    Ok(buf)
}
