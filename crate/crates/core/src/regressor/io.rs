//! Model file, little-endian:
//!
//! ```text
//! magic "CBMH" | version u16 | d_in u32 | layer count u32 | dims u32 x (count + 1)
//! feature_mode u8 | backbone name (u32 length + UTF-8) | seed u64 | dropout f64
//! has_meta u8 [epochs u32 | final_loss f64 | lr f64 | batch_size u32]
//! per layer: weights f32 x (out * in), row-major | biases f32 x out
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Layer, MlpModel, TrainMeta};
use crate::error::{Error, Result};
use crate::nss::FeatureMode;

pub const MAGIC: &[u8; 4] = b"CBMH";
pub const VERSION: u16 = 1;

const MAX_LAYERS: usize = 64;
const MAX_NAME: usize = 4096;

pub fn save_model(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlpModel> {
    let path = path.as_ref();
    read_model(BufReader::new(File::open(path)?)).map_err(|e| match e {
        Error::ModelFormat(msg) => Error::ModelFormat(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_model<W: Write>(model: &MlpModel, w: &mut W) -> Result<()> {
    model.validate()?;
    let dims = model.dims();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(model.input_dim() as u32).to_le_bytes())?;
    w.write_all(&(model.layers.len() as u32).to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&[model.feature_mode.code()])?;
    w.write_all(&(model.backbone.len() as u32).to_le_bytes())?;
    w.write_all(model.backbone.as_bytes())?;
    w.write_all(&model.seed.to_le_bytes())?;
    w.write_all(&model.dropout.to_le_bytes())?;
    match &model.train_meta {
        None => w.write_all(&[0])?,
        Some(m) => {
            w.write_all(&[1])?;
            w.write_all(&(m.epochs_run as u32).to_le_bytes())?;
            w.write_all(&m.final_loss.to_le_bytes())?;
            w.write_all(&m.lr.to_le_bytes())?;
            w.write_all(&(m.batch_size as u32).to_le_bytes())?;
        }
    }
    for layer in &model.layers {
        for v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<MlpModel> {
    let magic: [u8; 4] = take(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic, not a model file".into()));
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported model version {version}"
        )));
    }
    let d_in = u32_le(&mut r)? as usize;
    let count = u32_le(&mut r)? as usize;
    if count == 0 || count > MAX_LAYERS {
        return Err(Error::ModelFormat(format!(
            "implausible layer count {count}"
        )));
    }
    let dims = (0..=count)
        .map(|_| u32_le(&mut r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims[0] != d_in {
        return Err(Error::ModelFormat(format!(
            "header d_in {d_in} disagrees with dims {dims:?}"
        )));
    }
    let [mode] = take::<1>(&mut r)?;
    let feature_mode = FeatureMode::from_code(mode)
        .ok_or_else(|| Error::ModelFormat(format!("unknown feature mode {mode}")))?;
    let name_len = u32_le(&mut r)? as usize;
    if name_len > MAX_NAME {
        return Err(Error::ModelFormat("backbone name too long".into()));
    }
    let mut name = vec![0u8; name_len];
    fill(&mut r, &mut name)?;
    let backbone = String::from_utf8(name)
        .map_err(|_| Error::ModelFormat("backbone name is not UTF-8".into()))?;
    let seed = u64::from_le_bytes(take(&mut r)?);
    let dropout = f64::from_le_bytes(take(&mut r)?);
    let train_meta = match take::<1>(&mut r)? {
        [0] => None,
        [1] => Some(TrainMeta {
            epochs_run: u32_le(&mut r)? as usize,
            final_loss: f64::from_le_bytes(take(&mut r)?),
            lr: f64::from_le_bytes(take(&mut r)?),
            batch_size: u32_le(&mut r)? as usize,
        }),
        [x] => return Err(Error::ModelFormat(format!("bad metadata flag {x}"))),
    };

    let mut layers = Vec::with_capacity(count);
    for d in dims.windows(2) {
        let (inputs, outputs) = (d[0], d[1]);
        let n = inputs
            .checked_mul(outputs)
            .filter(|&n| n <= 1 << 30)
            .ok_or_else(|| Error::ModelFormat("layer too large".into()))?;
        let weights = f32s(&mut r, n)?;
        let biases = f32s(&mut r, outputs)?;
        layers.push(Layer {
            inputs,
            outputs,
            weights,
            biases,
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::ModelFormat("trailing bytes after weights".into()));
    }
    let model = MlpModel {
        layers,
        dropout,
        seed,
        feature_mode,
        backbone,
        train_meta,
    };
    model.validate()?;
    if model.parameters().iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelFormat("non-finite weights".into()));
    }
    Ok(model)
}

fn fill<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelFormat("truncated model file".into()),
        _ => Error::Io(e),
    })
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    fill(r, &mut buf)?;
    Ok(buf)
}

fn u32_le(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

fn f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; n * 4];
    fill(r, &mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
