//! PTCK checkpoint container: named parameter tensors in a little-endian
//! binary file.
//!
//! ```text
//! magic "PTCK" | version u16 = 1 | dtype u8 (0 = f32, 1 = f64) | count u32
//! then per entry:
//!   name_len u16 | name (UTF-8) | dims 4 x u32 | payload (count x dtype size)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use thiserror::Error;

use crate::autodiff::graph::Shape;
use crate::autodiff::net::{Layer, Param, TinyNet, LEAKY_SLOPE};
use crate::autodiff::scalar::Scalar;

pub const PTCK_MAGIC: [u8; 4] = *b"PTCK";
pub const PTCK_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, expected \"PTCK\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported checkpoint dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("entry name is not valid UTF-8")]
    BadName,
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name} has shape {got}, expected {expected}")]
    ShapeMismatch {
        name: String,
        got: Shape,
        expected: Shape,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Shape,
    /// Values promoted to f64; f32 payloads promote losslessly.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dtype_tag: u8,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn entry(&self, name: &str) -> Option<&CheckpointEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Writes the named nets' parameters; entry names are `<prefix>.<param>`.
pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    nets: &[(&str, &TinyNet<T>)],
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&PTCK_MAGIC)?;
    w.write_u16::<LittleEndian>(PTCK_VERSION)?;
    w.write_u8(T::DTYPE_TAG)?;
    let count: usize = nets.iter().map(|(_, n)| n.params().len()).sum();
    w.write_u32::<LittleEndian>(count as u32)?;
    for (prefix, net) in nets {
        for p in net.params() {
            let name = format!("{prefix}.{}", p.name);
            w.write_u16::<LittleEndian>(name.len() as u16)?;
            w.write_all(name.as_bytes())?;
            for d in [p.shape.batch, p.shape.channels, p.shape.height, p.shape.width] {
                w.write_u32::<LittleEndian>(d as u32)?;
            }
            for &v in &p.values {
                match T::DTYPE_TAG {
                    0 => w.write_f32::<LittleEndian>(v.to_f64() as f32)?,
                    _ => w.write_f64::<LittleEndian>(v.to_f64())?,
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != PTCK_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != PTCK_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let dtype_tag = r.read_u8()?;
    if dtype_tag > 1 {
        return Err(CheckpointError::UnsupportedDtype(dtype_tag));
    }
    let count = r.read_u32::<LittleEndian>()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.read_u16::<LittleEndian>()? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf).map_err(|_| CheckpointError::BadName)?;
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LittleEndian>()? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let mut values = Vec::with_capacity(shape.count());
        for _ in 0..shape.count() {
            let v = match dtype_tag {
                0 => r.read_f32::<LittleEndian>()? as f64,
                _ => r.read_f64::<LittleEndian>()?,
            };
            values.push(v);
        }
        entries.push(CheckpointEntry { name, shape, values });
    }
    Ok(Checkpoint { dtype_tag, entries })
}

/// Rebuilds a canonical generator (conv, leaky, conv, leaky, conv, tanh)
/// from the `<prefix>.conv{i}.*` entries of a checkpoint.
pub fn load_generator<T: Scalar>(
    ckpt: &Checkpoint,
    prefix: &str,
) -> Result<TinyNet<T>, CheckpointError> {
    let fetch = |name: String| -> Result<&CheckpointEntry, CheckpointError> {
        ckpt.entry(&name).ok_or(CheckpointError::MissingParam(name))
    };
    let w0 = fetch(format!("{prefix}.conv0.weight"))?;
    let w1 = fetch(format!("{prefix}.conv1.weight"))?;
    let w2 = fetch(format!("{prefix}.conv2.weight"))?;
    let in_ch = w0.shape.channels;
    let width = w0.shape.batch;
    let out_ch = w2.shape.batch;
    if w1.shape != Shape::new(width, width, 3, 3) || w2.shape.channels != width {
        return Err(CheckpointError::ShapeMismatch {
            name: format!("{prefix}.conv1.weight"),
            got: w1.shape,
            expected: Shape::new(width, width, 3, 3),
        });
    }
    let layers = vec![
        Layer::Conv2d { in_ch, out_ch: width },
        Layer::LeakyRelu { slope: LEAKY_SLOPE },
        Layer::Conv2d { in_ch: width, out_ch: width },
        Layer::LeakyRelu { slope: LEAKY_SLOPE },
        Layer::Conv2d { in_ch: width, out_ch },
        Layer::Tanh,
    ];
    let mut params = Vec::new();
    for i in 0..3 {
        for kind in ["weight", "bias"] {
            let name = format!("conv{i}.{kind}");
            let entry = fetch(format!("{prefix}.{name}"))?;
            params.push(Param {
                name,
                shape: entry.shape,
                values: entry.values.iter().map(|&v| T::from_f64(v)).collect(),
            });
        }
    }
    Ok(TinyNet::from_params(layers, params))
}
