//! PMIR container: a fixed 20-byte little-endian header followed by the
//! channel-interleaved row-major payload.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PMIR"
//! 4       2     version (u16, = 1)
//! 6       4     height (u32)
//! 10      4     width (u32)
//! 14      1     channels (u8; 3 = Stokes planes, 4 = intensities)
//! 15      1     dtype (u8; 0 = f32, 1 = f64, 2 = u8)
//! 16      4     reserved, zero
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::ParioError;
use crate::image::{ChannelImage, PolarImage, StokesImage};

pub const PMIR_MAGIC: [u8; 4] = *b"PMIR";
pub const PMIR_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmirDtype {
    F32,
    F64,
    U8,
}

impl PmirDtype {
    pub fn tag(self) -> u8 {
        match self {
            PmirDtype::F32 => 0,
            PmirDtype::F64 => 1,
            PmirDtype::U8 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self, ParioError> {
        match tag {
            0 => Ok(PmirDtype::F32),
            1 => Ok(PmirDtype::F64),
            2 => Ok(PmirDtype::U8),
            other => Err(ParioError::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            PmirDtype::F32 => 4,
            PmirDtype::F64 => 8,
            PmirDtype::U8 => 1,
        }
    }
}

/// A decoded PMIR payload: 4 channels are intensities, 3 channels are
/// Stokes-layout planes.
#[derive(Debug, Clone, PartialEq)]
pub enum PmirImage {
    Polar(PolarImage),
    Stokes(StokesImage),
}

impl PmirImage {
    pub fn channels(&self) -> usize {
        match self {
            PmirImage::Polar(_) => PolarImage::CHANNELS,
            PmirImage::Stokes(_) => StokesImage::CHANNELS,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            PmirImage::Polar(img) => img.height(),
            PmirImage::Stokes(img) => img.height(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            PmirImage::Polar(img) => img.width(),
            PmirImage::Stokes(img) => img.width(),
        }
    }

    pub fn data(&self) -> &[f64] {
        match self {
            PmirImage::Polar(img) => img.data(),
            PmirImage::Stokes(img) => img.data(),
        }
    }

    pub fn as_polar(&self) -> Option<&PolarImage> {
        match self {
            PmirImage::Polar(img) => Some(img),
            PmirImage::Stokes(_) => None,
        }
    }

    pub fn as_stokes(&self) -> Option<&StokesImage> {
        match self {
            PmirImage::Stokes(img) => Some(img),
            PmirImage::Polar(_) => None,
        }
    }
}

/// Reads a PMIR file, promoting every payload type to f64. u8 payloads keep
/// their [0, 255] values with no normalization.
pub fn read_pmir(path: impl AsRef<Path>) -> Result<PmirImage, ParioError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != PMIR_MAGIC {
        return Err(ParioError::BadMagic(magic));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != PMIR_VERSION {
        return Err(ParioError::UnsupportedVersion(version));
    }
    let height = r.read_u32::<LittleEndian>()? as usize;
    let width = r.read_u32::<LittleEndian>()? as usize;
    let channels = r.read_u8()?;
    let dtype = PmirDtype::from_tag(r.read_u8()?)?;
    let mut reserved = [0u8; 4];
    r.read_exact(&mut reserved)?;
    if !(channels == 3 || channels == 4) {
        return Err(ParioError::UnsupportedChannels(channels));
    }

    let count = height * width * channels as usize;
    let expected = count * dtype.size();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(ParioError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }

    let mut data = Vec::with_capacity(count);
    match dtype {
        PmirDtype::F32 => {
            for chunk in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        PmirDtype::F64 => {
            for chunk in payload.chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        PmirDtype::U8 => data.extend(payload.iter().map(|&b| b as f64)),
    }

    Ok(match channels {
        4 => PmirImage::Polar(PolarImage::new(height, width, data)?),
        _ => PmirImage::Stokes(StokesImage::new(height, width, data)?),
    })
}

fn write_channel_image(
    img: &ChannelImage,
    path: impl AsRef<Path>,
    dtype: PmirDtype,
) -> Result<(), ParioError> {
    if dtype == PmirDtype::U8 {
        if let Some(&v) = img
            .data()
            .iter()
            .find(|v| **v < 0.0 || **v > 255.0)
        {
            return Err(ParioError::ValueOutOfRange(v));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&PMIR_MAGIC)?;
    w.write_u16::<LittleEndian>(PMIR_VERSION)?;
    w.write_u32::<LittleEndian>(img.height() as u32)?;
    w.write_u32::<LittleEndian>(img.width() as u32)?;
    w.write_u8(img.channels() as u8)?;
    w.write_u8(dtype.tag())?;
    w.write_all(&[0u8; 4])?;
    match dtype {
        PmirDtype::F32 => {
            for &v in img.data() {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        PmirDtype::F64 => {
            for &v in img.data() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        PmirDtype::U8 => {
            for &v in img.data() {
                w.write_u8(v.round() as u8)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_pmir(
    img: &PmirImage,
    path: impl AsRef<Path>,
    dtype: PmirDtype,
) -> Result<(), ParioError> {
    match img {
        PmirImage::Polar(p) => write_pmir_polar(p, path, dtype),
        PmirImage::Stokes(s) => write_pmir_stokes(s, path, dtype),
    }
}

pub fn write_pmir_polar(
    img: &PolarImage,
    path: impl AsRef<Path>,
    dtype: PmirDtype,
) -> Result<(), ParioError> {
    write_channel_image(img.as_channel_image(), path, dtype)
}

pub fn write_pmir_stokes(
    img: &StokesImage,
    path: impl AsRef<Path>,
    dtype: PmirDtype,
) -> Result<(), ParioError> {
    write_channel_image(img.as_channel_image(), path, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn temp_path(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::mem::forget(dir); // keep alive for the test process
        path
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let img = PolarImage::new(
            2,
            2,
            vec![
                0.1, 1.5, 2.25, 3.0, 4.0, 5.5, 6.0, 7.75, 8.0, 9.125, 10.0, 11.0, 12.5, 13.0,
                14.0, 255.0,
            ],
        )
        .unwrap();
        let path = temp_path("rt.pmir");
        write_pmir_polar(&img, &path, PmirDtype::F64).unwrap();
        let back = read_pmir(&path).unwrap();
        assert_eq!(back.as_polar().unwrap().data(), img.data());
    }

    #[test]
    fn u8_round_trip_on_integer_values() {
        let img = StokesImage::new(1, 2, vec![0.0, 128.0, 255.0, 7.0, 1.0, 2.0]).unwrap();
        let path = temp_path("u8.pmir");
        write_pmir_stokes(&img, &path, PmirDtype::U8).unwrap();
        let back = read_pmir(&path).unwrap();
        assert_eq!(back.as_stokes().unwrap().data(), img.data());
    }

    #[test]
    fn u8_narrowing_rejects_out_of_range() {
        let img = StokesImage::new(1, 1, vec![0.0, -1.0, 2.0]).unwrap();
        let path = temp_path("bad.pmir");
        let err = write_pmir_stokes(&img, &path, PmirDtype::U8).unwrap_err();
        assert!(matches!(err, ParioError::ValueOutOfRange(v) if v == -1.0));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = temp_path("magic.pmir");
        std::fs::write(&path, b"XXXX\x01\x00junkjunkjunkjunk").unwrap();
        assert!(matches!(
            read_pmir(&path).unwrap_err(),
            ParioError::BadMagic(m) if &m == b"XXXX"
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        // header declares 10x10x4 f32 (1600 bytes) but carries 100
        let path = temp_path("trunc.pmir");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&PMIR_MAGIC).unwrap();
        f.write_u16::<LittleEndian>(PMIR_VERSION).unwrap();
        f.write_u32::<LittleEndian>(10).unwrap();
        f.write_u32::<LittleEndian>(10).unwrap();
        f.write_u8(4).unwrap();
        f.write_u8(0).unwrap();
        f.write_all(&[0u8; 4]).unwrap();
        f.write_all(&[0u8; 100]).unwrap();
        assert!(matches!(
            read_pmir(&path).unwrap_err(),
            ParioError::TruncatedPayload { expected: 1600, actual: 100 }
        ));
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let path = temp_path("ver.pmir");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(&PMIR_MAGIC).unwrap();
        f.write_u16::<LittleEndian>(9).unwrap();
        f.write_all(&[0u8; 14]).unwrap();
        assert!(matches!(
            read_pmir(&path).unwrap_err(),
            ParioError::UnsupportedVersion(9)
        ));
    }
}
