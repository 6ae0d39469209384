//! Bit-exact storage for polarimetric data.
//!
//! Three interchange conventions live here:
//! - PMIR, a little-endian binary container for 3- or 4-channel images;
//! - the quad-grayscale-PNG convention (`<stem>_I0.png` .. `_I135.png`);
//! - tab-separated dataset manifests (`<split>\t<domain>\t<path>`).

mod manifest;
mod pmir;
mod quad;

pub use manifest::{DatasetManifest, Domain, ManifestEntry, Split};
pub use pmir::{read_pmir, write_pmir, write_pmir_polar, write_pmir_stokes, PmirDtype, PmirImage};
pub use quad::read_quad_png;

use thiserror::Error;

use crate::image::ImageError;

#[derive(Debug, Error)]
pub enum ParioError {
    #[error("bad magic {0:?}, expected \"PMIR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported PMIR version {0}")]
    UnsupportedVersion(u16),
    #[error("unsupported channel count {0} (expected 3 or 4)")]
    UnsupportedChannels(u8),
    #[error("unsupported dtype tag {0}")]
    UnsupportedDtype(u8),
    #[error("payload length mismatch: declared {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("value {0} cannot be narrowed to u8 (outside [0, 255])")]
    ValueOutOfRange(f64),
    #[error("missing channel file {0}")]
    MissingChannel(String),
    #[error("channel {channel} is {actual_w}x{actual_h}, expected {expected_w}x{expected_h}")]
    DimensionMismatch {
        channel: String,
        expected_w: u32,
        expected_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("manifest line {0} is not `<split>\\t<domain>\\t<path>`")]
    ManifestParse(usize),
    #[error("manifest lists path twice: {0}")]
    DuplicatePath(String),
    #[error("manifest entry does not exist on disk: {0}")]
    MissingFile(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("png decode failed: {0}")]
    Png(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
