//! Quad-grayscale-PNG convention: the four polarizer channels of one capture
//! live in `<stem>_I0.png`, `<stem>_I45.png`, `<stem>_I90.png`,
//! `<stem>_I135.png` with identical dimensions.

use std::path::{Path, PathBuf};

use super::ParioError;
use crate::image::PolarImage;

const SUFFIXES: [&str; 4] = ["_I0.png", "_I45.png", "_I90.png", "_I135.png"];

fn channel_path(stem: &Path, suffix: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

/// Assembles a [`PolarImage`] from the four channel files of `stem`, in the
/// fixed order (I0, I45, I90, I135). 8-bit gray values are promoted to f64
/// with no normalization (they stay in [0, 255]).
pub fn read_quad_png(stem: impl AsRef<Path>) -> Result<PolarImage, ParioError> {
    let stem = stem.as_ref();
    let mut grays = Vec::with_capacity(4);
    let mut dims: Option<(u32, u32)> = None;
    for suffix in SUFFIXES {
        let path = channel_path(stem, suffix);
        if !path.is_file() {
            return Err(ParioError::MissingChannel(path.display().to_string()));
        }
        let gray = image::open(&path)?.to_luma8();
        match dims {
            None => dims = Some(gray.dimensions()),
            Some((w, h)) if gray.dimensions() != (w, h) => {
                let (aw, ah) = gray.dimensions();
                return Err(ParioError::DimensionMismatch {
                    channel: path.display().to_string(),
                    expected_w: w,
                    expected_h: h,
                    actual_w: aw,
                    actual_h: ah,
                });
            }
            Some(_) => {}
        }
        grays.push(gray);
    }
    let (width, height) = dims.expect("four channels read");
    let mut data = Vec::with_capacity((height * width) as usize * 4);
    for y in 0..height {
        for x in 0..width {
            for gray in &grays {
                data.push(gray.get_pixel(x, y).0[0] as f64);
            }
        }
    }
    Ok(PolarImage::new(height as usize, width as usize, data)?)
}
