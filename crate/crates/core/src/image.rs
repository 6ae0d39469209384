//! Row-major, channel-interleaved image containers for intensity and Stokes data.

use thiserror::Error;

use crate::stokes::{IntensityPixel, StokesPixel};

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("image dimensions must be non-zero, got {height}x{width}")]
    ZeroDimension { height: usize, width: usize },
    #[error("data length {actual} does not match {height}x{width}x{channels} = {expected}")]
    LengthMismatch {
        height: usize,
        width: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("image contains a non-finite value at flat index {0}")]
    NonFiniteValue(usize),
}

/// Shared storage: `data[(y * width + x) * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ChannelImage {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if height == 0 || width == 0 {
            return Err(ImageError::ZeroDimension { height, width });
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                height,
                width,
                channels,
                expected,
                actual: data.len(),
            });
        }
        if let Some(idx) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFiniteValue(idx));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("constant image is valid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn sample(&self, y: usize, x: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    fn sample_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let base = (y * self.width + x) * self.channels;
        &mut self.data[base..base + self.channels]
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// Four polarizer intensities (I0, I45, I90, I135) per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarImage(ChannelImage);

/// Linear Stokes planes (S0, S1, S2) per pixel. Also used as the generic
/// 3-channel carrier (e.g. RGB payloads share this layout).
#[derive(Debug, Clone, PartialEq)]
pub struct StokesImage(ChannelImage);

impl PolarImage {
    pub const CHANNELS: usize = 4;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        ChannelImage::new(height, width, Self::CHANNELS, data).map(Self)
    }

    pub fn filled(height: usize, width: usize, px: IntensityPixel) -> Self {
        Self::from_fn(height, width, |_, _| px)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> IntensityPixel,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x).to_array());
            }
        }
        Self::new(height, width, data).expect("generator produced finite pixels")
    }

    pub fn get(&self, y: usize, x: usize) -> IntensityPixel {
        let s = self.0.sample(y, x);
        IntensityPixel::new(s[0], s[1], s[2], s[3])
    }

    pub fn set(&mut self, y: usize, x: usize, px: IntensityPixel) {
        self.0.sample_mut(y, x).copy_from_slice(&px.to_array());
    }

    pub fn pixels(&self) -> impl Iterator<Item = IntensityPixel> + '_ {
        self.0
            .data
            .chunks_exact(Self::CHANNELS)
            .map(|s| IntensityPixel::new(s[0], s[1], s[2], s[3]))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn pixel_count(&self) -> usize {
        self.0.pixel_count()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn as_channel_image(&self) -> &ChannelImage {
        &self.0
    }

    pub fn into_channel_image(self) -> ChannelImage {
        self.0
    }
}

impl StokesImage {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        ChannelImage::new(height, width, Self::CHANNELS, data).map(Self)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> StokesPixel,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x).to_array());
            }
        }
        Self::new(height, width, data).expect("generator produced finite pixels")
    }

    pub fn get(&self, y: usize, x: usize) -> StokesPixel {
        let s = self.0.sample(y, x);
        StokesPixel::new(s[0], s[1], s[2])
    }

    pub fn set(&mut self, y: usize, x: usize, px: StokesPixel) {
        self.0.sample_mut(y, x).copy_from_slice(&px.to_array());
    }

    pub fn pixels(&self) -> impl Iterator<Item = StokesPixel> + '_ {
        self.0
            .data
            .chunks_exact(Self::CHANNELS)
            .map(|s| StokesPixel::new(s[0], s[1], s[2]))
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn pixel_count(&self) -> usize {
        self.0.pixel_count()
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    pub fn as_channel_image(&self) -> &ChannelImage {
        &self.0
    }

    pub fn into_channel_image(self) -> ChannelImage {
        self.0
    }
}
