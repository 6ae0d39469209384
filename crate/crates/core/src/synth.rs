//! Seed-deterministic synthesis of admissible and deliberately corrupted
//! polarimetric images.
//!
//! Pixels are built directly in Stokes space: a target degree of
//! polarization `d` and an orientation `ψ` give `(s1, s2) = s0·d·(cos 2ψ,
//! sin 2ψ)`, which is then mapped through the calibration matrix. Every
//! pixel draws from its own counter-indexed random stream, so rows (or whole
//! images of a dataset) can be produced in any order with identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::admissibility::{c2_violation, repair_stokes};
use crate::image::PolarImage;
use crate::stokes::{
    intensities_to_stokes, stokes_to_intensities, CalibrationMatrix, IntensityPixel, StokesPixel,
};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("synth spec is invalid: {0}")]
    InvalidSpec(String),
    #[error("expected corruption mode `none`, got {0:?}")]
    UnexpectedCorruption(Corruption),
    #[error("expected a corruption mode other than `none`")]
    MissingCorruption,
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {0} is not `key=value`")]
    MalformedLine(usize),
    #[error("config value for `{key}` is not valid: {value}")]
    BadValue { key: String, value: String },
}

/// How to break the generated data, for negative validator fixtures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    None,
    /// Adds zero-mean Gaussian noise of the given std to each intensity
    /// channel, breaking the calibration identity.
    C1Noise { sigma: f64 },
    /// Multiplies `(s1, s2)` by the factor before mapping back, pushing the
    /// polarized energy past the admissibility disk when `factor·d > 1`.
    C2Inflate { factor: f64 },
    /// Flips the sign of `s0` on the given fraction of pixels.
    NegativeS0 { fraction: f64 },
}

/// Recipe for one synthetic image (or a dataset of them via
/// [`synth_dataset`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    /// Target degree-of-polarization range, inside [0, 1].
    pub dop_range: (f64, f64),
    /// Range of `s0`, strictly positive.
    pub intensity_range: (f64, f64),
    /// Orientation range in degrees; `(s1, s2)` lives on the double-angle
    /// circle so [0, 180) covers every state.
    pub aolp_range_deg: (f64, f64),
    pub corruption: Corruption,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            dop_range: (0.0, 0.6),
            intensity_range: (20.0, 235.0),
            aolp_range_deg: (0.0, 180.0),
            corruption: Corruption::None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: &str| Err(SynthError::InvalidSpec(msg.to_string()));
        if self.height == 0 || self.width == 0 {
            return err("dimensions must be non-zero");
        }
        let (dlo, dhi) = self.dop_range;
        if !(0.0..=1.0).contains(&dlo) || !(0.0..=1.0).contains(&dhi) || dlo > dhi {
            return err("dop_range must be ordered and within [0, 1]");
        }
        let (ilo, ihi) = self.intensity_range;
        if !(ilo.is_finite() && ihi.is_finite()) || ilo <= 0.0 || ilo > ihi {
            return err("intensity_range must be ordered and strictly positive");
        }
        let (alo, ahi) = self.aolp_range_deg;
        if !(alo.is_finite() && ahi.is_finite()) || alo > ahi {
            return err("aolp_range must be ordered and finite");
        }
        match self.corruption {
            Corruption::C1Noise { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                err("c1_noise sigma must be finite and non-negative")
            }
            Corruption::C2Inflate { factor } if !(factor.is_finite() && factor > 0.0) => {
                err("c2_inflate factor must be finite and positive")
            }
            Corruption::NegativeS0 { fraction } if !(0.0..=1.0).contains(&fraction) => {
                err("negative_s0 fraction must be within [0, 1]")
            }
            _ => Ok(()),
        }
    }
}

fn sample_inclusive(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sample_half_open(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Maps an admissible-by-construction Stokes vector to intensities. At the
/// DOP = 1 boundary, round-trip rounding can leave the recovered vector just
/// outside the admissibility disk; in that case the polarized part is pulled
/// inward and the pixel remapped.
fn boundary_safe_intensities(s: StokesPixel, c: &CalibrationMatrix) -> IntensityPixel {
    let p = stokes_to_intensities(s, c);
    if c2_violation(intensities_to_stokes(p, c)) == 0.0 {
        return p;
    }
    let r = (s.s1 * s.s1 + s.s2 * s.s2).sqrt();
    let f = s.s0 * (1.0 - 1e-13) / r;
    stokes_to_intensities(StokesPixel::new(s.s0, s.s1 * f, s.s2 * f), c)
}

fn synth_pixel(spec: &SynthSpec, c: &CalibrationMatrix, stream: u64) -> IntensityPixel {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let s0 = sample_inclusive(&mut rng, spec.intensity_range);
    let d = sample_inclusive(&mut rng, spec.dop_range);
    let psi_deg = sample_half_open(&mut rng, spec.aolp_range_deg);
    let (sin2psi, cos2psi) = (2.0 * psi_deg).to_radians().sin_cos();
    // repair_stokes only nudges pixels whose polarized energy exceeds s0²
    // through rounding at d = 1.
    let s = repair_stokes(StokesPixel::new(s0, s0 * d * cos2psi, s0 * d * sin2psi));
    match spec.corruption {
        Corruption::None => boundary_safe_intensities(s, c),
        Corruption::C1Noise { sigma } => {
            let base = boundary_safe_intensities(s, c);
            let noise = Normal::new(0.0, sigma).expect("validated sigma");
            let mut v = base.to_array();
            for ch in v.iter_mut() {
                *ch += noise.sample(&mut rng);
            }
            IntensityPixel::from_array(v)
        }
        Corruption::C2Inflate { factor } => {
            stokes_to_intensities(StokesPixel::new(s.s0, s.s1 * factor, s.s2 * factor), c)
        }
        Corruption::NegativeS0 { fraction } => {
            let u: f64 = rng.random();
            let s0 = if u < fraction { -s.s0 } else { s.s0 };
            stokes_to_intensities(StokesPixel::new(s0, s.s1, s.s2), c)
        }
    }
}

fn synth_image(spec: &SynthSpec, c: &CalibrationMatrix, image_index: u64) -> PolarImage {
    let pixels = (spec.height * spec.width) as u64;
    let base = image_index * pixels;
    let width = spec.width;
    PolarImage::from_fn(spec.height, spec.width, |y, x| {
        synth_pixel(spec, c, base + (y * width + x) as u64)
    })
}

/// Generates an image in which every pixel is feasible at the exact
/// tolerance and whose recovered DOP equals the drawn target.
pub fn synth_admissible(spec: &SynthSpec, c: &CalibrationMatrix) -> Result<PolarImage, SynthError> {
    spec.validate()?;
    if spec.corruption != Corruption::None {
        return Err(SynthError::UnexpectedCorruption(spec.corruption));
    }
    Ok(synth_image(spec, c, 0))
}

/// Generates an image corrupted per `spec.corruption`. The underlying clean
/// pixel draws are shared with [`synth_admissible`], so `c1_noise(0)` is
/// bit-identical to the admissible output.
pub fn synth_corrupted(spec: &SynthSpec, c: &CalibrationMatrix) -> Result<PolarImage, SynthError> {
    spec.validate()?;
    if spec.corruption == Corruption::None {
        return Err(SynthError::MissingCorruption);
    }
    Ok(synth_image(spec, c, 0))
}

/// Generates `count` images from one spec; image `k` uses the pixel streams
/// `[k·h·w, (k+1)·h·w)`, so the first image equals the single-image output.
pub fn synth_dataset(
    spec: &SynthSpec,
    c: &CalibrationMatrix,
    count: usize,
) -> Result<Vec<PolarImage>, SynthError> {
    spec.validate()?;
    Ok((0..count as u64).map(|k| synth_image(spec, c, k)).collect())
}

/// A [`SynthSpec`] plus a dataset size, as parsed from a `key=value` config.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub spec: SynthSpec,
    pub count: usize,
}

impl SynthConfig {
    /// Parses a line-oriented `key=value` config. Blank lines and lines
    /// starting with `#` are ignored. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut spec = SynthSpec::default();
        let mut count = 1usize;
        let mut corruption = String::from("none");
        let mut sigma = 0.0;
        let mut factor = 2.0;
        let mut fraction = 0.5;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(SynthError::MalformedLine(lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let bad = || SynthError::BadValue {
                key: key.to_string(),
                value: value.to_string(),
            };
            match key {
                "height" => spec.height = value.parse().map_err(|_| bad())?,
                "width" => spec.width = value.parse().map_err(|_| bad())?,
                "dop_min" => spec.dop_range.0 = value.parse().map_err(|_| bad())?,
                "dop_max" => spec.dop_range.1 = value.parse().map_err(|_| bad())?,
                "intensity_min" => spec.intensity_range.0 = value.parse().map_err(|_| bad())?,
                "intensity_max" => spec.intensity_range.1 = value.parse().map_err(|_| bad())?,
                "aolp_min" => spec.aolp_range_deg.0 = value.parse().map_err(|_| bad())?,
                "aolp_max" => spec.aolp_range_deg.1 = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                "count" => count = value.parse().map_err(|_| bad())?,
                "corruption" => corruption = value.to_string(),
                "sigma" => sigma = value.parse().map_err(|_| bad())?,
                "factor" => factor = value.parse().map_err(|_| bad())?,
                "fraction" => fraction = value.parse().map_err(|_| bad())?,
                other => return Err(SynthError::UnknownKey(other.to_string())),
            }
        }
        spec.corruption = match corruption.as_str() {
            "none" => Corruption::None,
            "c1_noise" => Corruption::C1Noise { sigma },
            "c2_inflate" => Corruption::C2Inflate { factor },
            "negative_s0" => Corruption::NegativeS0 { fraction },
            other => {
                return Err(SynthError::BadValue {
                    key: "corruption".to_string(),
                    value: other.to_string(),
                })
            }
        };
        spec.validate()?;
        Ok(Self { spec, count })
    }
}
