//! Linear Stokes algebra for four-polarizer intensity measurements.
//!
//! A camera with linear polarizers at angles `α1..α4` measures
//! `I = A·S` where row `i` of the 4x3 calibration matrix `A` is
//! `½·(1, cos 2αi, sin 2αi)`. The recovery matrix `Ã` inverts the
//! measurement (`Ã·A = I3`); for the standard (0°, 45°, 90°, 135°) layout it
//! is the integer matrix giving `S = (I0+I90, I0−I90, I45−I135)`.

use thiserror::Error;

use crate::image::{PolarImage, StokesImage};

/// Default polarizer orientations in degrees.
pub const DEFAULT_ANGLES_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

#[derive(Debug, Error, PartialEq)]
pub enum StokesError {
    #[error("calibration matrix is rank deficient for angles {0:?}")]
    RankDeficient([f64; 4]),
    #[error("polarizer angle is not finite")]
    NonFiniteAngle,
    #[error("total intensity must be strictly positive, got {0}")]
    NonPositiveIntensity(f64),
}

/// One pixel of raw polarizer intensities (arbitrary linear units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityPixel {
    pub i0: f64,
    pub i45: f64,
    pub i90: f64,
    pub i135: f64,
}

impl IntensityPixel {
    pub fn new(i0: f64, i45: f64, i90: f64, i135: f64) -> Self {
        Self { i0, i45, i90, i135 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.i0, self.i45, self.i90, self.i135]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Signed calibration gap `i0 + i90 − i45 − i135`; zero on calibrated pixels.
    pub fn calibration_gap(&self) -> f64 {
        self.i0 + self.i90 - self.i45 - self.i135
    }

    pub fn norm(&self) -> f64 {
        self.to_array().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One pixel of linear Stokes components. The circular component is zero for
/// reflected outdoor light and is not stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesPixel {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl StokesPixel {
    pub fn new(s0: f64, s1: f64, s2: f64) -> Self {
        Self { s0, s1, s2 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.s0, self.s1, self.s2]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Polarized energy excess `s1² + s2² − s0²`; non-positive when admissible.
    pub fn energy_excess(&self) -> f64 {
        self.s1 * self.s1 + self.s2 * self.s2 - self.s0 * self.s0
    }

    /// Admissible means `s0 > 0` and `s0² ≥ s1² + s2²`.
    pub fn is_admissible(&self) -> bool {
        self.s0 > 0.0 && self.energy_excess() <= 0.0
    }
}

/// Maximum field amplitudes of a fully polarized wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveAmplitudes {
    pub e0x: f64,
    pub e0y: f64,
}

impl WaveAmplitudes {
    pub fn new(e0x: f64, e0y: f64) -> Self {
        Self { e0x, e0y }
    }
}

/// Forward calibration matrix `A` (4x3) and its recovery matrix `Ã` (3x4).
///
/// The recovery matrix satisfies `Ã·A = I3`. For layouts made of two
/// orthogonal polarizer pairs (α, β, α+90°, β+90°) — which includes the
/// default — `Ã` is the pairwise estimator `S0 = I1+I3`, `(S1,S2)` solved
/// from the pair differences; for the default this is exactly the integer
/// matrix rows (1,0,1,0), (1,0,−1,0), (0,1,0,−1). For other angle sets `Ã`
/// falls back to the least-squares pseudoinverse `(AᵀA)⁻¹Aᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMatrix {
    angles_deg: [f64; 4],
    a: [[f64; 3]; 4],
    a_pinv: [[f64; 4]; 3],
}

/// cos/sin of `2α` with exact values at quarter-turn multiples, so the
/// default calibration is made of exact dyadic rationals.
fn cos_sin_2alpha(angle_deg: f64) -> (f64, f64) {
    let two_alpha = (2.0 * angle_deg).rem_euclid(360.0);
    for (turn, cs) in [
        (0.0, (1.0, 0.0)),
        (90.0, (0.0, 1.0)),
        (180.0, (-1.0, 0.0)),
        (270.0, (0.0, -1.0)),
        (360.0, (1.0, 0.0)),
    ] {
        if (two_alpha - turn).abs() < 1e-9 {
            return cs;
        }
    }
    let r = two_alpha.to_radians();
    (r.cos(), r.sin())
}

/// Angles α, β are an orthogonal pair when β − α ≡ 90° (mod 180°).
fn is_orthogonal_pair(alpha_deg: f64, beta_deg: f64) -> bool {
    let delta = (beta_deg - alpha_deg).rem_euclid(180.0);
    (delta - 90.0).abs() < 1e-9
}

impl CalibrationMatrix {
    pub fn new(angles_deg: [f64; 4]) -> Result<Self, StokesError> {
        if angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(StokesError::NonFiniteAngle);
        }
        let mut a = [[0.0; 3]; 4];
        for (row, &angle) in a.iter_mut().zip(angles_deg.iter()) {
            let (c, s) = cos_sin_2alpha(angle);
            *row = [0.5, 0.5 * c, 0.5 * s];
        }
        let a_pinv = if is_orthogonal_pair(angles_deg[0], angles_deg[2])
            && is_orthogonal_pair(angles_deg[1], angles_deg[3])
        {
            Self::paired_recovery(angles_deg)?
        } else {
            Self::least_squares_recovery(angles_deg, &a)?
        };
        Ok(Self {
            angles_deg,
            a,
            a_pinv,
        })
    }

    /// Pairwise estimator for the orthogonal-pair layout. Pair sums give
    /// `I1 + I3 = S0`; pair differences give the 2x2 system
    /// `I1 − I3 = cos2α1·S1 + sin2α1·S2`, `I2 − I4 = cos2α2·S1 + sin2α2·S2`.
    fn paired_recovery(angles_deg: [f64; 4]) -> Result<[[f64; 4]; 3], StokesError> {
        let (c1, s1) = cos_sin_2alpha(angles_deg[0]);
        let (c2, s2) = cos_sin_2alpha(angles_deg[1]);
        let det = c1 * s2 - s1 * c2; // sin(2α2 − 2α1)
        if det.abs() < 1e-9 {
            return Err(StokesError::RankDeficient(angles_deg));
        }
        // [[c1,s1],[c2,s2]]⁻¹
        let m = [[s2 / det, -s1 / det], [-c2 / det, c1 / det]];
        let d1 = [1.0, 0.0, -1.0, 0.0];
        let d2 = [0.0, 1.0, 0.0, -1.0];
        let mut pinv = [[0.0; 4]; 3];
        pinv[0] = [1.0, 0.0, 1.0, 0.0];
        for k in 0..4 {
            pinv[1][k] = m[0][0] * d1[k] + m[0][1] * d2[k];
            pinv[2][k] = m[1][0] * d1[k] + m[1][1] * d2[k];
        }
        Ok(pinv)
    }

    /// `(AᵀA)⁻¹Aᵀ` via the closed-form 3x3 inverse.
    fn least_squares_recovery(
        angles_deg: [f64; 4],
        a: &[[f64; 3]; 4],
    ) -> Result<[[f64; 4]; 3], StokesError> {
        let mut g = [[0.0; 3]; 3]; // AᵀA
        for row in a {
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += row[i] * row[j];
                }
            }
        }
        let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
            - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
            + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
        if det.abs() < 1e-9 {
            return Err(StokesError::RankDeficient(angles_deg));
        }
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (r0, r1) = match i {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let (c0, c1) = match j {
                    0 => (1, 2),
                    1 => (0, 2),
                    _ => (0, 1),
                };
                let minor = g[r0][c0] * g[r1][c1] - g[r0][c1] * g[r1][c0];
                let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                inv[j][i] = sign * minor / det;
            }
        }
        let mut pinv = [[0.0; 4]; 3];
        for (i, inv_row) in inv.iter().enumerate() {
            for k in 0..4 {
                pinv[i][k] = (0..3).map(|j| inv_row[j] * a[k][j]).sum();
            }
        }
        Ok(pinv)
    }

    pub fn angles_deg(&self) -> [f64; 4] {
        self.angles_deg
    }

    pub fn forward(&self) -> &[[f64; 3]; 4] {
        &self.a
    }

    pub fn recovery(&self) -> &[[f64; 4]; 3] {
        &self.a_pinv
    }

    /// Row-major copies for consumers that apply the maps to flat buffers.
    pub fn forward_flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, row) in self.a.iter().enumerate() {
            out[i * 3..i * 3 + 3].copy_from_slice(row);
        }
        out
    }

    pub fn recovery_flat(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for (i, row) in self.a_pinv.iter().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(row);
        }
        out
    }
}

impl Default for CalibrationMatrix {
    fn default() -> Self {
        Self::new(DEFAULT_ANGLES_DEG).expect("default angles are full rank")
    }
}

/// Builds the calibration matrix for four polarizer angles in degrees.
pub fn build_calibration(angles_deg: [f64; 4]) -> Result<CalibrationMatrix, StokesError> {
    CalibrationMatrix::new(angles_deg)
}

/// `S = Ã·I`. For the default angles this is `(i0+i90, i0−i90, i45−i135)`.
pub fn intensities_to_stokes(p: IntensityPixel, c: &CalibrationMatrix) -> StokesPixel {
    let i = p.to_array();
    let m = c.recovery();
    let dot = |row: &[f64; 4]| row[0] * i[0] + row[1] * i[1] + row[2] * i[2] + row[3] * i[3];
    StokesPixel::new(dot(&m[0]), dot(&m[1]), dot(&m[2]))
}

/// `I = A·S` (Eq. of measurement); the result always satisfies the
/// calibration identity `i0 + i90 = i45 + i135` for the default angles.
pub fn stokes_to_intensities(s: StokesPixel, c: &CalibrationMatrix) -> IntensityPixel {
    let v = s.to_array();
    let m = c.forward();
    let dot = |row: &[f64; 3]| row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    IntensityPixel::new(dot(&m[0]), dot(&m[1]), dot(&m[2]), dot(&m[3]))
}

/// Degree of linear polarization `√(s1²+s2²)/s0`. Requires `s0 > 0`.
pub fn dop(s: StokesPixel) -> Result<f64, StokesError> {
    if s.s0 <= 0.0 {
        return Err(StokesError::NonPositiveIntensity(s.s0));
    }
    Ok((s.s1 * s.s1 + s.s2 * s.s2).sqrt() / s.s0)
}

/// Stokes vector of a fully polarized wave with the given amplitudes:
/// `(e0x²+e0y², e0x²−e0y², 2·e0x·e0y)`. Always on the `s0² = s1²+s2²`
/// boundary.
pub fn stokes_from_wave(w: WaveAmplitudes) -> StokesPixel {
    StokesPixel::new(
        w.e0x * w.e0x + w.e0y * w.e0y,
        w.e0x * w.e0x - w.e0y * w.e0y,
        2.0 * w.e0x * w.e0y,
    )
}

/// Per-pixel `Ã·I` over a whole image.
pub fn image_to_stokes(img: &PolarImage, c: &CalibrationMatrix) -> StokesImage {
    StokesImage::from_fn(img.height(), img.width(), |y, x| {
        intensities_to_stokes(img.get(y, x), c)
    })
}

/// Per-pixel `A·S` over a whole image.
pub fn image_to_intensities(img: &StokesImage, c: &CalibrationMatrix) -> PolarImage {
    PolarImage::from_fn(img.height(), img.width(), |y, x| {
        stokes_to_intensities(img.get(y, x), c)
    })
}
