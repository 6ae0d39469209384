//! Pixelwise constraint checks, penalty losses, dataset statistics, and
//! projection onto the feasible set.
//!
//! Three constraints define feasibility of a 4-channel intensity pixel:
//! - C1 (calibration): `I = A·S`, equivalently `i0 + i90 = i45 + i135` for
//!   the default angles;
//! - C2 (admissibility): `s0² ≥ s1² + s2²` of the recovered Stokes vector;
//! - C3 (positivity): `s0 > 0`.

use serde::Serialize;
use thiserror::Error;

use crate::image::PolarImage;
use crate::stokes::{
    intensities_to_stokes, stokes_to_intensities, CalibrationMatrix, IntensityPixel, StokesPixel,
};

/// Smallest total intensity kept when repairing a C3 violation; strict
/// positivity needs a representable floor.
pub const EPS_POS: f64 = 1e-6;

/// Multiplicative shrink applied to the C2 rescale. Mapping a Stokes vector
/// through `A` and back perturbs the energy excess by up to ~18ε·s0², so the
/// repaired vector must sit inside the boundary by a larger margin
/// (2e−13·s0² here) for the recovered pixel to stay feasible.
const C2_RESCALE_SHRINK: f64 = 1.0 - 1e-13;

#[derive(Debug, Error, PartialEq)]
pub enum AdmissibilityError {
    #[error("dataset contains no images")]
    EmptyDataset,
}

/// Tolerances for declaring a pixel feasible. `c1_abs`/`c1_rel` bound the
/// C1 residual (absolute, plus relative to the summed channel magnitudes);
/// `c2_abs` bounds the C2 energy excess in squared intensity units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintTolerance {
    pub c1_abs: f64,
    pub c1_rel: f64,
    pub c2_abs: f64,
}

impl ConstraintTolerance {
    /// Strict feasibility for synthetic or repaired data. The relative C1
    /// term only absorbs floating-point rounding of exact constructions.
    pub fn exact() -> Self {
        Self {
            c1_abs: 0.0,
            c1_rel: 1e-6,
            c2_abs: 0.0,
        }
    }

    /// Slack for 8-bit measured images, where quantization breaks the
    /// calibration identity by up to a couple of intensity units.
    pub fn measured_8bit() -> Self {
        Self {
            c1_abs: 2.0,
            c1_rel: 0.0,
            c2_abs: 0.0,
        }
    }
}

impl Default for ConstraintTolerance {
    fn default() -> Self {
        Self::exact()
    }
}

/// Outcome of checking one pixel against all three constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelCheck {
    pub c1_ok: bool,
    pub c2_ok: bool,
    pub c3_ok: bool,
}

impl PixelCheck {
    pub fn all_ok(&self) -> bool {
        self.c1_ok && self.c2_ok && self.c3_ok
    }
}

/// Mean penalty losses over an image (per-pixel averages).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageLosses {
    pub l_c1: f64,
    pub l_c2: f64,
}

/// Per-image summary used to build a [`ViolationReport`]. Images can be
/// summarized independently (e.g. in parallel) and aggregated afterwards
/// with a fixed reduction order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePixelStats {
    pub c1_norm_mean: f64,
    pub c2_violation_fraction: f64,
    pub c3_violations: usize,
    pub pixels: usize,
}

/// Dataset-level constraint statistics. C1 is aggregated as the normalized
/// residual `‖I−AŜ‖/(‖I‖+‖AŜ‖)` averaged per image; C2 as the per-image
/// fraction of pixels whose energy excess exceeds the tolerance; C3 as the
/// pooled fraction of pixels with non-positive `s0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationReport {
    #[serde(rename = "c1_norm_mean")]
    pub c1_normalized_mean: f64,
    #[serde(rename = "c1_norm_std")]
    pub c1_normalized_std: f64,
    #[serde(rename = "c1_norm_median")]
    pub c1_normalized_median: f64,
    #[serde(rename = "c2_frac_mean")]
    pub c2_violation_fraction_mean: f64,
    #[serde(rename = "c2_frac_std")]
    pub c2_violation_fraction_std: f64,
    #[serde(rename = "c2_frac_median")]
    pub c2_violation_fraction_median: f64,
    #[serde(rename = "c3_frac")]
    pub c3_violation_fraction: f64,
    #[serde(rename = "pixels")]
    pub pixel_count: u64,
}

impl ViolationReport {
    /// Line-oriented `key=value` rendering with the same keys as the JSON
    /// serialization.
    pub fn to_text(&self) -> String {
        format!(
            "c1_norm_mean={}\nc1_norm_std={}\nc1_norm_median={}\nc2_frac_mean={}\nc2_frac_std={}\nc2_frac_median={}\nc3_frac={}\npixels={}\n",
            self.c1_normalized_mean,
            self.c1_normalized_std,
            self.c1_normalized_median,
            self.c2_violation_fraction_mean,
            self.c2_violation_fraction_std,
            self.c2_violation_fraction_median,
            self.c3_violation_fraction,
            self.pixel_count
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `‖I − A·Ŝ‖₂` with `Ŝ = Ã·I`; zero exactly on calibrated pixels.
pub fn c1_residual(p: IntensityPixel, c: &CalibrationMatrix) -> f64 {
    residual_vector(p, c).iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖I−AŜ‖ / (‖I‖+‖AŜ‖)`, with the 0/0 case defined as 0.
pub fn c1_normalized(p: IntensityPixel, c: &CalibrationMatrix) -> f64 {
    let reproj = stokes_to_intensities(intensities_to_stokes(p, c), c);
    let denom = p.norm() + reproj.norm();
    if denom == 0.0 {
        return 0.0;
    }
    let mut num = 0.0;
    for (a, b) in p.to_array().iter().zip(reproj.to_array().iter()) {
        num += (a - b) * (a - b);
    }
    num.sqrt() / denom
}

/// Rectified C2 penalty `max(s1² + s2² − s0², 0)`.
pub fn c2_violation(s: StokesPixel) -> f64 {
    s.energy_excess().max(0.0)
}

fn residual_vector(p: IntensityPixel, c: &CalibrationMatrix) -> [f64; 4] {
    let reproj = stokes_to_intensities(intensities_to_stokes(p, c), c);
    let i = p.to_array();
    let r = reproj.to_array();
    [i[0] - r[0], i[1] - r[1], i[2] - r[2], i[3] - r[3]]
}

fn c1_threshold(p: IntensityPixel, tol: &ConstraintTolerance) -> f64 {
    let magnitude: f64 = p.to_array().iter().map(|v| v.abs()).sum();
    tol.c1_abs + tol.c1_rel * magnitude.max(f64::MIN_POSITIVE)
}

/// Checks one pixel against all three constraints at the given tolerance.
/// The C2 boundary (equality) counts as satisfied.
pub fn check_pixel(
    p: IntensityPixel,
    c: &CalibrationMatrix,
    tol: &ConstraintTolerance,
) -> PixelCheck {
    let s = intensities_to_stokes(p, c);
    PixelCheck {
        c1_ok: c1_residual(p, c) <= c1_threshold(p, tol),
        c2_ok: c2_violation(s) <= tol.c2_abs,
        c3_ok: s.s0 > 0.0,
    }
}

/// Mean C1 residual and mean C2 penalty over all pixels of an image.
/// Images are non-empty by construction.
pub fn image_losses(img: &PolarImage, c: &CalibrationMatrix) -> ImageLosses {
    let mut sum_c1 = 0.0;
    let mut sum_c2 = 0.0;
    for p in img.pixels() {
        sum_c1 += c1_residual(p, c);
        sum_c2 += c2_violation(intensities_to_stokes(p, c));
    }
    let n = img.pixel_count() as f64;
    ImageLosses {
        l_c1: sum_c1 / n,
        l_c2: sum_c2 / n,
    }
}

/// Summarizes one image for later aggregation into a [`ViolationReport`].
pub fn image_stats(
    img: &PolarImage,
    c: &CalibrationMatrix,
    tol: &ConstraintTolerance,
) -> ImagePixelStats {
    let mut c1_sum = 0.0;
    let mut c2_bad = 0usize;
    let mut c3_bad = 0usize;
    for p in img.pixels() {
        c1_sum += c1_normalized(p, c);
        let s = intensities_to_stokes(p, c);
        if c2_violation(s) > tol.c2_abs {
            c2_bad += 1;
        }
        if s.s0 <= 0.0 {
            c3_bad += 1;
        }
    }
    let pixels = img.pixel_count();
    ImagePixelStats {
        c1_norm_mean: c1_sum / pixels as f64,
        c2_violation_fraction: c2_bad as f64 / pixels as f64,
        c3_violations: c3_bad,
        pixels,
    }
}

/// True when every pixel of the image passes [`check_pixel`].
pub fn image_feasible(img: &PolarImage, c: &CalibrationMatrix, tol: &ConstraintTolerance) -> bool {
    img.pixels().all(|p| check_pixel(p, c, tol).all_ok())
}

fn mean_std_median(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite stats"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    (mean, var.sqrt(), median)
}

/// Combines per-image summaries with a fixed reduction order, so the result
/// does not depend on how the per-image work was scheduled.
pub fn aggregate_stats(stats: &[ImagePixelStats]) -> Result<ViolationReport, AdmissibilityError> {
    if stats.is_empty() {
        return Err(AdmissibilityError::EmptyDataset);
    }
    let c1: Vec<f64> = stats.iter().map(|s| s.c1_norm_mean).collect();
    let c2: Vec<f64> = stats.iter().map(|s| s.c2_violation_fraction).collect();
    let (c1_mean, c1_std, c1_median) = mean_std_median(&c1);
    let (c2_mean, c2_std, c2_median) = mean_std_median(&c2);
    let total_pixels: usize = stats.iter().map(|s| s.pixels).sum();
    let total_c3: usize = stats.iter().map(|s| s.c3_violations).sum();
    Ok(ViolationReport {
        c1_normalized_mean: c1_mean,
        c1_normalized_std: c1_std,
        c1_normalized_median: c1_median,
        c2_violation_fraction_mean: c2_mean,
        c2_violation_fraction_std: c2_std,
        c2_violation_fraction_median: c2_median,
        c3_violation_fraction: total_c3 as f64 / total_pixels as f64,
        pixel_count: total_pixels as u64,
    })
}

/// Per-image constraint statistics aggregated over a dataset.
pub fn dataset_report(
    imgs: &[PolarImage],
    c: &CalibrationMatrix,
    tol: &ConstraintTolerance,
) -> Result<ViolationReport, AdmissibilityError> {
    let stats: Vec<ImagePixelStats> = imgs.iter().map(|img| image_stats(img, c, tol)).collect();
    aggregate_stats(&stats)
}

/// Repairs the recovered Stokes vector: clamps non-positive `s0` to
/// [`EPS_POS`] (zeroing the polarized part), then rescales `(s1, s2)` onto
/// the admissibility disk when the polarized energy exceeds `s0²`.
pub fn repair_stokes(s: StokesPixel) -> StokesPixel {
    if s.s0 <= 0.0 {
        return StokesPixel::new(EPS_POS, 0.0, 0.0);
    }
    let r = (s.s1 * s.s1 + s.s2 * s.s2).sqrt();
    if r * r > s.s0 * s.s0 {
        let f = s.s0 / r * C2_RESCALE_SHRINK;
        return StokesPixel::new(s.s0, s.s1 * f, s.s2 * f);
    }
    s
}

/// Projects a pixel onto the feasible set. Stage 1 replaces the pixel by
/// `A·Ã·I`, which satisfies the calibration identity exactly; stage 2
/// repairs C3 and C2 in Stokes space before mapping back through `A`.
/// The result passes [`check_pixel`] at the exact tolerance.
pub fn project_to_feasible(p: IntensityPixel, c: &CalibrationMatrix) -> IntensityPixel {
    let s = repair_stokes(intensities_to_stokes(p, c));
    stokes_to_intensities(s, c)
}

/// [`project_to_feasible`] applied to every pixel.
pub fn project_image(img: &PolarImage, c: &CalibrationMatrix) -> PolarImage {
    PolarImage::from_fn(img.height(), img.width(), |y, x| {
        project_to_feasible(img.get(y, x), c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn px(i0: f64, i45: f64, i90: f64, i135: f64) -> IntensityPixel {
        IntensityPixel::new(i0, i45, i90, i135)
    }

    #[test]
    fn c1_residual_examples() {
        let c = CalibrationMatrix::default();
        assert_eq!(c1_residual(px(1.0, 1.0, 1.0, 1.0), &c), 0.0);
        assert_abs_diff_eq!(
            c1_residual(px(1.0, 0.0, 0.0, 0.0), &c),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        assert_eq!(c1_residual(px(3.0, 2.0, 1.0, 2.0), &c), 0.0);
    }

    #[test]
    fn c1_normalized_examples() {
        let c = CalibrationMatrix::default();
        assert_eq!(c1_normalized(px(1.0, 1.0, 1.0, 1.0), &c), 0.0);
        assert_eq!(c1_normalized(px(0.0, 0.0, 0.0, 0.0), &c), 0.0);
        // ‖I‖ = 1, ‖AŜ‖ = √1.5
        let expected = 0.5f64.sqrt() / (1.0 + 1.5f64.sqrt());
        assert_abs_diff_eq!(
            c1_normalized(px(1.0, 0.0, 0.0, 0.0), &c),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 0.31784, epsilon = 1e-5);
    }

    #[test]
    fn c2_violation_examples() {
        assert_eq!(c2_violation(StokesPixel::new(2.0, 0.0, 0.0)), 0.0);
        assert_eq!(c2_violation(StokesPixel::new(2.0, 2.0, 1.0)), 1.0);
        assert_eq!(c2_violation(StokesPixel::new(1.0, 1.0, 0.0)), 0.0);
    }

    #[test]
    fn check_pixel_examples() {
        let c = CalibrationMatrix::default();
        let tol = ConstraintTolerance::exact();
        let ok = check_pixel(px(1.0, 1.0, 1.0, 1.0), &c, &tol);
        assert_eq!(ok, PixelCheck { c1_ok: true, c2_ok: true, c3_ok: true });

        // C2 holds with equality on the recovered (1,1,0)
        let boundary = check_pixel(px(1.0, 0.0, 0.0, 0.0), &c, &tol);
        assert_eq!(boundary, PixelCheck { c1_ok: false, c2_ok: true, c3_ok: true });

        let dark = check_pixel(px(0.0, 0.0, 0.0, 0.0), &c, &tol);
        assert_eq!(dark, PixelCheck { c1_ok: true, c2_ok: true, c3_ok: false });
    }

    #[test]
    fn image_losses_examples() {
        let c = CalibrationMatrix::default();
        let uniform = PolarImage::filled(2, 2, px(1.0, 1.0, 1.0, 1.0));
        assert_eq!(image_losses(&uniform, &c), ImageLosses { l_c1: 0.0, l_c2: 0.0 });

        let two = PolarImage::new(
            1,
            2,
            vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let losses = image_losses(&two, &c);
        assert_abs_diff_eq!(losses.l_c1, 0.5f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_eq!(losses.l_c2, 0.0);

        let hot = stokes_to_intensities(StokesPixel::new(2.0, 2.0, 1.0), &c);
        let single = PolarImage::filled(1, 1, hot);
        let losses = image_losses(&single, &c);
        assert_abs_diff_eq!(losses.l_c1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(losses.l_c2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn dataset_report_zero_for_admissible_and_half_for_constructed() {
        let c = CalibrationMatrix::default();
        let tol = ConstraintTolerance::exact();
        let clean: Vec<PolarImage> = (0..3)
            .map(|k| {
                PolarImage::from_fn(4, 4, |y, x| {
                    stokes_to_intensities(
                        StokesPixel::new(10.0 + k as f64, 0.25 * y as f64, 0.25 * x as f64),
                        &c,
                    )
                })
            })
            .collect();
        let report = dataset_report(&clean, &c, &tol).unwrap();
        assert_eq!(report.c2_violation_fraction_mean, 0.0);
        assert_eq!(report.c3_violation_fraction, 0.0);
        assert!(report.c1_normalized_mean < 1e-12);
        assert_eq!(report.pixel_count, 48);

        // one image, half the pixels inflated past the admissibility disk
        let half = PolarImage::from_fn(2, 2, |y, x| {
            let s = if (y * 2 + x) % 2 == 0 {
                StokesPixel::new(2.0, 0.4, 0.2)
            } else {
                StokesPixel::new(2.0, 2.0, 1.0)
            };
            stokes_to_intensities(s, &c)
        });
        let report = dataset_report(std::slice::from_ref(&half), &c, &tol).unwrap();
        assert_eq!(report.c2_violation_fraction_mean, 0.5);
        assert_eq!(report.c2_violation_fraction_std, 0.0);
        assert_eq!(report.c2_violation_fraction_median, 0.5);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let c = CalibrationMatrix::default();
        assert_eq!(
            dataset_report(&[], &c, &ConstraintTolerance::exact()).unwrap_err(),
            AdmissibilityError::EmptyDataset
        );
    }

    #[test]
    fn projection_examples() {
        let c = CalibrationMatrix::default();
        let tol = ConstraintTolerance::exact();

        let already = px(1.0, 1.0, 1.0, 1.0);
        assert_eq!(project_to_feasible(already, &c), already);

        let projected = project_to_feasible(px(1.0, 0.0, 0.0, 0.0), &c);
        for (got, want) in projected.to_array().iter().zip([1.0, 0.5, 0.0, 0.5]) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-12);
        }

        let inflated = stokes_to_intensities(StokesPixel::new(2.0, 2.0, 1.0), &c);
        let repaired = project_to_feasible(inflated, &c);
        let f = 2.0 / 5.0f64.sqrt();
        let want = stokes_to_intensities(StokesPixel::new(2.0, 2.0 * f, 1.0 * f), &c);
        for (got, want) in repaired.to_array().iter().zip(want.to_array()) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-9);
        }
        assert!(check_pixel(repaired, &c, &tol).all_ok());
    }

    #[test]
    fn projection_repairs_negative_s0() {
        let c = CalibrationMatrix::default();
        let bad = stokes_to_intensities(StokesPixel::new(-3.0, 1.0, 0.5), &c);
        let fixed = project_to_feasible(bad, &c);
        let s = intensities_to_stokes(fixed, &c);
        assert_abs_diff_eq!(s.s0, EPS_POS, epsilon = 1e-18);
        assert_eq!((s.s1, s.s2), (0.0, 0.0));
        assert!(check_pixel(fixed, &c, &ConstraintTolerance::exact()).all_ok());
    }

    #[test]
    fn report_serialization_field_names() {
        let report = ViolationReport {
            c1_normalized_mean: 0.5,
            c1_normalized_std: 0.25,
            c1_normalized_median: 0.5,
            c2_violation_fraction_mean: 0.125,
            c2_violation_fraction_std: 0.0,
            c2_violation_fraction_median: 0.125,
            c3_violation_fraction: 0.0,
            pixel_count: 16,
        };
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        for key in [
            "c1_norm_mean",
            "c1_norm_std",
            "c1_norm_median",
            "c2_frac_mean",
            "c2_frac_std",
            "c2_frac_median",
            "c3_frac",
            "pixels",
        ] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        assert!(report.to_text().contains("c2_frac_mean=0.125\n"));
        assert!(report.to_text().contains("pixels=16\n"));
    }
}
