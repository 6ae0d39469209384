//! Evaluation arithmetic: Gaussian feature statistics, the Fréchet distance
//! between them, a seed-deterministic stand-in feature extractor, and the
//! error-rate evolution of detection scores.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{Graph, Shape};
use crate::image::PolarImage;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least two samples to fit Gaussian statistics, got {0}")]
    TooFewSamples(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("error rate is undefined for a perfect RGB baseline (AP = 1)")]
    DegenerateBaseline,
    #[error("average precision {0} is outside [0, 1]")]
    ApOutOfRange(f64),
}

/// Mean and covariance of a feature distribution assumed Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased sample covariance of a set of feature vectors.
pub fn fit_stats(features: &[Vec<f64>]) -> Result<GaussianStats, MetricsError> {
    let n = features.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let d = features[0].len();
    for f in features {
        if f.len() != d {
            return Err(MetricsError::DimensionMismatch(d, f.len()));
        }
    }
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let centered = DVector::from_column_slice(f) - &mean;
        cov += &centered * centered.transpose();
    }
    cov /= (n - 1) as f64;
    Ok(GaussianStats { mean, cov })
}

/// Symmetric PSD square root via eigendecomposition, with negative
/// eigenvalues (numerical noise) clamped to zero.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

/// `‖μa−μb‖² + Tr(Σa + Σb − 2·(Σa Σb)^{1/2})`, with the cross term computed
/// symmetrically as `Tr((Σa^{1/2} Σb Σa^{1/2})^{1/2})` and the result
/// clamped to be non-negative.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64, MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::DimensionMismatch(a.dim(), b.dim()));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let sqrt_a = sqrtm_psd(&a.cov);
    let inner = &sqrt_a * &b.cov * &sqrt_a;
    let cross = sqrtm_psd(&inner).trace();
    let dist = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    Ok(dist.max(0.0))
}

/// Feature dimension of [`toy_features`].
pub const TOY_FEATURE_DIM: usize = 64;

/// Seed-deterministic random-convolution features: two 3x3 conv layers with
/// a leaky rectifier between them, then global average pooling to
/// [`TOY_FEATURE_DIM`] values. A stand-in for a trained feature extractor;
/// scores are only comparable at a fixed seed.
pub fn toy_features(img: &PolarImage, seed: u64) -> Vec<f64> {
    toy_features_channels(img.data(), 4, img.height(), img.width(), seed)
}

/// Same extractor over any channel count (e.g. 3-channel payloads).
pub fn toy_features_channels(
    data: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Vec<f64> {
    let hidden = 32usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // weight draws depend on the channel count, keeping the stream aligned
    // for images of the same layout
    let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        (0..n).map(|_| rng.random_range(-bound..bound)).collect()
    };
    let w1 = draw(hidden * channels * 9, channels * 9);
    let w2 = draw(TOY_FEATURE_DIM * hidden * 9, hidden * 9);

    let mut g = Graph::<f64>::new();
    let plane = height * width;
    let mut planar = vec![0.0f64; channels * plane];
    for p in 0..plane {
        for c in 0..channels {
            planar[c * plane + p] = data[p * channels + c] / 255.0;
        }
    }
    let input = g
        .leaf(Shape::new(1, channels, height, width), planar)
        .expect("image dims are consistent");
    let w1 = g
        .leaf(Shape::new(hidden, channels, 3, 3), w1)
        .expect("weight layout");
    let b1 = g
        .leaf(Shape::new(1, hidden, 1, 1), vec![0.0; hidden])
        .expect("bias layout");
    let w2 = g
        .leaf(Shape::new(TOY_FEATURE_DIM, hidden, 3, 3), w2)
        .expect("weight layout");
    let b2 = g
        .leaf(Shape::new(1, TOY_FEATURE_DIM, 1, 1), vec![0.0; TOY_FEATURE_DIM])
        .expect("bias layout");
    let h1 = g.conv2d(input, w1, b1).expect("shapes agree");
    let h1 = g.leaky_relu(h1, 0.1).expect("shapes agree");
    let h2 = g.conv2d(h1, w2, b2).expect("shapes agree");
    let pooled = g.spatial_mean(h2).expect("shapes agree");
    g.values(pooled).to_vec()
}

/// Detection average precisions on the RGB baseline and the polarimetric
/// variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApPair {
    pub ap_rgb: f64,
    pub ap_polar: f64,
}

impl ApPair {
    pub fn new(ap_rgb: f64, ap_polar: f64) -> Self {
        Self { ap_rgb, ap_polar }
    }
}

/// Error-rate evolution `((1−AP_p) − (1−AP_rgb)) / (1−AP_rgb)`;
/// negative values mean the polarimetric variant improved detection.
pub fn error_rate(p: ApPair) -> Result<f64, MetricsError> {
    for ap in [p.ap_rgb, p.ap_polar] {
        if !(0.0..=1.0).contains(&ap) {
            return Err(MetricsError::ApOutOfRange(ap));
        }
    }
    if p.ap_rgb == 1.0 {
        return Err(MetricsError::DegenerateBaseline);
    }
    Ok(((1.0 - p.ap_polar) - (1.0 - p.ap_rgb)) / (1.0 - p.ap_rgb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::stokes::IntensityPixel;

    fn stats_1d(mean: f64, var: f64) -> GaussianStats {
        GaussianStats {
            mean: DVector::from_vec(vec![mean]),
            cov: DMatrix::from_vec(1, 1, vec![var]),
        }
    }

    #[test]
    fn fit_stats_examples() {
        let stats = fit_stats(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(stats.mean.as_slice(), &[1.0, 0.0]);
        assert_eq!(stats.cov[(0, 0)], 2.0); // unbiased divisor 1
        assert_eq!(stats.cov[(1, 1)], 0.0);

        let constant = fit_stats(&[vec![3.0], vec![3.0], vec![3.0]]).unwrap();
        assert_eq!(constant.cov[(0, 0)], 0.0);

        assert_eq!(
            fit_stats(&[vec![1.0]]).unwrap_err(),
            MetricsError::TooFewSamples(1)
        );
    }

    #[test]
    fn frechet_examples() {
        let a = stats_1d(0.0, 1.0);
        assert_eq!(frechet_distance(&a, &a).unwrap(), 0.0);

        let b = stats_1d(1.0, 1.0);
        assert_abs_diff_eq!(frechet_distance(&a, &b).unwrap(), 1.0, epsilon = 1e-9);

        let wide = stats_1d(0.0, 4.0);
        assert_abs_diff_eq!(frechet_distance(&a, &wide).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn frechet_dimension_mismatch() {
        let a = stats_1d(0.0, 1.0);
        let b = fit_stats(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(
            frechet_distance(&a, &b).unwrap_err(),
            MetricsError::DimensionMismatch(1, 2)
        );
    }

    #[test]
    fn toy_features_are_seed_deterministic() {
        let img = PolarImage::filled(6, 7, IntensityPixel::new(10.0, 20.0, 30.0, 40.0));
        let a = toy_features(&img, 5);
        let b = toy_features(&img, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), TOY_FEATURE_DIM);
        let c = toy_features(&img, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn error_rate_reference_rows() {
        let er = error_rate(ApPair::new(0.663, 0.704)).unwrap();
        assert_abs_diff_eq!(er, -0.1217, epsilon = 5e-5);
        let er = error_rate(ApPair::new(0.785, 0.794)).unwrap();
        assert_abs_diff_eq!(er, -0.0419, epsilon = 5e-5);
        assert_eq!(error_rate(ApPair::new(0.5, 0.5)).unwrap(), 0.0);
    }

    #[test]
    fn error_rate_guards() {
        assert_eq!(
            error_rate(ApPair::new(1.0, 0.5)).unwrap_err(),
            MetricsError::DegenerateBaseline
        );
        assert_eq!(
            error_rate(ApPair::new(0.5, 1.2)).unwrap_err(),
            MetricsError::ApOutOfRange(1.2)
        );
    }

    #[test]
    fn error_rate_sign_tracks_improvement() {
        assert!(error_rate(ApPair::new(0.6, 0.7)).unwrap() < 0.0);
        assert!(error_rate(ApPair::new(0.7, 0.6)).unwrap() > 0.0);
    }
}
