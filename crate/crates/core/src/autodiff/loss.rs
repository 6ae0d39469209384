//! Loss terms of the constrained CycleGAN objective, composed on the tape.

use crate::admissibility::EPS_POS;
use crate::autodiff::graph::{AutodiffError, Graph, TensorId};
use crate::autodiff::scalar::Scalar;
use crate::stokes::CalibrationMatrix;

/// Least-squares adversarial pair. `d_loss` trains the discriminator to emit
/// 1 on real and 0 on fake; `g_loss` rewards fakes the discriminator rates 1.
#[derive(Debug, Clone, Copy)]
pub struct LsganLosses {
    pub d_loss: TensorId,
    pub g_loss: TensorId,
}

pub fn lsgan_losses<T: Scalar>(
    g: &mut Graph<T>,
    d_real: TensorId,
    d_fake: TensorId,
) -> Result<LsganLosses, AutodiffError> {
    let one = T::one();
    let real_shift = g.affine(d_real, one, -one)?;
    let real_sq = g.square(real_shift)?;
    let real_term = g.mean_all(real_sq)?;
    let fake_sq = g.square(d_fake)?;
    let fake_term = g.mean_all(fake_sq)?;
    let d_loss = g.add(real_term, fake_term)?;

    let fake_shift = g.affine(d_fake, one, -one)?;
    let fake_shift_sq = g.square(fake_shift)?;
    let g_loss = g.mean_all(fake_shift_sq)?;
    Ok(LsganLosses { d_loss, g_loss })
}

/// l1 cycle-consistency: `mean|y − y_rec| + mean|x − x_rec|`.
pub fn cycle_loss<T: Scalar>(
    g: &mut Graph<T>,
    x: TensorId,
    x_rec: TensorId,
    y: TensorId,
    y_rec: TensorId,
) -> Result<TensorId, AutodiffError> {
    let dy = g.sub(y, y_rec)?;
    let ady = g.abs(dy)?;
    let my = g.mean_all(ady)?;
    let dx = g.sub(x, x_rec)?;
    let adx = g.abs(dx)?;
    let mx = g.mean_all(adx)?;
    g.add(my, mx)
}

/// Maps tanh activations from (−1, 1) onto the open intensity interval
/// (0, 255) via `v ↦ 127.5·(v+1)`. A hair-width clamp keeps outputs strictly
/// inside the interval even when tanh saturates to ±1 in finite precision,
/// so `Ŝ0 = Î0 + Î90 > 0` holds on every generated pixel.
pub fn scale_to_intensity<T: Scalar>(
    g: &mut Graph<T>,
    t: TensorId,
) -> Result<TensorId, AutodiffError> {
    let half = T::from_f64(127.5);
    let scaled = g.affine(t, half, half)?;
    g.clamp(scaled, T::from_f64(EPS_POS), T::from_f64(255.0 - EPS_POS))
}

/// Calibration and admissibility penalties of a generated batch.
#[derive(Debug, Clone, Copy)]
pub struct ConstraintLosses {
    pub l_c1: TensorId,
    pub l_c2: TensorId,
}

/// Penalties over a batch of generated 4-channel images already scaled to
/// intensity range: `l_c1` is the batch-and-pixel mean of `‖Î − A·Ŝ‖₂` and
/// `l_c2` the mean rectified energy excess of `Ŝ = Ã·Î`. Both use the
/// subgradient 0 at their kinks.
pub fn constraint_losses<T: Scalar>(
    g: &mut Graph<T>,
    fake_polar: TensorId,
    calib: &CalibrationMatrix,
) -> Result<ConstraintLosses, AutodiffError> {
    let recovery: Vec<T> = calib.recovery_flat().iter().map(|&v| T::from_f64(v)).collect();
    let forward: Vec<T> = calib.forward_flat().iter().map(|&v| T::from_f64(v)).collect();

    let shat = g.channel_map(fake_polar, 3, &recovery)?;
    let reproj = g.channel_map(shat, 4, &forward)?;
    let diff = g.sub(fake_polar, reproj)?;
    let dist = g.channel_l2(diff)?;
    let l_c1 = g.mean_all(dist)?;

    let pick = |g: &mut Graph<T>, ch: usize| {
        let mut row = [T::zero(); 3];
        row[ch] = T::one();
        g.channel_map(shat, 1, &row)
    };
    let s0 = pick(g, 0)?;
    let s1 = pick(g, 1)?;
    let s2 = pick(g, 2)?;
    let s0sq = g.square(s0)?;
    let s1sq = g.square(s1)?;
    let s2sq = g.square(s2)?;
    let polarized = g.add(s1sq, s2sq)?;
    let excess = g.sub(polarized, s0sq)?;
    let rect = g.relu(excess)?;
    let l_c2 = g.mean_all(rect)?;

    Ok(ConstraintLosses { l_c1, l_c2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::Shape;
    use approx::assert_abs_diff_eq;

    fn scalar_batch(g: &mut Graph<f64>, v: &[f64]) -> TensorId {
        g.leaf(Shape::new(v.len(), 1, 1, 1), v.to_vec()).unwrap()
    }

    #[test]
    fn lsgan_perfect_discriminator() {
        let mut g = Graph::new();
        let d_real = scalar_batch(&mut g, &[1.0, 1.0]);
        let d_fake = scalar_batch(&mut g, &[0.0, 0.0]);
        let losses = lsgan_losses(&mut g, d_real, d_fake).unwrap();
        assert_eq!(g.scalar_value(losses.d_loss), 0.0);
        assert_eq!(g.scalar_value(losses.g_loss), 1.0);
    }

    #[test]
    fn lsgan_fooled_discriminator() {
        let mut g = Graph::new();
        let d_real = scalar_batch(&mut g, &[1.0]);
        let d_fake = scalar_batch(&mut g, &[1.0]);
        let losses = lsgan_losses(&mut g, d_real, d_fake).unwrap();
        assert_eq!(g.scalar_value(losses.g_loss), 0.0);
    }

    #[test]
    fn lsgan_half_half() {
        let mut g = Graph::new();
        let d_real = scalar_batch(&mut g, &[0.5, 0.5]);
        let d_fake = scalar_batch(&mut g, &[0.5, 0.5]);
        let losses = lsgan_losses(&mut g, d_real, d_fake).unwrap();
        assert_abs_diff_eq!(g.scalar_value(losses.d_loss), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g.scalar_value(losses.g_loss), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn cycle_loss_examples() {
        let mut g = Graph::new();
        let shape = Shape::new(1, 1, 2, 2);
        let x = g.leaf(shape, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = g.leaf(shape, vec![0.5, 1.5, 2.5, 3.5]).unwrap();
        let zero = cycle_loss(&mut g, x, x, y, y).unwrap();
        assert_eq!(g.scalar_value(zero), 0.0);

        let y_shift = g.affine(y, 1.0, 1.0).unwrap();
        let one = cycle_loss(&mut g, x, x, y, y_shift).unwrap();
        assert_eq!(g.scalar_value(one), 1.0);
    }

    #[test]
    fn cycle_loss_matches_scalar_loop_oracle() {
        let mut g = Graph::new();
        let shape = Shape::new(2, 3, 2, 2);
        let vals = |seed: f64| -> Vec<f64> {
            (0..shape.count())
                .map(|i| ((i as f64 * 1.37 + seed).sin() * 2.0).fract())
                .collect()
        };
        let (xv, xrv, yv, yrv) = (vals(0.1), vals(0.7), vals(1.3), vals(2.9));
        let x = g.leaf(shape, xv.clone()).unwrap();
        let xr = g.leaf(shape, xrv.clone()).unwrap();
        let y = g.leaf(shape, yv.clone()).unwrap();
        let yr = g.leaf(shape, yrv.clone()).unwrap();
        let loss = cycle_loss(&mut g, x, xr, y, yr).unwrap();

        let n = shape.count() as f64;
        let mut oracle = 0.0;
        for i in 0..shape.count() {
            oracle += (yv[i] - yrv[i]).abs() / n;
        }
        for i in 0..shape.count() {
            oracle += (xv[i] - xrv[i]).abs() / n;
        }
        assert_abs_diff_eq!(g.scalar_value(loss), oracle, epsilon = 1e-12);
    }

    #[test]
    fn scale_to_intensity_examples() {
        let mut g = Graph::new();
        let t = g
            .leaf(Shape::new(1, 1, 1, 4), vec![0.0, -1.0, 1.0, 0.5])
            .unwrap();
        let s = scale_to_intensity(&mut g, t).unwrap();
        let out = g.values(s);
        assert_eq!(out[0], 127.5);
        assert!(out[1] > 0.0 && out[1] < 1e-5);
        assert!(out[2] < 255.0 && out[2] > 255.0 - 1e-5);
        assert_eq!(out[3], 127.5 * 1.5);
    }

    #[test]
    fn constraint_losses_on_admissible_batch_are_zero() {
        use crate::stokes::{stokes_to_intensities, StokesPixel};
        let calib = CalibrationMatrix::default();
        let mut g = Graph::new();
        // batch of 2 pixels built from admissible Stokes vectors
        let p1 = stokes_to_intensities(StokesPixel::new(100.0, 30.0, 40.0), &calib);
        let p2 = stokes_to_intensities(StokesPixel::new(200.0, 0.0, 0.0), &calib);
        let mut vals = Vec::new();
        for px in [p1, p2] {
            vals.extend_from_slice(&px.to_array());
        }
        let batch = g.leaf(Shape::new(2, 4, 1, 1), vals).unwrap();
        let losses = constraint_losses(&mut g, batch, &calib).unwrap();
        assert_abs_diff_eq!(g.scalar_value(losses.l_c1), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.scalar_value(losses.l_c2), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constraint_l_c1_on_uncalibrated_batch() {
        let calib = CalibrationMatrix::default();
        let mut g = Graph::new();
        let batch = g
            .leaf(Shape::new(1, 4, 1, 2), vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        let losses = constraint_losses(&mut g, batch, &calib).unwrap();
        // both pixels are (1,0,0,0): per-pixel residual √0.5
        assert_abs_diff_eq!(g.scalar_value(losses.l_c1), 0.5f64.sqrt(), epsilon = 1e-12);
    }
}
