//! Polarimetric admissibility toolkit: Stokes algebra, constraint checking
//! and repair, synthetic dataset generation, bit-exact image I/O, a small
//! reverse-mode autodiff engine driving a constrained toy CycleGAN, and the
//! evaluation arithmetic (Fréchet distance, error-rate evolution).

pub mod admissibility;
pub mod autodiff;
pub mod image;
pub mod metrics;
pub mod pario;
pub mod stokes;
pub mod synth;

pub use admissibility::{
    c1_normalized, c1_residual, c2_violation, check_pixel, dataset_report, image_feasible,
    image_losses, project_image, project_to_feasible, ConstraintTolerance, PixelCheck,
    ViolationReport,
};
pub use image::{ChannelImage, ImageError, PolarImage, StokesImage};
pub use stokes::{
    build_calibration, dop, intensities_to_stokes, stokes_from_wave, stokes_to_intensities,
    CalibrationMatrix, IntensityPixel, StokesPixel, WaveAmplitudes,
};
pub use metrics::{
    error_rate, fit_stats, frechet_distance, toy_features, ApPair, GaussianStats,
};
pub use synth::{synth_admissible, synth_corrupted, synth_dataset, Corruption, SynthSpec};
