//! Cross-module consistency: the tape-based penalty pipeline against the
//! plain pixel-loop implementation, the DOP distribution of the synthesizer,
//! Fréchet self-distance under shuffling, and a frozen forward fixture.

use polaradmit_core::admissibility::image_losses;
use polaradmit_core::autodiff::{constraint_losses, Graph, Shape, TinyNet};
use polaradmit_core::image::PolarImage;
use polaradmit_core::metrics::{fit_stats, frechet_distance, toy_features};
use polaradmit_core::stokes::{dop, intensities_to_stokes, CalibrationMatrix};
use polaradmit_core::synth::{synth_corrupted, synth_dataset, Corruption, SynthSpec};

fn to_planar_batch(img: &PolarImage) -> (Shape, Vec<f64>) {
    let (h, w) = (img.height(), img.width());
    let plane = h * w;
    let mut values = vec![0.0; 4 * plane];
    for (p, px) in img.pixels().enumerate() {
        for (c, v) in px.to_array().into_iter().enumerate() {
            values[c * plane + p] = v;
        }
    }
    (Shape::new(1, 4, h, w), values)
}

/// The tape pipeline (channel maps, l2, rectifier) and the scalar pixel loop
/// are two independent routes to the same penalties.
#[test]
fn constraint_losses_agree_with_image_losses() {
    let calib = CalibrationMatrix::default();
    let specs = [
        SynthSpec {
            height: 6,
            width: 5,
            corruption: Corruption::C1Noise { sigma: 20.0 },
            seed: 3,
            ..SynthSpec::default()
        },
        SynthSpec {
            height: 4,
            width: 7,
            dop_range: (0.5, 0.9),
            corruption: Corruption::C2Inflate { factor: 2.5 },
            seed: 8,
            ..SynthSpec::default()
        },
        SynthSpec {
            height: 5,
            width: 5,
            corruption: Corruption::NegativeS0 { fraction: 0.4 },
            seed: 21,
            ..SynthSpec::default()
        },
    ];
    for spec in specs {
        let img = synth_corrupted(&spec, &calib).unwrap();
        let reference = image_losses(&img, &calib);

        let mut g = Graph::<f64>::new();
        let (shape, values) = to_planar_batch(&img);
        let batch = g.leaf(shape, values).unwrap();
        let losses = constraint_losses(&mut g, batch, &calib).unwrap();
        let l_c1 = g.scalar_value(losses.l_c1);
        let l_c2 = g.scalar_value(losses.l_c2);

        assert!(
            (l_c1 - reference.l_c1).abs() <= 1e-9 * reference.l_c1.max(1.0),
            "l_c1 {l_c1} vs {}",
            reference.l_c1
        );
        assert!(
            (l_c2 - reference.l_c2).abs() <= 1e-9 * reference.l_c2.max(1.0),
            "l_c2 {l_c2} vs {}",
            reference.l_c2
        );
    }
}

/// Recovered DOP over a large admissible image tracks the uniform draw: the
/// Kolmogorov–Smirnov statistic against Uniform(lo, hi) stays small.
#[test]
fn synth_dop_distribution_is_uniform() {
    let calib = CalibrationMatrix::default();
    let (lo, hi) = (0.1, 0.7);
    let spec = SynthSpec {
        height: 320,
        width: 320, // 102400 pixels
        dop_range: (lo, hi),
        seed: 99,
        ..SynthSpec::default()
    };
    let img = polaradmit_core::synth::synth_admissible(&spec, &calib).unwrap();
    let mut dops: Vec<f64> = img
        .pixels()
        .map(|p| dop(intensities_to_stokes(p, &calib)).unwrap())
        .collect();
    dops.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dops.len() as f64;
    let mut ks = 0.0f64;
    for (i, d) in dops.iter().enumerate() {
        let cdf = ((d - lo) / (hi - lo)).clamp(0.0, 1.0);
        let lo_step = i as f64 / n;
        let hi_step = (i + 1) as f64 / n;
        ks = ks.max((cdf - lo_step).abs()).max((cdf - hi_step).abs());
    }
    assert!(ks < 0.05, "KS statistic {ks}");
}

/// A feature set compared against a shuffled copy of itself has Fréchet
/// distance zero: the Gaussian statistics ignore sample order.
#[test]
fn frechet_self_distance_of_shuffled_set_is_zero() {
    let calib = CalibrationMatrix::default();
    let spec = SynthSpec {
        height: 8,
        width: 8,
        seed: 7,
        ..SynthSpec::default()
    };
    let imgs = synth_dataset(&spec, &calib, 12).unwrap();
    let features: Vec<Vec<f64>> = imgs.iter().map(|i| toy_features(i, 5)).collect();
    let mut shuffled = features.clone();
    shuffled.reverse();
    shuffled.swap(1, 4);
    let a = fit_stats(&features).unwrap();
    let b = fit_stats(&shuffled).unwrap();
    assert!(frechet_distance(&a, &b).unwrap() <= 1e-9);
}

/// Frozen regression fixture: a seeded generator on a fixed input. Captured
/// from the first verified run; guards against silent kernel changes.
#[test]
fn seeded_generator_forward_matches_golden_values() {
    let net = TinyNet::<f64>::generator(3, 4, 8, 2024);
    let shape = Shape::new(1, 3, 4, 4);
    let values: Vec<f64> = (0..shape.count())
        .map(|i| ((i as f64) * 0.37).sin() * 0.8)
        .collect();
    let out = polaradmit_core::autodiff::forward_inference(&net, shape, values).unwrap();
    assert_eq!(out.len(), 64);
    let golden = [
        GOLDEN_0, GOLDEN_1, GOLDEN_2, GOLDEN_3, GOLDEN_4, GOLDEN_5, GOLDEN_6, GOLDEN_7,
    ];
    for (i, g) in golden.iter().enumerate() {
        let idx = i * 8; // sample across the output tensor
        assert!(
            (out[idx] - g).abs() <= 1e-10 * g.abs().max(1e-3),
            "output[{idx}] = {:?} vs golden {g:?}",
            out[idx]
        );
    }
}

// Captured from the first verified run of the seeded forward above.
const GOLDEN_0: f64 = -0.008016169421571732;
const GOLDEN_1: f64 = -0.04749265682825569;
const GOLDEN_2: f64 = -0.03743703444825246;
const GOLDEN_3: f64 = 0.007485610328378694;
const GOLDEN_4: f64 = -0.01150681935260311;
const GOLDEN_5: f64 = 0.04709698180806461;
const GOLDEN_6: f64 = 0.021605159435296784;
const GOLDEN_7: f64 = 0.09222629726686843;
