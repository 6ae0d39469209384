//! `polaradmit`: validate, repair, synthesize, train on, and score
//! polarimetric image data from the command line.
//!
//! Exit codes: 0 success (and feasible data for `validate`), 2 usage or I/O
//! failure, 3 infeasible data, 4 training divergence. Progress goes to
//! stderr, results to stdout.

mod inputs;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use polaradmit_core::admissibility::{
    aggregate_stats, image_feasible, image_stats, project_image, ConstraintTolerance,
};
use polaradmit_core::autodiff::{
    generate_polar, load_checkpoint, load_generator, save_checkpoint, train, TrainConfig,
    TrainError,
};
use polaradmit_core::metrics::{error_rate, fit_stats, frechet_distance, toy_features_channels, ApPair};
use polaradmit_core::pario::{read_quad_png, write_pmir_polar, PmirDtype};
use polaradmit_core::stokes::CalibrationMatrix;
use polaradmit_core::synth::{synth_dataset, SynthConfig};

use inputs::{collect_polar_inputs, collect_rgb_inputs, tile_polar, tile_rgb, NamedImage};

const EXIT_OK: u8 = 0;
const EXIT_USAGE_IO: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "polaradmit", version, about = "Polarimetric admissibility toolkit")]
struct Cli {
    /// Overrides the seed of seeded subcommands (synth, train-toy).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel image processing.
    #[arg(long, global = true, env = "POLARADMIT_THREADS")]
    threads: Option<usize>,

    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check constraint fulfillment of a dataset and print a report.
    Validate {
        /// PMIR file, directory of PMIR files, quad-PNG stem, or manifest.
        #[arg(long)]
        input: PathBuf,
        /// Absolute slack on the C1 residual (intensity units).
        #[arg(long, default_value_t = 0.0)]
        tol_c1_abs: f64,
        /// Absolute slack on the C2 energy excess (squared units).
        #[arg(long, default_value_t = 0.0)]
        tol_c2_abs: f64,
        /// Emit the report as JSON instead of key=value text.
        #[arg(long)]
        json: bool,
    },
    /// Project every pixel onto the feasible set and write the result.
    Project {
        #[arg(long)]
        input: PathBuf,
        /// Output file (single input) or directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Generate a synthetic dataset from a key=value spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Output file (count=1) or directory.
        #[arg(long)]
        output: PathBuf,
    },
    /// Train the constrained toy CycleGAN on patch datasets.
    TrainToy {
        /// Directory of 4-channel PMIR images (polar domain).
        #[arg(long)]
        polar: PathBuf,
        /// Directory of 3-channel PMIR images (RGB domain).
        #[arg(long)]
        rgb: PathBuf,
        /// key=value training config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// CSV training log output path.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Apply a trained RGB→polar generator to images at native size.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fréchet distance between the feature statistics of two image sets.
    Fd {
        #[arg(long)]
        set_a: PathBuf,
        #[arg(long)]
        set_b: PathBuf,
        #[arg(long, default_value_t = 0)]
        feature_seed: u64,
    },
    /// Error-rate evolution from a pair of average precisions.
    Er {
        #[arg(long)]
        ap_rgb: f64,
        #[arg(long)]
        ap_polar: f64,
    },
    /// Convert a quad-PNG capture to a PMIR file.
    Convert {
        /// Stem of the four channel PNGs (<stem>_I0.png ...).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_USAGE_IO)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let threads = cli.threads.unwrap_or(1).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building worker pool")?;
    let progress = |msg: &str| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };

    match cli.command {
        Command::Validate {
            input,
            tol_c1_abs,
            tol_c2_abs,
            json,
        } => {
            let tol = ConstraintTolerance {
                c1_abs: tol_c1_abs,
                c2_abs: tol_c2_abs,
                ..ConstraintTolerance::exact()
            };
            let images = collect_polar_inputs(&input)?;
            progress(&format!("validating {} image(s)", images.len()));
            let calib = CalibrationMatrix::default();
            // per-image summaries computed in parallel, aggregated in input
            // order so the result is independent of the thread count
            let (stats, feasible): (Vec<_>, Vec<bool>) = pool.install(|| {
                use rayon::prelude::*;
                images
                    .par_iter()
                    .map(|ni| {
                        (
                            image_stats(&ni.image, &calib, &tol),
                            image_feasible(&ni.image, &calib, &tol),
                        )
                    })
                    .unzip()
            });
            let report = aggregate_stats(&stats).context("aggregating report")?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
            if feasible.iter().all(|ok| *ok) {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_INFEASIBLE)
            }
        }

        Command::Project { input, output } => {
            let images = collect_polar_inputs(&input)?;
            progress(&format!("projecting {} image(s)", images.len()));
            let calib = CalibrationMatrix::default();
            let projected: Vec<NamedImage<_>> = pool.install(|| {
                use rayon::prelude::*;
                images
                    .par_iter()
                    .map(|ni| NamedImage {
                        name: ni.name.clone(),
                        image: project_image(&ni.image, &calib),
                    })
                    .collect()
            });
            if projected.len() == 1 && output.extension().is_some_and(|e| e == "pmir") {
                write_pmir_polar(&projected[0].image, &output, PmirDtype::F64)
                    .with_context(|| format!("writing {}", output.display()))?;
            } else {
                std::fs::create_dir_all(&output)
                    .with_context(|| format!("creating {}", output.display()))?;
                for ni in &projected {
                    let path = output.join(format!("{}.pmir", ni.name));
                    write_pmir_polar(&ni.image, &path, PmirDtype::F64)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            Ok(EXIT_OK)
        }

        Command::Synth { spec, output } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading spec {}", spec.display()))?;
            let mut cfg = SynthConfig::parse(&text).context("parsing synth spec")?;
            if let Some(seed) = cli.seed {
                cfg.spec.seed = seed;
            }
            let calib = CalibrationMatrix::default();
            progress(&format!(
                "synthesizing {} image(s) of {}x{}",
                cfg.count, cfg.spec.height, cfg.spec.width
            ));
            let images = synth_dataset(&cfg.spec, &calib, cfg.count)?;
            if cfg.count == 1 && output.extension().is_some_and(|e| e == "pmir") {
                write_pmir_polar(&images[0], &output, PmirDtype::F64)
                    .with_context(|| format!("writing {}", output.display()))?;
            } else {
                std::fs::create_dir_all(&output)
                    .with_context(|| format!("creating {}", output.display()))?;
                for (k, img) in images.iter().enumerate() {
                    let path = output.join(format!("img_{k:05}.pmir"));
                    write_pmir_polar(img, &path, PmirDtype::F64)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
            }
            Ok(EXIT_OK)
        }

        Command::TrainToy {
            polar,
            rgb,
            config,
            out,
            log,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading config {}", path.display()))?;
                    TrainConfig::parse_config(&text).context("parsing training config")?
                }
                None => TrainConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let polar_images = collect_polar_inputs(&polar)?;
            let rgb_images = collect_rgb_inputs(&rgb)?;
            let patches_x: Vec<_> = polar_images
                .iter()
                .flat_map(|ni| tile_polar(&ni.image, cfg.patch))
                .collect();
            let patches_y: Vec<_> = rgb_images
                .iter()
                .flat_map(|ni| tile_rgb(&ni.image, cfg.patch))
                .collect();
            if patches_x.is_empty() || patches_y.is_empty() {
                bail!("no {0}x{0} patches could be tiled from the inputs", cfg.patch);
            }
            progress(&format!(
                "training on {} polar / {} rgb patches, {} epochs",
                patches_x.len(),
                patches_y.len(),
                cfg.epochs
            ));
            let write_outputs = |result: &polaradmit_core::autodiff::TrainResult| -> Result<()> {
                save_checkpoint(
                    &out,
                    &[
                        ("m_xy", &result.m_xy),
                        ("m_yx", &result.m_yx),
                        ("d_x", &result.d_x),
                        ("d_y", &result.d_y),
                    ],
                )
                .with_context(|| format!("writing checkpoint {}", out.display()))?;
                if let Some(log_path) = &log {
                    std::fs::write(log_path, result.log.to_csv())
                        .with_context(|| format!("writing log {}", log_path.display()))?;
                }
                Ok(())
            };
            match train(&cfg, &patches_x, &patches_y) {
                Ok(result) => {
                    write_outputs(&result)?;
                    progress(&format!("finished {} steps", result.log.steps.len()));
                    Ok(EXIT_OK)
                }
                Err(TrainError::NonFiniteLoss { step, last_good }) => {
                    eprintln!("training diverged at step {step}; keeping last good state");
                    write_outputs(&last_good)?;
                    Ok(EXIT_DIVERGED)
                }
                Err(other) => Err(other.into()),
            }
        }

        Command::Generate { ckpt, rgb, out } => {
            let checkpoint = load_checkpoint(&ckpt)
                .with_context(|| format!("reading checkpoint {}", ckpt.display()))?;
            let m_yx = load_generator::<f32>(&checkpoint, "m_yx")
                .context("restoring RGB→polar generator")?;
            let rgb_images = collect_rgb_inputs(&rgb)?;
            std::fs::create_dir_all(&out)
                .with_context(|| format!("creating {}", out.display()))?;
            progress(&format!("generating {} image(s)", rgb_images.len()));
            for ni in &rgb_images {
                let polar = generate_polar(&m_yx, &ni.image)?;
                let path = out.join(format!("{}.pmir", ni.name));
                write_pmir_polar(&polar, &path, PmirDtype::F32)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(EXIT_OK)
        }

        Command::Fd {
            set_a,
            set_b,
            feature_seed,
        } => {
            let features = |dir: &Path| -> Result<Vec<Vec<f64>>> {
                let images = collect_polar_inputs(dir)?;
                Ok(images
                    .iter()
                    .map(|ni| {
                        toy_features_channels(
                            ni.image.data(),
                            4,
                            ni.image.height(),
                            ni.image.width(),
                            feature_seed,
                        )
                    })
                    .collect())
            };
            let fa = features(&set_a)?;
            let fb = features(&set_b)?;
            progress(&format!("{} vs {} feature vectors", fa.len(), fb.len()));
            let stats_a = fit_stats(&fa).context("fitting statistics of set A")?;
            let stats_b = fit_stats(&fb).context("fitting statistics of set B")?;
            let fd = frechet_distance(&stats_a, &stats_b)?;
            println!("{fd}");
            Ok(EXIT_OK)
        }

        Command::Er { ap_rgb, ap_polar } => {
            let er = error_rate(ApPair::new(ap_rgb, ap_polar))?;
            println!("{er:.4}");
            Ok(EXIT_OK)
        }

        Command::Convert { input, output } => {
            let img = read_quad_png(&input)
                .with_context(|| format!("assembling quad-PNG stem {}", input.display()))?;
            write_pmir_polar(&img, &output, PmirDtype::U8)
                .with_context(|| format!("writing {}", output.display()))?;
            progress(&format!(
                "converted {}x{} capture",
                img.height(),
                img.width()
            ));
            Ok(EXIT_OK)
        }
    }
}
