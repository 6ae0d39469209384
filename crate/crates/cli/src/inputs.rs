//! Input discovery shared by the subcommands: a path may name a PMIR file,
//! a directory of PMIR files, a quad-PNG stem, or a dataset manifest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polaradmit_core::image::{PolarImage, StokesImage};
use polaradmit_core::pario::{read_pmir, read_quad_png, DatasetManifest, Domain, PmirImage};

/// One named image; the name seeds output file naming.
pub struct NamedImage<I> {
    pub name: String,
    pub image: I,
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string())
}

fn pmir_files_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "pmir"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .pmir files in {}", dir.display());
    }
    Ok(files)
}

fn quad_stem_exists(path: &Path) -> bool {
    let mut probe = path.as_os_str().to_os_string();
    probe.push("_I0.png");
    PathBuf::from(probe).is_file()
}

fn require_polar(img: PmirImage, origin: &Path) -> Result<PolarImage> {
    match img {
        PmirImage::Polar(p) => Ok(p),
        PmirImage::Stokes(_) => bail!(
            "{} holds a 3-channel image; expected 4 intensity channels",
            origin.display()
        ),
    }
}

fn require_rgb(img: PmirImage, origin: &Path) -> Result<StokesImage> {
    match img {
        PmirImage::Stokes(s) => Ok(s),
        PmirImage::Polar(_) => bail!(
            "{} holds a 4-channel image; expected a 3-channel payload",
            origin.display()
        ),
    }
}

/// Loads 4-channel polarimetric inputs from any supported form.
pub fn collect_polar_inputs(input: &Path) -> Result<Vec<NamedImage<PolarImage>>> {
    if input.is_dir() {
        return pmir_files_in(input)?
            .iter()
            .map(|p| {
                let img = read_pmir(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(NamedImage {
                    name: stem_name(p),
                    image: require_polar(img, p)?,
                })
            })
            .collect();
    }
    if quad_stem_exists(input) {
        let image = read_quad_png(input)
            .with_context(|| format!("assembling quad-PNG stem {}", input.display()))?;
        return Ok(vec![NamedImage {
            name: stem_name(input),
            image,
        }]);
    }
    if !input.is_file() {
        bail!("input {} does not exist", input.display());
    }
    // PMIR file or manifest: sniff the magic
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(input)
            .with_context(|| format!("opening {}", input.display()))?;
        let _ = f.read(&mut magic)?;
    }
    if &magic == b"PMIR" {
        let img = read_pmir(input).with_context(|| format!("reading {}", input.display()))?;
        return Ok(vec![NamedImage {
            name: stem_name(input),
            image: require_polar(img, input)?,
        }]);
    }
    let manifest = DatasetManifest::read(input)
        .with_context(|| format!("parsing manifest {}", input.display()))?;
    let entries = manifest.select(Domain::Polar, None);
    if entries.is_empty() {
        bail!("manifest {} lists no POLAR entries", input.display());
    }
    entries
        .iter()
        .map(|e| {
            let img = read_pmir(&e.path)
                .with_context(|| format!("reading {}", e.path.display()))?;
            Ok(NamedImage {
                name: stem_name(&e.path),
                image: require_polar(img, &e.path)?,
            })
        })
        .collect()
}

/// Loads 3-channel images (RGB payloads) from a directory of PMIR files.
pub fn collect_rgb_inputs(dir: &Path) -> Result<Vec<NamedImage<StokesImage>>> {
    pmir_files_in(dir)?
        .iter()
        .map(|p| {
            let img = read_pmir(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(NamedImage {
                name: stem_name(p),
                image: require_rgb(img, p)?,
            })
        })
        .collect()
}

/// Splits an image into non-overlapping patch-side tiles in raster order,
/// dropping partial tiles at the borders.
pub fn tile_polar(img: &PolarImage, patch: usize) -> Vec<PolarImage> {
    let mut tiles = Vec::new();
    for ty in 0..img.height() / patch {
        for tx in 0..img.width() / patch {
            tiles.push(PolarImage::from_fn(patch, patch, |y, x| {
                img.get(ty * patch + y, tx * patch + x)
            }));
        }
    }
    tiles
}

pub fn tile_rgb(img: &StokesImage, patch: usize) -> Vec<StokesImage> {
    let mut tiles = Vec::new();
    for ty in 0..img.height() / patch {
        for tx in 0..img.width() / patch {
            tiles.push(StokesImage::from_fn(patch, patch, |y, x| {
                img.get(ty * patch + y, tx * patch + x)
            }));
        }
    }
    tiles
}
