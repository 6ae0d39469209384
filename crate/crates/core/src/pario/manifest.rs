//! Tab-separated dataset manifests: one `<split>\t<domain>\t<path>` line per
//! image. Paths are resolved against the manifest's directory at load time
//! and must exist.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use super::ParioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Rgb,
    Polar,
}

impl Domain {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "RGB" => Some(Domain::Rgb),
            "POLAR" => Some(Domain::Polar),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Rgb => "RGB",
            Domain::Polar => "POLAR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub domain: Domain,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Loads a manifest, resolving relative paths against its directory.
    /// Duplicate or missing files are errors.
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ParioError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let entry = (|| {
                let split = Split::parse(fields.next()?)?;
                let domain = Domain::parse(fields.next()?)?;
                let rel = fields.next()?;
                if fields.next().is_some() || rel.is_empty() {
                    return None;
                }
                Some((split, domain, rel.to_string()))
            })()
            .ok_or(ParioError::ManifestParse(lineno + 1))?;
            let (split, domain, rel) = entry;
            if !seen.insert(rel.clone()) {
                return Err(ParioError::DuplicatePath(rel));
            }
            let resolved = if Path::new(&rel).is_absolute() {
                PathBuf::from(&rel)
            } else {
                base.join(&rel)
            };
            if !resolved.is_file() {
                return Err(ParioError::MissingFile(resolved.display().to_string()));
            }
            entries.push(ManifestEntry {
                path: resolved,
                domain,
                split,
            });
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ParioError> {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.split, e.domain, e.path.display()));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn select(&self, domain: Domain, split: Option<Split>) -> Vec<&ManifestEntry> {
        self.entries
            .iter()
            .filter(|e| e.domain == domain && split.is_none_or(|s| e.split == s))
            .collect()
    }
}
