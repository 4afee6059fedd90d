//! Line-oriented manifest of paired image/label tiles.
//!
//! One record per line, tab-separated:
//!
//! ```text
//! relative/image.lct<TAB>relative/labels.lct<TAB>region<TAB>split
//! ```
//!
//! `#` starts a comment; blank lines are ignored. Paths are resolved
//! relative to the manifest file's directory. Regions used by train or
//! validation records must never appear in test records.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Manifest(format!(
                "unknown split {other:?}, expected train|validation|test"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub image: PathBuf,
    pub labels: PathBuf,
    pub region: String,
    pub split: Split,
}

/// Validated record set plus the directory paths resolve against.
#[derive(Debug, Clone)]
pub struct Manifest {
    root: PathBuf,
    records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Result<Manifest> {
        let mut images = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for rec in &records {
            if !images.insert(rec.image.clone()) {
                return Err(Error::Manifest(format!(
                    "duplicate image path {}",
                    rec.image.display()
                )));
            }
            if !labels.insert(rec.labels.clone()) {
                return Err(Error::Manifest(format!(
                    "duplicate label path {}",
                    rec.labels.display()
                )));
            }
        }
        let trainval: BTreeSet<&str> = records
            .iter()
            .filter(|r| r.split != Split::Test)
            .map(|r| r.region.as_str())
            .collect();
        for rec in records.iter().filter(|r| r.split == Split::Test) {
            if trainval.contains(rec.region.as_str()) {
                return Err(Error::RegionLeakage {
                    region: rec.region.clone(),
                });
            }
        }
        Ok(Manifest {
            root: root.into(),
            records,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Manifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Manifest(format!(
                    "{}:{}: expected 4 tab-separated fields, got {}",
                    path.display(),
                    lineno + 1,
                    fields.len()
                )));
            }
            records.push(ManifestRecord {
                image: PathBuf::from(fields[0]),
                labels: PathBuf::from(fields[1]),
                region: fields[2].to_string(),
                split: fields[3].parse()?,
            });
        }
        Manifest::new(root, records)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("# image\tlabels\tregion\tsplit\n");
        for rec in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                rec.image.display(),
                rec.labels.display(),
                rec.region,
                rec.split
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn split_records(&self, split: Split) -> Vec<&ManifestRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Resolve a record path against the manifest directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
}
