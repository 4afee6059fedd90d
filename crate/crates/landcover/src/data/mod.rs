//! Tile ingestion: container I/O, manifests, remapping and filtering,
//! normalization, one-hot encoding, distribution statistics, and synthetic
//! corpora for desk-scale testing.
//!
//! Tiles round-trip through the binary container exactly:
//!
//! ```
//! use landcover::data::tile;
//! use ndarray::Array3;
//!
//! let dir = tempfile::tempdir().unwrap();
//! let path = dir.path().join("a.img.lct");
//! let image = Array3::<u16>::from_elem((4, 256, 256), 1234);
//! tile::write_u16(&path, &image).unwrap();
//! assert_eq!(tile::read_image(&path).unwrap(), image);
//! ```
//!
//! Synthetic corpora are deterministic in their parameters and seed:
//!
//! ```
//! use landcover::data::synth::{synth_corpus, SynthParams};
//!
//! let tiles = synth_corpus(&SynthParams { n_tiles: 3, ..SynthParams::default() }, 7).unwrap();
//! assert_eq!(tiles.len(), 3);
//! // same params + seed => byte-identical corpus
//! let again = synth_corpus(&SynthParams { n_tiles: 3, ..SynthParams::default() }, 7).unwrap();
//! assert_eq!(tiles[0].labels, again[0].labels);
//! ```

pub mod manifest;
pub mod synth;
pub mod tile;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{ClassTaxonomy, Remap, NUM_CLASSES};

pub use manifest::{Manifest, ManifestRecord, Split};
pub use tile::{IMAGE_CHANNELS, TILE_SIZE};

/// One paired sample after remapping: 4-band image, target label map,
/// region tag, split assignment.
#[derive(Debug, Clone)]
pub struct Tile {
    pub image: Array3<u16>,
    pub labels: Array2<u8>,
    pub region: String,
    pub split: Split,
}

impl Tile {
    pub fn new(image: Array3<u16>, labels: Array2<u8>, region: String, split: Split) -> Result<Tile> {
        let (c, h, w) = image.dim();
        if c != IMAGE_CHANNELS || h != TILE_SIZE || w != TILE_SIZE {
            return Err(Error::Shape(format!(
                "tile image must be {IMAGE_CHANNELS}x{TILE_SIZE}x{TILE_SIZE}, got {c}x{h}x{w}"
            )));
        }
        if labels.dim() != (h, w) {
            return Err(Error::Shape(format!(
                "labels {:?} do not match image spatial dims {h}x{w}",
                labels.dim()
            )));
        }
        if let Some(&v) = labels.iter().find(|v| **v as usize >= NUM_CLASSES) {
            return Err(Error::ClassOutOfRange(v as u16));
        }
        Ok(Tile {
            image,
            labels,
            region,
            split,
        })
    }
}

/// Map raw reflectance counts into `[-1, 1]`: `clamp(v / 10000, 0, 1) * 2 - 1`.
pub fn normalize_image(raw: &Array3<u16>) -> Array3<f32> {
    raw.mapv(|v| ((v as f32 / 10000.0).clamp(0.0, 1.0)) * 2.0 - 1.0)
}

/// One-hot encode a target label map into a (6, H, W) mask.
pub fn one_hot(labels: &Array2<u8>) -> Result<Array3<f32>> {
    let (h, w) = labels.dim();
    let mut out = Array3::<f32>::zeros((NUM_CLASSES, h, w));
    for ((i, j), &v) in labels.indexed_iter() {
        if (v as usize) >= NUM_CLASSES {
            return Err(Error::ClassOutOfRange(v as u16));
        }
        out[[v as usize, i, j]] = 1.0;
    }
    Ok(out)
}

/// Keep/drop rule for a raw (source-legend) label map: drop iff the fraction
/// of pixels in dropped classes exceeds `threshold` (default 0: any dropped
/// pixel excludes the tile).
pub fn filter_tile(
    raw_labels: &Array2<u16>,
    taxonomy: &ClassTaxonomy,
    threshold: f64,
) -> Result<bool> {
    let mut dropped = 0usize;
    for &code in raw_labels.iter() {
        if taxonomy.remap_label(code)? == Remap::Dropped {
            dropped += 1;
        }
    }
    let fraction = dropped as f64 / raw_labels.len() as f64;
    Ok(fraction <= threshold)
}

/// Remap a source-legend label map to target ids.
///
/// Pixels of dropped classes (possible only when the filter threshold is
/// above zero) are re-labeled to the tile's modal kept class. A tile with no
/// kept pixel at all is rejected.
pub fn remap_label_map(raw_labels: &Array2<u16>, taxonomy: &ClassTaxonomy) -> Result<Array2<u8>> {
    let (h, w) = raw_labels.dim();
    let mut out = Array2::<u8>::zeros((h, w));
    let mut counts = [0u64; NUM_CLASSES];
    let mut holes = Vec::new();
    for ((i, j), &code) in raw_labels.indexed_iter() {
        match taxonomy.remap_label(code)? {
            Remap::Keep(class) => {
                out[[i, j]] = class.id() as u8;
                counts[class.id()] += 1;
            }
            Remap::Dropped => holes.push((i, j)),
        }
    }
    if !holes.is_empty() {
        let modal = counts
            .iter()
            .enumerate()
            .max_by_key(|(_, n)| **n)
            .map(|(c, n)| (c, *n))
            .unwrap();
        if modal.1 == 0 {
            return Err(Error::Manifest(
                "tile consists entirely of dropped classes".into(),
            ));
        }
        for (i, j) in holes {
            out[[i, j]] = modal.0 as u8;
        }
    }
    Ok(out)
}

/// Per-split class fractions and tile counts (the class-distribution chart
/// of the dataset, in numbers).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistributionReport {
    pub splits: BTreeMap<Split, SplitDistribution>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitDistribution {
    pub tiles: usize,
    pub pixel_counts: [u64; NUM_CLASSES],
    pub fractions: [f64; NUM_CLASSES],
}

impl DistributionReport {
    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        for (split, d) in &self.splits {
            out.push_str(&format!("[{split}]\ntiles = {}\n", d.tiles));
            out.push_str("fractions = [");
            for (c, f) in d.fractions.iter().enumerate() {
                if c > 0 {
                    out.push_str(", ");
                }
                // Debug formatting always includes a decimal point, so a
                // fraction of exactly 0 stays a TOML float, not an integer.
                out.push_str(&format!("{f:?}"));
            }
            out.push_str("]\npixel_counts = [");
            for (c, n) in d.pixel_counts.iter().enumerate() {
                if c > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("{n}"));
            }
            out.push_str("]\n\n");
        }
        out
    }
}

/// Exact pixel-fraction histogram per split, from the label tiles named in
/// the manifest.
pub fn distribution(manifest: &Manifest) -> Result<DistributionReport> {
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let recs = manifest.split_records(split);
        if recs.is_empty() {
            continue;
        }
        let mut counts = [0u64; NUM_CLASSES];
        for rec in &recs {
            let labels = tile::read_labels_u8(manifest.resolve(&rec.labels))?;
            for &v in labels.iter() {
                if (v as usize) >= NUM_CLASSES {
                    return Err(Error::ClassOutOfRange(v as u16));
                }
                counts[v as usize] += 1;
            }
        }
        let total: u64 = counts.iter().sum();
        let mut fractions = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            fractions[c] = counts[c] as f64 / total as f64;
        }
        splits.insert(
            split,
            SplitDistribution {
                tiles: recs.len(),
                pixel_counts: counts,
                fractions,
            },
        );
    }
    Ok(DistributionReport { splits })
}

/// One in-memory training sample: normalized image and target labels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub image: Array3<f32>,
    pub labels: Array2<u8>,
    pub region: String,
}

/// Load every tile of a split into memory, normalized.
pub fn load_split(manifest: &Manifest, split: Split) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    for rec in manifest.split_records(split) {
        let image = tile::read_image(manifest.resolve(&rec.image))?;
        let labels = tile::read_labels_u8(manifest.resolve(&rec.labels))?;
        if labels.dim() != (TILE_SIZE, TILE_SIZE) {
            return Err(Error::Shape(format!(
                "label tile {} is {:?}, expected {TILE_SIZE}x{TILE_SIZE}",
                rec.labels.display(),
                labels.dim()
            )));
        }
        if let Some(&v) = labels.iter().find(|v| **v as usize >= NUM_CLASSES) {
            return Err(Error::ClassOutOfRange(v as u16));
        }
        // The id is the tile stem: image file name minus the container
        // suffix, so logs and reports match across image/label pairs.
        let id = rec
            .image
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| rec.image.display().to_string())
            .trim_end_matches(".img.lct")
            .to_string();
        samples.push(Sample {
            id,
            image: normalize_image(&image),
            labels,
            region: rec.region.clone(),
        });
    }
    Ok(samples)
}

/// Class weights from the training split of a manifest.
pub fn train_class_weights(manifest: &Manifest) -> Result<crate::taxonomy::ClassWeights> {
    let mut counts = [0u64; NUM_CLASSES];
    for rec in manifest.split_records(Split::Train) {
        let labels = tile::read_labels_u8(manifest.resolve(&rec.labels))?;
        for &v in labels.iter() {
            if (v as usize) >= NUM_CLASSES {
                return Err(Error::ClassOutOfRange(v as u16));
            }
            counts[v as usize] += 1;
        }
    }
    crate::taxonomy::ClassWeights::from_counts(&counts)
}

/// Nearest-neighbor upsample of a categorical map by an integer factor.
/// Used when 30 m labels are brought onto the 10 m pixel grid.
pub fn upsample_nearest(labels: &Array2<u16>, factor: usize) -> Array2<u16> {
    let (h, w) = labels.dim();
    Array2::from_shape_fn((h * factor, w * factor), |(i, j)| {
        labels[[i / factor, j / factor]]
    })
}

/// Convert raw-legend tiles on disk into a prepared corpus: remap labels,
/// drop tiles over the dropped-pixel threshold, write target-legend tiles
/// and a manifest. Returns (kept, dropped) counts.
pub fn prepare_corpus(
    input: &Manifest,
    taxonomy: &ClassTaxonomy,
    threshold: f64,
    out_dir: &Path,
) -> Result<(usize, usize)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for (idx, rec) in input.records().iter().enumerate() {
        let raw = tile::read_labels_u16(input.resolve(&rec.labels))?;
        if !filter_tile(&raw, taxonomy, threshold)? {
            dropped += 1;
            continue;
        }
        let labels = remap_label_map(&raw, taxonomy)?;
        let image = tile::read_image(input.resolve(&rec.image))?;
        let img_name = format!("tile_{idx:05}.img.lct");
        let lbl_name = format!("tile_{idx:05}.lbl.lct");
        tile::write_u16(out_dir.join(&img_name), &image)?;
        tile::write_labels_u8(out_dir.join(&lbl_name), &labels)?;
        records.push(ManifestRecord {
            image: img_name.into(),
            labels: lbl_name.into(),
            region: rec.region.clone(),
            split: rec.split,
        });
    }
    let kept = records.len();
    let manifest = Manifest::new(out_dir, records)?;
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok((kept, dropped))
}
