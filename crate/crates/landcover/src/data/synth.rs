//! Procedural desk-scale corpora.
//!
//! Each tile is a Voronoi partition of the 256x256 grid: seed points get
//! classes from a cycling assignment (so every tile with two or more seeds
//! mixes classes, and all six classes appear once enough seeds exist), and
//! image channels are drawn from per-class Gaussian radiometric signatures.
//! Everything is a pure function of the corpus seed.

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::manifest::{Manifest, ManifestRecord, Split};
use crate::data::{tile, Tile};
use crate::error::{Error, Result};
use crate::rng;
use crate::taxonomy::{Class, ClassTaxonomy, NUM_CLASSES};

/// Per-class mean reflectance counts for (Red, Green, Blue, NIR).
/// Pairwise well separated relative to the default noise sigma, so class is
/// inferable from radiometry alone.
pub const DEFAULT_CLASS_MEANS: [[f64; 4]; NUM_CLASSES] = [
    [400.0, 700.0, 1800.0, 250.0],   // open water: blue, NIR-dark
    [2600.0, 2400.0, 2200.0, 2100.0], // developed: bright gray
    [500.0, 1700.0, 700.0, 3800.0],  // forest
    [900.0, 2600.0, 1100.0, 4600.0], // grass
    [1300.0, 2100.0, 1500.0, 3000.0], // pasture
    [2000.0, 1500.0, 900.0, 5200.0], // cultivated
];

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_tiles: usize,
    /// Voronoi seed points per tile.
    pub seeds_per_tile: usize,
    /// Gaussian noise sigma around the class means, in reflectance counts.
    pub noise_sigma: f64,
    pub class_means: [[f64; 4]; NUM_CLASSES],
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_tiles: 8,
            seeds_per_tile: 5,
            noise_sigma: 120.0,
            class_means: DEFAULT_CLASS_MEANS,
        }
    }
}

impl SynthParams {
    fn validate(&self) -> Result<()> {
        if self.n_tiles == 0 {
            return Err(Error::Synth("n_tiles must be at least 1".into()));
        }
        if self.seeds_per_tile == 0 {
            return Err(Error::Synth("seeds_per_tile must be at least 1".into()));
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::Synth("noise_sigma must be non-negative".into()));
        }
        for a in 0..NUM_CLASSES {
            for b in (a + 1)..NUM_CLASSES {
                if self.class_means[a] == self.class_means[b] {
                    return Err(Error::Synth(format!(
                        "class means for classes {a} and {b} coincide"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Split assignment: last tile is the test tile (its own region),
    /// second-to-last is validation, the rest train. Corpora with fewer
    /// than 3 tiles are all train.
    pub fn split_of(&self, index: usize) -> (Split, &'static str) {
        if self.n_tiles >= 3 {
            if index == self.n_tiles - 1 {
                return (Split::Test, "synth-b");
            }
            if index == self.n_tiles - 2 {
                return (Split::Validation, "synth-a");
            }
        }
        (Split::Train, "synth-a")
    }
}

fn synth_labels(params: &SynthParams, seed: u64, index: usize) -> Array2<u8> {
    let s = tile::TILE_SIZE;
    let mut rng = rng::stream(seed, "synth-tile", index as u64);
    let k = params.seeds_per_tile;
    let mut points = Vec::with_capacity(k);
    for j in 0..k {
        let y: usize = rng.gen_range(0..s);
        let x: usize = rng.gen_range(0..s);
        // cycling class assignment: consecutive seeds always differ, and all
        // six classes appear once the corpus has at least six seed points
        let class = ((index * k + j) % NUM_CLASSES) as u8;
        points.push((y as i64, x as i64, class));
    }
    Array2::from_shape_fn((s, s), |(i, j)| {
        let mut best = 0usize;
        let mut best_d = i64::MAX;
        for (p, &(py, px, _)) in points.iter().enumerate() {
            let dy = py - i as i64;
            let dx = px - j as i64;
            let d = dy * dy + dx * dx;
            if d < best_d {
                best_d = d;
                best = p;
            }
        }
        points[best].2
    })
}

fn synth_image(params: &SynthParams, labels: &Array2<u8>, seed: u64, index: usize) -> Array3<u16> {
    let s = tile::TILE_SIZE;
    let mut rng = rng::stream(seed, "synth-image", index as u64);
    let noise = Normal::new(0.0, params.noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let mut image = Array3::<u16>::zeros((tile::IMAGE_CHANNELS, s, s));
    for i in 0..s {
        for j in 0..s {
            let class = labels[[i, j]] as usize;
            for ch in 0..tile::IMAGE_CHANNELS {
                let v = params.class_means[class][ch] + noise.sample(&mut rng);
                image[[ch, i, j]] = v.clamp(0.0, 10000.0).round() as u16;
            }
        }
    }
    image
}

/// Generate an in-memory corpus; deterministic given the seed.
pub fn synth_corpus(params: &SynthParams, seed: u64) -> Result<Vec<Tile>> {
    params.validate()?;
    let mut tiles = Vec::with_capacity(params.n_tiles);
    for index in 0..params.n_tiles {
        let labels = synth_labels(params, seed, index);
        let image = synth_image(params, &labels, seed, index);
        let (split, region) = params.split_of(index);
        tiles.push(Tile::new(image, labels, region.to_string(), split)?);
    }
    Ok(tiles)
}

/// Write a corpus to disk with its manifest. With `source_legend` set, label
/// tiles carry the taxonomy's representative source codes (u16) instead of
/// target ids, and the first `contaminate_tiles` train tiles get a 32x32
/// patch of the first dropped source code, for exercising the prepare step.
pub fn write_synth_corpus(
    params: &SynthParams,
    seed: u64,
    out_dir: &Path,
    source_legend: Option<&ClassTaxonomy>,
    contaminate_tiles: usize,
) -> Result<Manifest> {
    let tiles = synth_corpus(params, seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::with_capacity(tiles.len());
    let mut contaminated = 0usize;
    for (index, t) in tiles.iter().enumerate() {
        let img_name = format!("synth_{index:05}.img.lct");
        let lbl_name = format!("synth_{index:05}.lbl.lct");
        tile::write_u16(out_dir.join(&img_name), &t.image)?;
        match source_legend {
            None => tile::write_labels_u8(out_dir.join(&lbl_name), &t.labels)?,
            Some(tax) => {
                let mut raw = Array2::<u16>::zeros(t.labels.dim());
                for ((i, j), &v) in t.labels.indexed_iter() {
                    raw[[i, j]] = tax.representative_code(Class::ALL[v as usize]);
                }
                if t.split == Split::Train && contaminated < contaminate_tiles {
                    let dropped = *tax
                        .dropped_classes()
                        .first()
                        .ok_or_else(|| Error::Synth("taxonomy has no dropped class".into()))?;
                    let patch = 32;
                    for i in 0..patch {
                        for j in 0..patch {
                            raw[[i, j]] = dropped;
                        }
                    }
                    contaminated += 1;
                }
                tile::write_labels_u16(out_dir.join(&lbl_name), &raw)?;
            }
        }
        records.push(ManifestRecord {
            image: img_name.into(),
            labels: lbl_name.into(),
            region: t.region.clone(),
            split: t.split,
        });
    }
    let manifest = Manifest::new(out_dir, records)?;
    manifest.save(out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
