//! Six-class land-cover schema: the many-to-one remapping from a source
//! legend (NLCD codes by default), per-class pixel-fraction weights, and the
//! rendering colormap.
//!
//! The target schema is fixed: six classes in the canonical report order
//! Open Water, Developed, Forest, Grass, Pasture, Cultivated. Everything
//! else (source legend, which codes merge where, which codes are dropped,
//! colors) comes from a taxonomy config file; [`ClassTaxonomy::default`]
//! ships the NLCD 2016 mapping.
//!
//! ```
//! use landcover::taxonomy::{Class, ClassTaxonomy, Remap};
//!
//! let tax = ClassTaxonomy::default();
//! // all four developed-intensity codes merge into one class
//! for code in [21, 22, 23, 24] {
//!     assert_eq!(tax.remap_label(code).unwrap(), Remap::Keep(Class::Developed));
//! }
//! // barren (31) and the wetlands (90, 95) are dropped
//! assert_eq!(tax.remap_label(31).unwrap(), Remap::Dropped);
//! // unknown codes are an error, not a silent drop
//! assert!(tax.remap_label(999).is_err());
//! ```
//!
//! Class weights are the training-pixel fractions used to scale losses by
//! their inverses:
//!
//! ```
//! use landcover::taxonomy::{Class, ClassWeights};
//!
//! let w = ClassWeights::from_counts(&[4000, 2000, 1000, 1000, 1000, 1000]).unwrap();
//! assert_eq!(w.fraction(Class::OpenWater), 0.4);
//! assert_eq!(w.inverse(Class::Forest), 10.0);
//! assert!(ClassWeights::from_counts(&[1, 1, 1, 1, 1, 0]).is_err());
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of target land-cover classes.
pub const NUM_CLASSES: usize = 6;

/// One of the six target land-cover classes, in canonical report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Class {
    OpenWater = 0,
    Developed = 1,
    Forest = 2,
    Grass = 3,
    Pasture = 4,
    Cultivated = 5,
}

impl Class {
    pub const ALL: [Class; NUM_CLASSES] = [
        Class::OpenWater,
        Class::Developed,
        Class::Forest,
        Class::Grass,
        Class::Pasture,
        Class::Cultivated,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: impl Into<u16>) -> Result<Class> {
        let id = id.into();
        Class::ALL
            .get(id as usize)
            .copied()
            .ok_or(Error::ClassOutOfRange(id))
    }

    pub fn name(self) -> &'static str {
        match self {
            Class::OpenWater => "Open Water",
            Class::Developed => "Developed",
            Class::Forest => "Forest",
            Class::Grass => "Grass",
            Class::Pasture => "Pasture",
            Class::Cultivated => "Cultivated",
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of remapping one source-legend code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Remap {
    Keep(Class),
    Dropped,
}

// In config files a remap outcome is either "dropped" or a class name.
impl Serialize for Remap {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Remap::Dropped => s.serialize_str("dropped"),
            Remap::Keep(class) => class.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Remap {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        if name == "dropped" {
            return Ok(Remap::Dropped);
        }
        serde_json::from_value::<Class>(serde_json::Value::String(name.clone()))
            .map(Remap::Keep)
            .map_err(|_| serde::de::Error::custom(format!("unknown remap outcome {name:?}")))
    }
}

/// Per-class RGB render colors; bijective over the six classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorMap {
    rgb: [[u8; 3]; NUM_CLASSES],
}

impl ColorMap {
    pub fn new(rgb: [[u8; 3]; NUM_CLASSES]) -> Result<ColorMap> {
        for i in 0..NUM_CLASSES {
            for j in (i + 1)..NUM_CLASSES {
                if rgb[i] == rgb[j] {
                    return Err(Error::Taxonomy(format!(
                        "colormap not bijective: classes {} and {} share color {:?}",
                        Class::ALL[i],
                        Class::ALL[j],
                        rgb[i]
                    )));
                }
            }
        }
        Ok(ColorMap { rgb })
    }

    pub fn color(&self, class: Class) -> [u8; 3] {
        self.rgb[class.id()]
    }

    /// Inverse lookup; `None` for colors outside the map.
    pub fn class_of(&self, rgb: [u8; 3]) -> Option<Class> {
        self.rgb
            .iter()
            .position(|c| *c == rgb)
            .map(|i| Class::ALL[i])
    }
}

impl Default for ColorMap {
    fn default() -> Self {
        // Color names come from the figure captions; exact RGB values are ours.
        ColorMap {
            rgb: [
                [0, 0, 139],     // open water: dark blue
                [255, 0, 0],     // developed: red
                [0, 100, 0],     // forest: dark green
                [144, 238, 144], // grass: light green
                [0, 255, 255],   // pasture: cyan
                [139, 69, 19],   // cultivated: brown
            ],
        }
    }
}

/// The source-legend remap table, dropped set, and colormap.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTaxonomy {
    remap: BTreeMap<u16, Remap>,
    colors: ColorMap,
}

#[derive(Debug, Serialize, Deserialize)]
struct TaxonomyFile {
    remap: BTreeMap<String, Remap>,
    #[serde(default)]
    colors: Option<BTreeMap<String, [u8; 3]>>,
}

impl ClassTaxonomy {
    pub fn new(remap: BTreeMap<u16, Remap>, colors: ColorMap) -> Result<ClassTaxonomy> {
        if remap.is_empty() {
            return Err(Error::Taxonomy("empty source legend".into()));
        }
        let tax = ClassTaxonomy { remap, colors };
        for class in Class::ALL {
            if !tax.remap.values().any(|r| *r == Remap::Keep(class)) {
                return Err(Error::Taxonomy(format!(
                    "no source code maps to target class {class}"
                )));
            }
        }
        Ok(tax)
    }

    /// Parse a taxonomy config (TOML).
    pub fn from_toml(text: &str) -> Result<ClassTaxonomy> {
        let file: TaxonomyFile =
            toml::from_str(text).map_err(|e| Error::Taxonomy(e.to_string()))?;
        let mut remap = BTreeMap::new();
        for (code, outcome) in file.remap {
            let code: u16 = code
                .parse()
                .map_err(|_| Error::Taxonomy(format!("source code {code:?} is not an integer")))?;
            remap.insert(code, outcome);
        }
        let colors = match file.colors {
            None => ColorMap::default(),
            Some(map) => {
                let mut rgb = [[0u8; 3]; NUM_CLASSES];
                for (name, triple) in &map {
                    let class: Class = serde_json::from_value(serde_json::Value::String(
                        name.clone(),
                    ))
                    .map_err(|_| Error::Taxonomy(format!("unknown class name {name:?}")))?;
                    rgb[class.id()] = *triple;
                }
                if map.len() != NUM_CLASSES {
                    return Err(Error::Taxonomy(format!(
                        "colormap must list all {NUM_CLASSES} classes, got {}",
                        map.len()
                    )));
                }
                ColorMap::new(rgb)?
            }
        };
        ClassTaxonomy::new(remap, colors)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<ClassTaxonomy> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ClassTaxonomy::from_toml(&text)
    }

    /// Remap one source-legend code. Unknown codes are rejected, never passed.
    pub fn remap_label(&self, code: u16) -> Result<Remap> {
        self.remap
            .get(&code)
            .copied()
            .ok_or(Error::UnknownSourceCode(code))
    }

    /// Source codes excluded from the dataset.
    pub fn dropped_classes(&self) -> Vec<u16> {
        self.remap
            .iter()
            .filter(|(_, r)| **r == Remap::Dropped)
            .map(|(c, _)| *c)
            .collect()
    }

    /// A representative source code for each target class (lowest code that
    /// maps to it). Used when emitting source-legend label tiles.
    pub fn representative_code(&self, class: Class) -> u16 {
        self.remap
            .iter()
            .find(|(_, r)| **r == Remap::Keep(class))
            .map(|(c, _)| *c)
            .expect("constructor guarantees every class has a source code")
    }

    pub fn colors(&self) -> &ColorMap {
        &self.colors
    }

    pub fn class_color(&self, class: Class) -> [u8; 3] {
        self.colors.color(class)
    }
}

impl Default for ClassTaxonomy {
    /// NLCD 2016 legend with the class merges and drops applied.
    fn default() -> Self {
        ClassTaxonomy::from_toml(include_str!("../configs/taxonomy.toml"))
            .expect("shipped taxonomy config is valid")
    }
}

/// Per-class pixel fractions of the training split; losses weight by `1/w_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    w: [f64; NUM_CLASSES],
}

impl ClassWeights {
    /// Weights must be positive and sum to 1 within 1e-9.
    pub fn new(w: [f64; NUM_CLASSES]) -> Result<ClassWeights> {
        for (c, &wc) in w.iter().enumerate() {
            if wc.is_nan() || wc <= 0.0 {
                return Err(Error::DegenerateWeights {
                    class: c,
                    name: Class::ALL[c].name().to_string(),
                });
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Taxonomy(format!(
                "class weights sum to {sum}, expected 1 within 1e-9"
            )));
        }
        Ok(ClassWeights { w })
    }

    /// Pixel fractions over a corpus of remapped label maps.
    ///
    /// Errors if any class has zero pixels (its inverse weight would be
    /// undefined) or a label is out of range.
    pub fn compute<'a, I>(labels: I) -> Result<ClassWeights>
    where
        I: IntoIterator<Item = ArrayView2<'a, u8>>,
    {
        let mut counts = [0u64; NUM_CLASSES];
        for map in labels {
            for &v in map.iter() {
                if (v as usize) >= NUM_CLASSES {
                    return Err(Error::ClassOutOfRange(v as u16));
                }
                counts[v as usize] += 1;
            }
        }
        ClassWeights::from_counts(&counts)
    }

    pub fn from_counts(counts: &[u64; NUM_CLASSES]) -> Result<ClassWeights> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Taxonomy("empty corpus: no pixels".into()));
        }
        for (c, &n) in counts.iter().enumerate() {
            if n == 0 {
                return Err(Error::DegenerateWeights {
                    class: c,
                    name: Class::ALL[c].name().to_string(),
                });
            }
        }
        let mut w = [0.0; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            w[c] = counts[c] as f64 / total as f64;
        }
        Ok(ClassWeights { w })
    }

    pub fn fractions(&self) -> &[f64; NUM_CLASSES] {
        &self.w
    }

    pub fn fraction(&self, class: Class) -> f64 {
        self.w[class.id()]
    }

    /// `1/w_c`, finite by construction.
    pub fn inverse(&self, class: Class) -> f64 {
        1.0 / self.w[class.id()]
    }

    pub fn inverse_sum(&self) -> f64 {
        self.w.iter().map(|w| 1.0 / w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn default_remap_matches_the_merge_rules() {
        let tax = ClassTaxonomy::default();
        // deciduous forest, evergreen, mixed, shrub all merge into Forest
        for code in [41u16, 42, 43, 52] {
            assert_eq!(tax.remap_label(code).unwrap(), Remap::Keep(Class::Forest));
        }
        // all four developed intensities collapse
        for code in [21u16, 22, 23, 24] {
            assert_eq!(
                tax.remap_label(code).unwrap(),
                Remap::Keep(Class::Developed)
            );
        }
        assert_eq!(tax.remap_label(11).unwrap(), Remap::Keep(Class::OpenWater));
        assert_eq!(tax.remap_label(71).unwrap(), Remap::Keep(Class::Grass));
        assert_eq!(tax.remap_label(81).unwrap(), Remap::Keep(Class::Pasture));
        assert_eq!(tax.remap_label(82).unwrap(), Remap::Keep(Class::Cultivated));
        // barren land and both wetland codes are dropped
        for code in [31u16, 90, 95] {
            assert_eq!(tax.remap_label(code).unwrap(), Remap::Dropped);
        }
    }

    #[test]
    fn unknown_code_is_rejected_by_name() {
        let tax = ClassTaxonomy::default();
        match tax.remap_label(12) {
            Err(Error::UnknownSourceCode(12)) => {}
            other => panic!("expected UnknownSourceCode(12), got {other:?}"),
        }
    }

    #[test]
    fn colormap_is_bijective_and_matches_the_caption_families() {
        let tax = ClassTaxonomy::default();
        let mut seen = std::collections::HashSet::new();
        for class in Class::ALL {
            assert!(seen.insert(tax.class_color(class)));
        }
        // developed is in the red family, cultivated in the brown family
        let dev = tax.class_color(Class::Developed);
        assert!(dev[0] > 150 && dev[0] > dev[1] && dev[0] > dev[2]);
        let cult = tax.class_color(Class::Cultivated);
        assert!(cult[0] > cult[2] && cult[1] > cult[2] && cult[0] < 200);
        // inverse lookup round-trips
        for class in Class::ALL {
            assert_eq!(tax.colors().class_of(tax.class_color(class)), Some(class));
        }
    }

    #[test]
    fn class_id_out_of_range() {
        assert!(Class::from_id(6u16).is_err());
        assert_eq!(Class::from_id(5u16).unwrap(), Class::Cultivated);
    }

    #[test]
    fn equal_counts_give_uniform_weights() {
        let map = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as u8);
        let w = ClassWeights::compute([map.view()]).unwrap();
        for c in Class::ALL {
            assert!((w.fraction(c) - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_class_is_a_degenerate_weights_error() {
        // 6 forest pixels and 2 open-water pixels across two 2x2 tiles
        let a = Array2::from_elem((2, 2), Class::Forest.id() as u8);
        let mut b = Array2::from_elem((2, 2), Class::Forest.id() as u8);
        b[[0, 0]] = 0;
        b[[0, 1]] = 0;
        match ClassWeights::compute([a.view(), b.view()]) {
            Err(Error::DegenerateWeights { class: 1, .. }) => {}
            other => panic!("expected degenerate weights for Developed, got {other:?}"),
        }
    }

    #[test]
    fn hand_counted_fractions() {
        // 8 pixels with class counts (2,1,1,1,1,2)
        let map = Array2::from_shape_vec((2, 4), vec![0u8, 0, 1, 2, 3, 4, 5, 5]).unwrap();
        let w = ClassWeights::compute([map.view()]).unwrap();
        assert_eq!(
            w.fractions(),
            &[0.25, 0.125, 0.125, 0.125, 0.125, 0.25]
        );
    }

    #[test]
    fn weights_reject_zero_and_bad_sum() {
        assert!(ClassWeights::new([0.0, 0.2, 0.2, 0.2, 0.2, 0.2]).is_err());
        assert!(ClassWeights::new([0.3, 0.2, 0.2, 0.2, 0.2, 0.2]).is_err());
        let w = ClassWeights::new([0.25, 0.125, 0.125, 0.125, 0.125, 0.25]).unwrap();
        assert!((w.inverse(Class::OpenWater) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn taxonomy_requires_every_target_class() {
        let mut remap = BTreeMap::new();
        remap.insert(11u16, Remap::Keep(Class::OpenWater));
        assert!(ClassTaxonomy::new(remap, ColorMap::default()).is_err());
    }
}
