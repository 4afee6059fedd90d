//! Evaluation: argmax decoding, confusion matrices, per-class F1 (reported
//! as percentages), macro averages over the classes actually present, and
//! color-mapped rendering of label maps.
//!
//! ```
//! use landcover::metrics::{f1_scores, Confusion};
//! use ndarray::Array2;
//!
//! let truth = Array2::from_shape_vec((1, 6), vec![0u8, 0, 1, 1, 1, 1]).unwrap();
//! let pred = Array2::from_shape_vec((1, 6), vec![0u8, 0, 0, 0, 1, 1]).unwrap();
//! let mut c = Confusion::new();
//! c.accumulate(truth.view(), pred.view()).unwrap();
//! let f1 = f1_scores(&c);
//! // class 0: recall 1.0, precision 0.5 => F1 = 66.67%
//! assert!((f1[0].percent - 66.6667).abs() < 1e-3);
//! ```

use std::path::Path;

use image::RgbImage;
use ndarray::{Array2, Array3, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Class, ColorMap, NUM_CLASSES};

/// Decode per-pixel class probabilities to hard labels by channel argmax.
/// Ties break toward the lower class id.
pub fn decode(pred: &Array4<f32>) -> Result<Array3<u8>> {
    let (n, c, h, w) = pred.dim();
    if c != NUM_CLASSES {
        return Err(Error::Metrics(format!(
            "expected {NUM_CLASSES} class channels, got {c}"
        )));
    }
    let mut out = Array3::<u8>::zeros((n, h, w));
    for i in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let mut best = 0usize;
                let mut best_v = pred[[i, 0, hi, wi]];
                for ci in 1..NUM_CLASSES {
                    let v = pred[[i, ci, hi, wi]];
                    if v > best_v {
                        best = ci;
                        best_v = v;
                    }
                }
                out[[i, hi, wi]] = best as u8;
            }
        }
    }
    Ok(out)
}

/// Row-major confusion counts: `counts[truth][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl Default for Confusion {
    fn default() -> Self {
        Confusion {
            counts: [[0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl Confusion {
    pub fn new() -> Self {
        Confusion::default()
    }

    /// Accumulate one truth/prediction pair of label maps.
    pub fn accumulate(&mut self, truth: ArrayView2<u8>, pred: ArrayView2<u8>) -> Result<()> {
        if truth.dim() != pred.dim() {
            return Err(Error::Metrics(format!(
                "label map shapes differ: {:?} vs {:?}",
                truth.dim(),
                pred.dim()
            )));
        }
        for (&t, &p) in truth.iter().zip(pred.iter()) {
            if t as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
                return Err(Error::Metrics(format!(
                    "label out of range: truth {t}, predicted {p}"
                )));
            }
            self.counts[t as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Pixels of each true class.
    pub fn support(&self, class: Class) -> u64 {
        self.counts[class.id()].iter().sum()
    }

    pub fn true_positives(&self, class: Class) -> u64 {
        self.counts[class.id()][class.id()]
    }

    pub fn predicted(&self, class: Class) -> u64 {
        self.counts.iter().map(|row| row[class.id()]).sum()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = Class::ALL.iter().map(|&c| self.true_positives(c)).sum();
        correct as f64 / total as f64
    }
}

/// One class's F1 outcome, as a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub percent: f64,
    /// True class never occurs in the ground truth.
    pub absent: bool,
    /// Precision denominator was zero (class never predicted).
    pub never_predicted: bool,
}

/// Per-class F1 from a confusion matrix. A class with zero support is
/// marked `absent` and scored 0; a present class that is never predicted
/// scores 0 with `never_predicted` set.
pub fn f1_scores(confusion: &Confusion) -> [F1Score; NUM_CLASSES] {
    let mut out = [F1Score {
        percent: 0.0,
        absent: false,
        never_predicted: false,
    }; NUM_CLASSES];
    for class in Class::ALL {
        let tp = confusion.true_positives(class) as f64;
        let support = confusion.support(class);
        let predicted = confusion.predicted(class);
        let slot = &mut out[class.id()];
        slot.absent = support == 0;
        slot.never_predicted = predicted == 0;
        // F1 = 2 tp / (support + predicted), the harmonic mean of
        // precision and recall without separate divisions
        let denom = (support + predicted) as f64;
        if denom > 0.0 {
            slot.percent = 100.0 * 2.0 * tp / denom;
        }
    }
    out
}

/// The full evaluation summary for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub split: String,
    pub tiles: usize,
    pub per_class_f1: [F1Score; NUM_CLASSES],
    /// Mean F1 over classes present in the ground truth.
    pub macro_f1: f64,
    pub overall_accuracy: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn new(model: &str, split: &str, tiles: usize, confusion: Confusion) -> MetricsReport {
        let per_class_f1 = f1_scores(&confusion);
        let present: Vec<f64> = per_class_f1
            .iter()
            .filter(|s| !s.absent)
            .map(|s| s.percent)
            .collect();
        let macro_f1 = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        MetricsReport {
            model: model.to_string(),
            split: split.to_string(),
            tiles,
            macro_f1,
            overall_accuracy: confusion.overall_accuracy(),
            per_class_f1,
            confusion,
        }
    }

    /// TOML report with a human-readable per-class table in the header.
    pub fn to_toml(&self) -> Result<String> {
        let mut table = String::from("# class               f1\n");
        for class in Class::ALL {
            let s = self.per_class_f1[class.id()];
            let note = if s.absent {
                "  (absent)"
            } else if s.never_predicted {
                "  (never predicted)"
            } else {
                ""
            };
            table.push_str(&format!("# {:<18} {:6.2}{note}\n", class.name(), s.percent));
        }
        table.push_str(&format!("# macro f1           {:6.2}\n", self.macro_f1));
        let body = toml::to_string_pretty(self)
            .map_err(|e| Error::Metrics(format!("report serialization failed: {e}")))?;
        Ok(format!("{table}\n{body}"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }
}

/// Render a label map to an RGB image through the colormap.
pub fn render_labels(labels: ArrayView2<u8>, colors: &ColorMap) -> Result<RgbImage> {
    let (h, w) = labels.dim();
    let mut img = RgbImage::new(w as u32, h as u32);
    for hi in 0..h {
        for wi in 0..w {
            let class = Class::from_id(labels[[hi, wi]] as u16)?;
            img.put_pixel(wi as u32, hi as u32, image::Rgb(colors.color(class)));
        }
    }
    Ok(img)
}

/// Invert [`render_labels`]; errors on colors outside the map.
pub fn labels_from_render(img: &RgbImage, colors: &ColorMap) -> Result<Array2<u8>> {
    let (w, h) = img.dimensions();
    let mut out = Array2::<u8>::zeros((h as usize, w as usize));
    for hi in 0..h {
        for wi in 0..w {
            let p = img.get_pixel(wi, hi).0;
            let class = colors
                .class_of(p)
                .ok_or_else(|| Error::Metrics(format!("unmapped render color {p:?}")))?;
            out[[hi as usize, wi as usize]] = class.id() as u8;
        }
    }
    Ok(out)
}

/// Lay out panels side by side with a thin white separator.
pub fn composite(panels: &[RgbImage]) -> Result<RgbImage> {
    const GAP: u32 = 2;
    let first = panels
        .first()
        .ok_or_else(|| Error::Metrics("composite of zero panels".into()))?;
    let (w, h) = first.dimensions();
    if panels.iter().any(|p| p.dimensions() != (w, h)) {
        return Err(Error::Metrics("composite panels differ in size".into()));
    }
    let total_w = w * panels.len() as u32 + GAP * (panels.len() as u32 - 1);
    let mut sheet = RgbImage::from_pixel(total_w, h, image::Rgb([255, 255, 255]));
    for (i, panel) in panels.iter().enumerate() {
        let x0 = i as u32 * (w + GAP);
        for y in 0..h {
            for x in 0..w {
                sheet.put_pixel(x0 + x, y, *panel.get_pixel(x, y));
            }
        }
    }
    Ok(sheet)
}

/// Grayscale render of one image band in [-1, 1] for composites.
pub fn render_band(band: ArrayView2<f32>) -> RgbImage {
    let (h, w) = band.dim();
    let mut img = RgbImage::new(w as u32, h as u32);
    for hi in 0..h {
        for wi in 0..w {
            let v = ((band[[hi, wi]].clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
            img.put_pixel(wi as u32, hi as u32, image::Rgb([v, v, v]));
        }
    }
    img
}
