//! Activation layers: leaky ReLU, ReLU, sigmoid, and per-pixel channel
//! softmax.

use ndarray::{Array4, Axis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActKind {
    /// Negative slope 0.2.
    LeakyRelu,
    Relu,
    Sigmoid,
    /// Softmax over the channel axis, per pixel.
    Softmax,
}

pub const LEAKY_SLOPE: f32 = 0.2;

/// An activation with the state its backward pass needs.
#[derive(Debug)]
pub struct Act {
    pub kind: ActKind,
    cache: Option<Array4<f32>>,
}

impl Act {
    pub fn new(kind: ActKind) -> Self {
        Act { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Array4<f32>, keep_cache: bool) -> Array4<f32> {
        let y = match self.kind {
            ActKind::LeakyRelu => x.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
            ActKind::Relu => x.mapv(|v| v.max(0.0)),
            ActKind::Sigmoid => x.mapv(|v| 1.0 / (1.0 + (-v).exp())),
            ActKind::Softmax => softmax_channels(x),
        };
        if keep_cache {
            // relu variants need the input sign; sigmoid/softmax need the output
            self.cache = Some(match self.kind {
                ActKind::LeakyRelu | ActKind::Relu => x.clone(),
                ActKind::Sigmoid | ActKind::Softmax => y.clone(),
            });
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.as_ref().expect("forward(keep_cache) before backward");
        match self.kind {
            ActKind::LeakyRelu => {
                let mut dx = dy.clone();
                dx.zip_mut_with(cache, |d, &x| {
                    if x <= 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                });
                dx
            }
            ActKind::Relu => {
                let mut dx = dy.clone();
                dx.zip_mut_with(cache, |d, &x| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
                dx
            }
            ActKind::Sigmoid => {
                let mut dx = dy.clone();
                dx.zip_mut_with(cache, |d, &y| *d *= y * (1.0 - y));
                dx
            }
            ActKind::Softmax => {
                let y = cache;
                let (n, c, h, w) = y.dim();
                let mut dx = Array4::<f32>::zeros(y.dim());
                for i in 0..n {
                    for hi in 0..h {
                        for wi in 0..w {
                            let mut dot = 0.0f64;
                            for ci in 0..c {
                                dot += (y[[i, ci, hi, wi]] * dy[[i, ci, hi, wi]]) as f64;
                            }
                            for ci in 0..c {
                                dx[[i, ci, hi, wi]] = (y[[i, ci, hi, wi]] as f64
                                    * (dy[[i, ci, hi, wi]] as f64 - dot))
                                    as f32;
                            }
                        }
                    }
                }
                dx
            }
        }
    }
}

fn softmax_channels(x: &Array4<f32>) -> Array4<f32> {
    let (n, c, h, w) = x.dim();
    let mut y = Array4::<f32>::zeros(x.dim());
    for i in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let mut max = f32::NEG_INFINITY;
                for ci in 0..c {
                    max = max.max(x[[i, ci, hi, wi]]);
                }
                let mut sum = 0.0f64;
                for ci in 0..c {
                    let e = ((x[[i, ci, hi, wi]] - max) as f64).exp();
                    y[[i, ci, hi, wi]] = e as f32;
                    sum += e;
                }
                let inv = 1.0 / sum;
                for ci in 0..c {
                    y[[i, ci, hi, wi]] = (y[[i, ci, hi, wi]] as f64 * inv) as f32;
                }
            }
        }
    }
    y
}

/// Max per-pixel deviation of channel sums from 1; diagnostics and tests.
pub fn simplex_deviation(y: &Array4<f32>) -> f32 {
    let (n, _, h, w) = y.dim();
    let mut worst = 0.0f32;
    for i in 0..n {
        for hi in 0..h {
            for wi in 0..w {
                let s: f32 = y.index_axis(Axis(0), i).index_axis(Axis(1), hi)
                    .index_axis(Axis(1), wi)
                    .sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
    }
    worst
}
