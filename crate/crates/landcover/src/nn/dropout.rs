//! Inverted dropout, p = 0.5.

use ndarray::Array4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const DROP_P: f64 = 0.5;

#[derive(Debug, Default)]
pub struct Dropout {
    mask: Option<Array4<f32>>,
}

impl Dropout {
    pub fn new() -> Self {
        Dropout::default()
    }

    /// Train-mode forward; draws a fresh mask from `rng`.
    pub fn forward_train(&mut self, x: &Array4<f32>, rng: &mut ChaCha8Rng) -> Array4<f32> {
        let scale = 1.0 / (1.0 - DROP_P);
        let mask = Array4::from_shape_simple_fn(x.dim(), || {
            if rng.gen::<f64>() < DROP_P {
                0.0
            } else {
                scale as f32
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let mask = self.mask.as_ref().expect("forward_train before backward");
        dy * mask
    }
}
