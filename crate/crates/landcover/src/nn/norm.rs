//! Batch normalization over (N, H, W) per channel.

use ndarray::{Array1, Array4, Axis};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Mode;

const EPS: f64 = 1e-5;
/// Running-statistics update momentum.
const MOMENTUM: f64 = 0.1;

#[derive(Debug)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Array1<f32>,
    pub beta: Array1<f32>,
    pub grad_gamma: Array1<f32>,
    pub grad_beta: Array1<f32>,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    cache: Option<Cache>,
}

#[derive(Debug)]
struct Cache {
    xhat: Array4<f32>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(1.0f64, 0.02).unwrap();
        BatchNorm2d {
            channels,
            gamma: Array1::from_shape_simple_fn(channels, || normal.sample(rng) as f32),
            beta: Array1::zeros(channels),
            grad_gamma: Array1::zeros(channels),
            grad_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        debug_assert_eq!(c, self.channels);
        let count = (n * h * w) as f64;
        match mode {
            Mode::Eval => {
                let mut y = x.clone();
                for ci in 0..c {
                    let inv = 1.0 / (self.running_var[ci] as f64 + EPS).sqrt();
                    let (g, b, m) = (
                        self.gamma[ci] as f64,
                        self.beta[ci] as f64,
                        self.running_mean[ci] as f64,
                    );
                    y.index_axis_mut(Axis(1), ci)
                        .mapv_inplace(|v| ((v as f64 - m) * inv * g + b) as f32);
                }
                y
            }
            Mode::Train => {
                let mut y = x.clone();
                let mut xhat = x.clone();
                let mut inv_std = Array1::<f64>::zeros(c);
                for ci in 0..c {
                    let lane = x.index_axis(Axis(1), ci);
                    let mean = lane.iter().map(|v| *v as f64).sum::<f64>() / count;
                    let var = lane
                        .iter()
                        .map(|v| (*v as f64 - mean).powi(2))
                        .sum::<f64>()
                        / count;
                    let inv = 1.0 / (var + EPS).sqrt();
                    inv_std[ci] = inv;
                    let (g, b) = (self.gamma[ci] as f64, self.beta[ci] as f64);
                    xhat.index_axis_mut(Axis(1), ci)
                        .mapv_inplace(|v| ((v as f64 - mean) * inv) as f32);
                    let xh = xhat.index_axis(Axis(1), ci);
                    y.index_axis_mut(Axis(1), ci)
                        .zip_mut_with(&xh, |yv, &xv| *yv = (xv as f64 * g + b) as f32);
                    let unbiased = if count > 1.0 {
                        var * count / (count - 1.0)
                    } else {
                        var
                    };
                    self.running_mean[ci] =
                        ((1.0 - MOMENTUM) * self.running_mean[ci] as f64 + MOMENTUM * mean) as f32;
                    self.running_var[ci] =
                        ((1.0 - MOMENTUM) * self.running_var[ci] as f64 + MOMENTUM * unbiased) as f32;
                }
                self.cache = Some(Cache { xhat, inv_std });
                y
            }
        }
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let cache = self.cache.as_ref().expect("train forward before backward");
        let (n, c, h, w) = dy.dim();
        let count = (n * h * w) as f64;
        let mut dx = Array4::<f32>::zeros(dy.dim());
        for ci in 0..c {
            let dy_c = dy.index_axis(Axis(1), ci);
            let xh_c = cache.xhat.index_axis(Axis(1), ci);
            let sum_dy: f64 = dy_c.iter().map(|v| *v as f64).sum();
            let sum_dy_xhat: f64 = dy_c
                .iter()
                .zip(xh_c.iter())
                .map(|(d, x)| (*d as f64) * (*x as f64))
                .sum();
            self.grad_gamma[ci] += sum_dy_xhat as f32;
            self.grad_beta[ci] += sum_dy as f32;
            let scale = self.gamma[ci] as f64 * cache.inv_std[ci] / count;
            let mut dx_c = dx.index_axis_mut(Axis(1), ci);
            ndarray::Zip::from(&mut dx_c).and(&dy_c).and(&xh_c).for_each(
                |dxv, &dyv, &xhv| {
                    *dxv = (scale
                        * (count * dyv as f64 - sum_dy - xhv as f64 * sum_dy_xhat))
                        as f32;
                },
            );
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::random_tensor;
    use crate::rng::stream;

    #[test]
    fn train_output_is_normalized_per_channel() {
        let mut rng = stream(11, "test", 0);
        let mut bn = BatchNorm2d::new(3, &mut rng);
        bn.gamma.fill(1.0);
        bn.beta.fill(0.0);
        let x = random_tensor((4, 3, 6, 6), &mut rng);
        let y = bn.forward(&x, Mode::Train);
        for c in 0..3 {
            let lane = y.index_axis(Axis(1), c);
            let mean: f64 = lane.iter().map(|v| *v as f64).sum::<f64>() / lane.len() as f64;
            let var: f64 =
                lane.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / lane.len() as f64;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn eval_uses_running_statistics() {
        let mut rng = stream(12, "test", 0);
        let mut bn = BatchNorm2d::new(2, &mut rng);
        let x = random_tensor((4, 2, 6, 6), &mut rng);
        for _ in 0..50 {
            bn.forward(&x, Mode::Train);
        }
        let y1 = bn.forward(&x, Mode::Eval);
        let y2 = bn.forward(&x, Mode::Eval);
        assert_eq!(y1, y2);
        // after many identical batches the running stats converge to the
        // batch stats, so eval output approaches train output
        let yt = bn.forward(&x, Mode::Train);
        let max_diff = y1
            .iter()
            .zip(yt.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff < 0.05, "max diff {max_diff}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream(13, "test", 0);
        let mut bn = BatchNorm2d::new(2, &mut rng);
        let x = random_tensor((2, 2, 4, 4), &mut rng);
        let y = bn.forward(&x, Mode::Train);
        let dx = bn.backward(&y); // loss = sum(y^2)/2
        let gamma = bn.gamma.clone();
        let beta = bn.beta.clone();
        let loss = |xx: &Array4<f32>| -> f64 {
            // reference loss computed from scratch statistics
            let (n, c, h, w) = xx.dim();
            let count = (n * h * w) as f64;
            let mut total = 0.0;
            for ci in 0..c {
                let lane = xx.index_axis(Axis(1), ci);
                let mean = lane.iter().map(|v| *v as f64).sum::<f64>() / count;
                let var =
                    lane.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / count;
                let inv = 1.0 / (var + EPS).sqrt();
                for v in lane.iter() {
                    let y = (*v as f64 - mean) * inv * gamma[ci] as f64 + beta[ci] as f64;
                    total += y * y / 2.0;
                }
            }
            total
        };
        let h = 1e-3f32;
        for idx in [(0, 0, 0, 0), (1, 1, 2, 3), (0, 1, 3, 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (loss(&xp) - loss(&xm)) / (2.0 * h as f64);
            let ana = dx[idx] as f64;
            let denom = num.abs().max(ana.abs()).max(1e-2);
            assert!((num - ana).abs() / denom < 3e-2, "{num} vs {ana}");
        }
    }
}
