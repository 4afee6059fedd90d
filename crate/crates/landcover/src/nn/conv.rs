//! 4x4 stride-2 convolution and transposed convolution.
//!
//! Both directions are built from the same two primitives: `im2col`
//! unfolds input patches into a matrix so the convolution becomes one
//! GEMM, and `col2im` is its adjoint. A transposed convolution is the
//! data-gradient of the corresponding forward convolution, so it reuses
//! the same primitives with the roles of input and output swapped.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;

/// Output edge for one conv along a dimension: (h + 2p - k) / s + 1.
pub fn conv_out(h: usize) -> usize {
    (h + 2 * PADDING - KERNEL) / STRIDE + 1
}

/// Output edge for one transposed conv: (h - 1) * s - 2p + k.
pub fn convt_out(h: usize) -> usize {
    (h - 1) * STRIDE + KERNEL - 2 * PADDING
}

/// Unfold (C, H, W) into (C*K*K, OH*OW) patch columns.
fn im2col(x: &ArrayView3<f32>) -> Array2<f32> {
    let (c, h, w) = x.dim();
    let (oh, ow) = (conv_out(h), conv_out(w));
    let mut cols = Array2::<f32>::zeros((c * KERNEL * KERNEL, oh * ow));
    for ci in 0..c {
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = (ci * KERNEL + kh) * KERNEL + kw;
                let mut row_view = cols.row_mut(row);
                for oi in 0..oh {
                    let ih = (oi * STRIDE + kh) as isize - PADDING as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let iw = (oj * STRIDE + kw) as isize - PADDING as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        row_view[oi * ow + oj] = x[[ci, ih as usize, iw as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatter-add patch columns back into (C, H, W).
fn col2im(cols: &Array2<f32>, c: usize, h: usize, w: usize) -> Array3<f32> {
    let (oh, ow) = (conv_out(h), conv_out(w));
    debug_assert_eq!(cols.dim(), (c * KERNEL * KERNEL, oh * ow));
    let mut x = Array3::<f32>::zeros((c, h, w));
    for ci in 0..c {
        for kh in 0..KERNEL {
            for kw in 0..KERNEL {
                let row = (ci * KERNEL + kh) * KERNEL + kw;
                let row_view = cols.row(row);
                for oi in 0..oh {
                    let ih = (oi * STRIDE + kh) as isize - PADDING as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let iw = (oj * STRIDE + kw) as isize - PADDING as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        x[[ci, ih as usize, iw as usize]] += row_view[oi * ow + oj];
                    }
                }
            }
        }
    }
    x
}

fn init_kernel(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f32> {
    let normal = Normal::new(0.0f64, 0.02).unwrap();
    Array4::from_shape_simple_fn(shape, || normal.sample(rng) as f32)
}

/// Downsampling convolution, halves the spatial dims.
#[derive(Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Array4<f32>, // (out, in, K, K)
    pub bias: Option<Array1<f32>>,
    pub grad_weight: Array4<f32>,
    pub grad_bias: Option<Array1<f32>>,
    cache: Option<Array4<f32>>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let shape = (out_channels, in_channels, KERNEL, KERNEL);
        Conv2d {
            in_channels,
            out_channels,
            weight: init_kernel(shape, rng),
            bias: bias.then(|| Array1::zeros(out_channels)),
            grad_weight: Array4::zeros(shape),
            grad_bias: bias.then(|| Array1::zeros(out_channels)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, keep_cache: bool) -> Result<Array4<f32>> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (oh, ow) = (conv_out(h), conv_out(w));
        let ck2 = self.in_channels * KERNEL * KERNEL;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.out_channels, ck2))
            .expect("contiguous weight");
        let mut y = Array4::<f32>::zeros((n, self.out_channels, oh, ow));
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i));
            let y2 = w2.dot(&cols); // (out, oh*ow)
            let mut yi = y.index_axis_mut(Axis(0), i);
            for co in 0..self.out_channels {
                let b = self.bias.as_ref().map_or(0.0, |b| b[co]);
                let src = y2.row(co);
                let mut dst = yi.index_axis_mut(Axis(0), co);
                for oi in 0..oh {
                    for oj in 0..ow {
                        dst[[oi, oj]] = src[oi * ow + oj] + b;
                    }
                }
            }
        }
        self.cache = keep_cache.then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let x = self.cache.as_ref().expect("forward(keep_cache) before backward");
        let (n, _, h, w) = x.dim();
        let (oh, ow) = (conv_out(h), conv_out(w));
        let ck2 = self.in_channels * KERNEL * KERNEL;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.out_channels, ck2))
            .expect("contiguous weight");
        let mut dx = Array4::<f32>::zeros(x.dim());
        let mut gw2 = Array2::<f32>::zeros((self.out_channels, ck2));
        for i in 0..n {
            let dyi = dy.index_axis(Axis(0), i);
            let dy2 = dyi
                .into_shape_with_order((self.out_channels, oh * ow))
                .expect("contiguous grad");
            let cols = im2col(&x.index_axis(Axis(0), i));
            gw2 += &dy2.dot(&cols.t());
            let dcols = w2.t().dot(&dy2);
            dx.index_axis_mut(Axis(0), i)
                .assign(&col2im(&dcols, self.in_channels, h, w));
            if let Some(gb) = self.grad_bias.as_mut() {
                for co in 0..self.out_channels {
                    gb[co] += dy2.row(co).sum();
                }
            }
        }
        self.grad_weight += &gw2
            .into_shape_with_order((self.out_channels, self.in_channels, KERNEL, KERNEL))
            .expect("reshape");
        dx
    }
}

/// Upsampling transposed convolution, doubles the spatial dims.
#[derive(Debug)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Array4<f32>, // (in, out, K, K)
    pub bias: Option<Array1<f32>>,
    pub grad_weight: Array4<f32>,
    pub grad_bias: Option<Array1<f32>>,
    cache: Option<Array4<f32>>,
}

impl ConvTranspose2d {
    pub fn new(in_channels: usize, out_channels: usize, bias: bool, rng: &mut ChaCha8Rng) -> Self {
        let shape = (in_channels, out_channels, KERNEL, KERNEL);
        ConvTranspose2d {
            in_channels,
            out_channels,
            weight: init_kernel(shape, rng),
            bias: bias.then(|| Array1::zeros(out_channels)),
            grad_weight: Array4::zeros(shape),
            grad_bias: bias.then(|| Array1::zeros(out_channels)),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, keep_cache: bool) -> Result<Array4<f32>> {
        let (n, c, h, w) = x.dim();
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv-transpose expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (oh, ow) = (convt_out(h), convt_out(w));
        let ok2 = self.out_channels * KERNEL * KERNEL;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.in_channels, ok2))
            .expect("contiguous weight");
        let mut y = Array4::<f32>::zeros((n, self.out_channels, oh, ow));
        for i in 0..n {
            // concatenated skip inputs may not be in standard layout
            let xi = x.index_axis(Axis(0), i).as_standard_layout().into_owned();
            let x2 = xi
                .view()
                .into_shape_with_order((self.in_channels, h * w))
                .expect("contiguous input");
            let cols = w2.t().dot(&x2); // (out*K*K, h*w)
            let mut yi = col2im(&cols, self.out_channels, oh, ow);
            if let Some(b) = self.bias.as_ref() {
                for co in 0..self.out_channels {
                    yi.index_axis_mut(Axis(0), co).mapv_inplace(|v| v + b[co]);
                }
            }
            y.index_axis_mut(Axis(0), i).assign(&yi);
        }
        self.cache = keep_cache.then(|| x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let x = self.cache.as_ref().expect("forward(keep_cache) before backward");
        let (n, _, h, w) = x.dim();
        let ok2 = self.out_channels * KERNEL * KERNEL;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((self.in_channels, ok2))
            .expect("contiguous weight");
        let mut dx = Array4::<f32>::zeros(x.dim());
        let mut gw2 = Array2::<f32>::zeros((self.in_channels, ok2));
        for i in 0..n {
            let dyi = dy.index_axis(Axis(0), i);
            let dcols = im2col(&dyi); // (out*K*K, h*w)
            let xi = x.index_axis(Axis(0), i).as_standard_layout().into_owned();
            let x2 = xi
                .view()
                .into_shape_with_order((self.in_channels, h * w))
                .expect("contiguous input");
            // dx = W * unfold(dy); dW = x * unfold(dy)^T
            let dx2 = w2.dot(&dcols);
            dx.index_axis_mut(Axis(0), i).assign(
                &dx2.into_shape_with_order((self.in_channels, h, w))
                    .expect("reshape"),
            );
            gw2 += &x2.dot(&dcols.t());
            if let Some(gb) = self.grad_bias.as_mut() {
                for co in 0..self.out_channels {
                    gb[co] += dyi.index_axis(Axis(0), co).sum();
                }
            }
        }
        self.grad_weight += &gw2
            .into_shape_with_order((self.in_channels, self.out_channels, KERNEL, KERNEL))
            .expect("reshape");
        dx
    }
}

/// Fill a tensor with small uniform values, for gradient-check fixtures.
pub fn random_tensor(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f32> {
    Array4::from_shape_simple_fn(shape, || rng.gen_range(-1.0f32..1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    /// Scalar reference convolution, kept independent of the im2col path.
    fn conv_ref(x: &Array4<f32>, w: &Array4<f32>, b: Option<&Array1<f32>>) -> Array4<f32> {
        let (n, c, h, wd) = x.dim();
        let (oc, _, _, _) = w.dim();
        let (oh, ow) = (conv_out(h), conv_out(wd));
        let mut y = Array4::<f32>::zeros((n, oc, oh, ow));
        for i in 0..n {
            for co in 0..oc {
                for oi in 0..oh {
                    for oj in 0..ow {
                        let mut acc = b.map_or(0.0, |b| b[co]) as f64;
                        for ci in 0..c {
                            for kh in 0..KERNEL {
                                for kw in 0..KERNEL {
                                    let ih = (oi * STRIDE + kh) as isize - 1;
                                    let iw = (oj * STRIDE + kw) as isize - 1;
                                    if ih < 0 || iw < 0 || ih >= h as isize || iw >= wd as isize {
                                        continue;
                                    }
                                    acc += (x[[i, ci, ih as usize, iw as usize]]
                                        * w[[co, ci, kh, kw]])
                                        as f64;
                                }
                            }
                        }
                        y[[i, co, oi, oj]] = acc as f32;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_scalar_reference() {
        let mut rng = stream(1, "test", 0);
        let mut conv = Conv2d::new(3, 5, true, &mut rng);
        let x = random_tensor((2, 3, 8, 8), &mut rng);
        let y = conv.forward(&x, false).unwrap();
        let want = conv_ref(&x, &conv.weight, conv.bias.as_ref());
        assert_eq!(y.dim(), (2, 5, 4, 4));
        for (a, b) in y.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn convt_shapes_double_and_adjointness_holds() {
        // <conv(x), y> == <x, convT'(y)> for the shared-weight pair, i.e.
        // conv backward-data equals conv-transpose forward
        let mut rng = stream(2, "test", 0);
        let conv = Conv2d::new(3, 5, false, &mut rng);
        let mut convt = ConvTranspose2d::new(5, 3, false, &mut rng);
        // share weights: convT weight (in=5, out=3) = conv weight (out=5, in=3) transposed
        for o in 0..5 {
            for c in 0..3 {
                for kh in 0..KERNEL {
                    for kw in 0..KERNEL {
                        convt.weight[[o, c, kh, kw]] = conv.weight[[o, c, kh, kw]];
                    }
                }
            }
        }
        let x = random_tensor((1, 3, 8, 8), &mut rng);
        let y = random_tensor((1, 5, 4, 4), &mut rng);
        let cx = conv_ref(&x, &conv.weight, None);
        let cty = convt.forward(&y, false).unwrap();
        assert_eq!(cty.dim(), (1, 3, 8, 8));
        let lhs: f64 = cx.iter().zip(y.iter()).map(|(a, b)| (a * b) as f64).sum();
        let rhs: f64 = x.iter().zip(cty.iter()).map(|(a, b)| (a * b) as f64).sum();
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    fn finite_diff_check<F>(mut f: F, x: &Array4<f32>, analytic: &Array4<f32>)
    where
        F: FnMut(&Array4<f32>) -> f64,
    {
        let h = 1e-2f32; // f32 forward passes; central difference
        let mut worst = 0.0f64;
        for idx in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 2, 5, 1), (0, 0, 7, 7), (0, 1, 4, 4)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let num = (f(&xp) - f(&xm)) / (2.0 * h as f64);
            let ana = analytic[idx] as f64;
            let denom = num.abs().max(ana.abs()).max(1e-3);
            worst = worst.max((num - ana).abs() / denom);
        }
        assert!(worst < 2e-2, "finite-diff mismatch {worst}");
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences() {
        let mut rng = stream(3, "test", 0);
        let mut conv = Conv2d::new(3, 4, true, &mut rng);
        let x = random_tensor((1, 3, 8, 8), &mut rng);
        let y = conv.forward(&x, true).unwrap();
        // loss = sum(y^2)/2, so dL/dy = y
        let dx = conv.backward(&y);
        let loss = |xx: &Array4<f32>| -> f64 {
            let yy = conv_ref(xx, &conv.weight, conv.bias.as_ref());
            yy.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / 2.0
        };
        finite_diff_check(loss, &x, &dx);
    }

    #[test]
    fn convt_input_gradient_matches_finite_differences() {
        let mut rng = stream(4, "test", 0);
        let mut convt = ConvTranspose2d::new(3, 4, true, &mut rng);
        let x = random_tensor((1, 3, 8, 8), &mut rng);
        let y = convt.forward(&x, true).unwrap();
        let dx = convt.backward(&y);
        let mut probe = ConvTranspose2d {
            in_channels: 3,
            out_channels: 4,
            weight: convt.weight.clone(),
            bias: convt.bias.clone(),
            grad_weight: Array4::zeros(convt.weight.dim()),
            grad_bias: None,
            cache: None,
        };
        let loss = move |xx: &Array4<f32>| -> f64 {
            let yy = probe.forward(xx, false).unwrap();
            yy.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / 2.0
        };
        finite_diff_check(loss, &x, &dx);
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let mut rng = stream(5, "test", 0);
        let mut conv = Conv2d::new(2, 3, false, &mut rng);
        let x = random_tensor((2, 2, 8, 8), &mut rng);
        let y = conv.forward(&x, true).unwrap();
        conv.backward(&y);
        let h = 1e-2f32;
        for idx in [(0, 0, 0, 0), (1, 1, 2, 3), (2, 0, 3, 1)] {
            let mut wp = conv.weight.clone();
            wp[idx] += h;
            let mut wm = conv.weight.clone();
            wm[idx] -= h;
            let lp: f64 = conv_ref(&x, &wp, None)
                .iter()
                .map(|v| (*v as f64).powi(2))
                .sum::<f64>()
                / 2.0;
            let lm: f64 = conv_ref(&x, &wm, None)
                .iter()
                .map(|v| (*v as f64).powi(2))
                .sum::<f64>()
                / 2.0;
            let num = (lp - lm) / (2.0 * h as f64);
            let ana = conv.grad_weight[idx] as f64;
            let denom = num.abs().max(ana.abs()).max(1e-3);
            assert!((num - ana).abs() / denom < 2e-2, "{num} vs {ana}");
        }
    }
}
