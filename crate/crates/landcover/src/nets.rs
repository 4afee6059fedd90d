//! Declarative network construction: the 14-block U-Net generator, the
//! 5-block patch discriminator, and the CNN baseline (structurally
//! identical to the generator).
//!
//! A [`NetworkSpec`] lists blocks in execution order. Decoder blocks that
//! name a `skip_source` concatenate that encoder block's output onto their
//! input, which is what doubles their input channel counts. All
//! convolutions are 4x4, stride 2, padding 1; a block's order of
//! operations is conv, then batch norm, then dropout, then activation.
//!
//! Channel counts scale by `width_multiplier` (hidden layers only; the
//! 4-channel input, 6-channel output, and 10-channel discriminator input
//! are fixed). Multiplier 1 is the reference configuration, and its
//! parameter counts are auditable directly:
//!
//! ```
//! use landcover::nets::{build_discriminator, build_generator};
//! use landcover::rng::stream;
//!
//! let mut rng = stream(0, "book", 0);
//! let gen = build_generator(1.0, &mut rng).unwrap();
//! let disc = build_discriminator(1.0, &mut rng).unwrap();
//! assert_eq!(gen.count_parameters().weight_only, 41_828_352);
//! assert_eq!(disc.count_parameters().weight_only, 2_770_944);
//! ```

use ndarray::{concatenate, Array4, Axis, Slice};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    Act, ActKind, BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Mode, ParamWalk,
};
use crate::taxonomy::NUM_CLASSES;

/// Generator/CNN input channels (Red, Green, Blue, NIR).
pub const GEN_IN_CHANNELS: usize = 4;
/// Discriminator input: image (4) concatenated with a 6-channel mask.
pub const DISC_IN_CHANNELS: usize = GEN_IN_CHANNELS + NUM_CLASSES;
/// Patch-score grid edge for 256x256 input.
pub const PATCH_GRID: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    /// Downsampling convolution.
    Down,
    /// Upsampling transposed convolution.
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    BatchNorm,
    None,
}

/// One block of a network, with actual (already scaled) channel counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub norm: NormKind,
    pub activation: ActKind,
    /// Dropout probability; only `Some(0.5)` is used.
    pub dropout: Option<f32>,
    /// Zero-based index of the encoder block whose output is concatenated
    /// onto this block's input.
    pub skip_source: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub width_multiplier: f64,
}

fn scale(base: usize, m: f64) -> Result<usize> {
    let scaled = base as f64 * m;
    if scaled < 1.0 || scaled.fract() != 0.0 {
        return Err(Error::NonIntegralChannels { m, base });
    }
    Ok(scaled as usize)
}

fn check_multiplier(m: f64) -> Result<()> {
    if m.is_nan() || m < 1.0 / 8.0 {
        return Err(Error::NetSpec(format!(
            "width multiplier {m} below the supported minimum 1/8"
        )));
    }
    Ok(())
}

impl NetworkSpec {
    /// The 14-block U-Net generator.
    pub fn generator(m: f64) -> Result<NetworkSpec> {
        check_multiplier(m)?;
        let s = |base: usize| scale(base, m);
        let mut layers = Vec::with_capacity(14);
        // encoder: blocks 1-7 (indices 0-6)
        let enc_out = [64, 128, 256, 512, 512, 512, 512];
        let mut prev = GEN_IN_CHANNELS;
        for (i, &out) in enc_out.iter().enumerate() {
            let (norm, activation) = match i {
                0 => (NormKind::None, ActKind::LeakyRelu),
                6 => (NormKind::None, ActKind::Relu), // bottleneck block 7
                _ => (NormKind::BatchNorm, ActKind::LeakyRelu),
            };
            layers.push(LayerSpec {
                kind: ConvKind::Down,
                in_channels: prev,
                out_channels: s(out)?,
                kernel: 4,
                stride: 2,
                padding: 1,
                norm,
                activation,
                dropout: None,
                skip_source: None,
            });
            prev = s(out)?;
        }
        // decoder: blocks 8-14 (indices 7-13); skips double the inputs of
        // blocks 9-14, fed from encoder blocks 6,5,4,3,2,1
        struct Dec {
            out: usize,
            dropout: bool,
            skip: Option<usize>,
        }
        let dec = [
            Dec { out: 512, dropout: false, skip: None },    // block 8
            Dec { out: 512, dropout: true, skip: Some(5) },  // block 9
            Dec { out: 512, dropout: true, skip: Some(4) },  // block 10
            Dec { out: 256, dropout: false, skip: Some(3) }, // block 11
            Dec { out: 128, dropout: false, skip: Some(2) }, // block 12
            Dec { out: 64, dropout: false, skip: Some(1) },  // block 13
        ];
        for d in dec {
            let in_channels = match d.skip {
                Some(src) => prev + layers[src].out_channels,
                None => prev,
            };
            layers.push(LayerSpec {
                kind: ConvKind::Up,
                in_channels,
                out_channels: s(d.out)?,
                kernel: 4,
                stride: 2,
                padding: 1,
                norm: NormKind::BatchNorm,
                activation: ActKind::Relu,
                dropout: d.dropout.then_some(0.5),
                skip_source: d.skip,
            });
            prev = s(d.out)?;
        }
        // block 14: softmax head, fixed 6 output channels
        layers.push(LayerSpec {
            kind: ConvKind::Up,
            in_channels: prev + layers[0].out_channels,
            out_channels: NUM_CLASSES,
            kernel: 4,
            stride: 2,
            padding: 1,
            norm: NormKind::None,
            activation: ActKind::Softmax,
            dropout: None,
            skip_source: Some(0),
        });
        Ok(NetworkSpec {
            layers,
            width_multiplier: m,
        })
    }

    /// The 5-block patch discriminator.
    pub fn discriminator(m: f64) -> Result<NetworkSpec> {
        check_multiplier(m)?;
        let s = |base: usize| scale(base, m);
        let mut layers = Vec::with_capacity(5);
        let chans = [
            (DISC_IN_CHANNELS, s(64)?, NormKind::None, ActKind::LeakyRelu),
            (s(64)?, s(128)?, NormKind::BatchNorm, ActKind::LeakyRelu),
            (s(128)?, s(256)?, NormKind::BatchNorm, ActKind::LeakyRelu),
            (s(256)?, s(512)?, NormKind::BatchNorm, ActKind::LeakyRelu),
            (s(512)?, 1, NormKind::None, ActKind::Sigmoid),
        ];
        for (in_c, out_c, norm, activation) in chans {
            layers.push(LayerSpec {
                kind: ConvKind::Down,
                in_channels: in_c,
                out_channels: out_c,
                kernel: 4,
                stride: 2,
                padding: 1,
                norm,
                activation,
                dropout: None,
                skip_source: None,
            });
        }
        Ok(NetworkSpec {
            layers,
            width_multiplier: m,
        })
    }

    /// The CNN baseline uses the generator spec verbatim.
    pub fn cnn(m: f64) -> Result<NetworkSpec> {
        NetworkSpec::generator(m)
    }

    fn validate(&self) -> Result<()> {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.kernel != 4 || layer.stride != 2 || layer.padding != 1 {
                return Err(Error::NetSpec(format!(
                    "block {}: only 4x4 stride-2 padding-1 convolutions are supported",
                    i + 1
                )));
            }
            if let Some(p) = layer.dropout {
                if p != 0.5 {
                    return Err(Error::NetSpec(format!(
                        "block {}: dropout must be 0.5 when present",
                        i + 1
                    )));
                }
            }
            if let Some(src) = layer.skip_source {
                if src >= i {
                    return Err(Error::NetSpec(format!(
                        "block {}: skip source {src} is not an earlier block",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weight-only and total parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Convolution kernels only.
    pub weight_only: u64,
    /// Kernels plus biases and normalization affine parameters.
    pub total: u64,
}

struct Block {
    spec: LayerSpec,
    conv: ConvOp,
    norm: Option<BatchNorm2d>,
    dropout: Option<Dropout>,
    act: Act,
}

enum ConvOp {
    Down(Conv2d),
    Up(ConvTranspose2d),
}

impl Block {
    fn forward(&mut self, x: &Array4<f32>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Array4<f32>> {
        let keep = mode == Mode::Train;
        let mut y = match &mut self.conv {
            ConvOp::Down(c) => c.forward(x, keep)?,
            ConvOp::Up(c) => c.forward(x, keep)?,
        };
        if let Some(norm) = &mut self.norm {
            y = norm.forward(&y, mode);
        }
        if mode == Mode::Train {
            if let Some(dropout) = &mut self.dropout {
                y = dropout.forward_train(&y, rng);
            }
        }
        Ok(self.act.forward(&y, keep))
    }

    fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let mut g = self.act.backward(dy);
        if let Some(dropout) = &mut self.dropout {
            g = dropout.backward(&g);
        }
        if let Some(norm) = &mut self.norm {
            g = norm.backward(&g);
        }
        match &mut self.conv {
            ConvOp::Down(c) => c.backward(&g),
            ConvOp::Up(c) => c.backward(&g),
        }
    }
}

/// Input/output shape of one block during the most recent forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeRow {
    pub input: (usize, usize, usize),
    pub output: (usize, usize, usize),
}

/// A built network: blocks plus the spec they were built from.
pub struct Network {
    spec: NetworkSpec,
    blocks: Vec<Block>,
    last_shapes: Vec<ShapeRow>,
}

impl Network {
    /// Build from a spec, initializing conv kernels from N(0, 0.02^2) and
    /// norm scales from N(1, 0.02^2), using the given stream.
    pub fn build(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Network> {
        spec.validate()?;
        let mut blocks = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            // convolutions followed by batch norm carry no bias
            let bias = layer.norm == NormKind::None;
            let conv = match layer.kind {
                ConvKind::Down => {
                    ConvOp::Down(Conv2d::new(layer.in_channels, layer.out_channels, bias, rng))
                }
                ConvKind::Up => ConvOp::Up(ConvTranspose2d::new(
                    layer.in_channels,
                    layer.out_channels,
                    bias,
                    rng,
                )),
            };
            let norm = match layer.norm {
                NormKind::BatchNorm => Some(BatchNorm2d::new(layer.out_channels, rng)),
                NormKind::None => None,
            };
            blocks.push(Block {
                spec: layer.clone(),
                conv,
                norm,
                dropout: layer.dropout.map(|_| Dropout::new()),
                act: Act::new(layer.activation),
            });
        }
        Ok(Network {
            spec,
            blocks,
            last_shapes: Vec::new(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Forward pass. `rng` drives dropout; it is untouched when the network
    /// has no dropout or runs in eval mode.
    pub fn forward(&mut self, x: &Array4<f32>, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Array4<f32>> {
        let (_, c, _, _) = x.dim();
        if c != self.spec.layers[0].in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {c}",
                self.spec.layers[0].in_channels
            )));
        }
        let mut outs: Vec<Array4<f32>> = Vec::with_capacity(self.blocks.len());
        self.last_shapes.clear();
        for i in 0..self.blocks.len() {
            let input = if i == 0 {
                x.clone()
            } else if let Some(src) = self.blocks[i].spec.skip_source {
                concatenate(Axis(1), &[outs[i - 1].view(), outs[src].view()])
                    .map_err(|e| Error::Shape(format!("skip concat at block {}: {e}", i + 1)))?
            } else {
                outs[i - 1].clone()
            };
            let (_, ic, ih, iw) = input.dim();
            let y = self.blocks[i].forward(&input, mode, rng)?;
            let (_, oc, oh, ow) = y.dim();
            self.last_shapes.push(ShapeRow {
                input: (ic, ih, iw),
                output: (oc, oh, ow),
            });
            outs.push(y);
        }
        Ok(outs.pop().expect("at least one block"))
    }

    /// Backward pass; requires a train-mode forward first. Accumulates
    /// parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, dy: &Array4<f32>) -> Array4<f32> {
        let n = self.blocks.len();
        let mut grads: Vec<Option<Array4<f32>>> = (0..n).map(|_| None).collect();
        grads[n - 1] = Some(dy.clone());
        let mut dx_input: Option<Array4<f32>> = None;
        for i in (0..n).rev() {
            let g = grads[i].take().expect("gradient must reach every block");
            let dinput = self.blocks[i].backward(&g);
            let route = |acc: &mut Option<Array4<f32>>, part: Array4<f32>| match acc {
                Some(a) => *a += &part,
                None => *acc = Some(part),
            };
            if i == 0 {
                route(&mut dx_input, dinput);
            } else if let Some(src) = self.blocks[i].spec.skip_source {
                let prev_c = self.blocks[i - 1].spec.out_channels;
                let dprev = dinput
                    .slice_axis(Axis(1), Slice::from(0..prev_c))
                    .to_owned();
                let dskip = dinput
                    .slice_axis(Axis(1), Slice::from(prev_c..))
                    .to_owned();
                route(&mut grads[i - 1], dprev);
                route(&mut grads[src], dskip);
            } else {
                route(&mut grads[i - 1], dinput);
            }
        }
        dx_input.expect("input gradient")
    }

    /// Per-block shapes observed during the most recent forward pass.
    pub fn last_shapes(&self) -> &[ShapeRow] {
        &self.last_shapes
    }

    pub fn zero_grad(&mut self) {
        self.for_each_param(&mut |_, _, g| g.fill(0.0));
    }

    pub fn count_parameters(&self) -> ParamCount {
        let mut weight_only = 0u64;
        let mut total = 0u64;
        for block in &self.blocks {
            let (w, b) = match &block.conv {
                ConvOp::Down(c) => (c.weight.len(), c.bias.as_ref().map_or(0, |b| b.len())),
                ConvOp::Up(c) => (c.weight.len(), c.bias.as_ref().map_or(0, |b| b.len())),
            };
            weight_only += w as u64;
            total += (w + b) as u64;
            if let Some(norm) = &block.norm {
                total += (norm.gamma.len() + norm.beta.len()) as u64;
            }
        }
        ParamCount { weight_only, total }
    }

    /// All persistent tensors: parameters plus batch-norm running stats.
    pub fn state_dict(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            let prefix = format!("b{i:02}");
            match &block.conv {
                ConvOp::Down(c) => {
                    out.push((
                        format!("{prefix}.conv.weight"),
                        c.weight.shape().to_vec(),
                        c.weight.iter().copied().collect(),
                    ));
                    if let Some(b) = &c.bias {
                        out.push((
                            format!("{prefix}.conv.bias"),
                            vec![b.len()],
                            b.to_vec(),
                        ));
                    }
                }
                ConvOp::Up(c) => {
                    out.push((
                        format!("{prefix}.conv.weight"),
                        c.weight.shape().to_vec(),
                        c.weight.iter().copied().collect(),
                    ));
                    if let Some(b) = &c.bias {
                        out.push((
                            format!("{prefix}.conv.bias"),
                            vec![b.len()],
                            b.to_vec(),
                        ));
                    }
                }
            }
            if let Some(norm) = &block.norm {
                out.push((
                    format!("{prefix}.bn.gamma"),
                    vec![norm.gamma.len()],
                    norm.gamma.to_vec(),
                ));
                out.push((
                    format!("{prefix}.bn.beta"),
                    vec![norm.beta.len()],
                    norm.beta.to_vec(),
                ));
                out.push((
                    format!("{prefix}.bn.running_mean"),
                    vec![norm.running_mean.len()],
                    norm.running_mean.to_vec(),
                ));
                out.push((
                    format!("{prefix}.bn.running_var"),
                    vec![norm.running_var.len()],
                    norm.running_var.to_vec(),
                ));
            }
        }
        out
    }

    pub fn load_state_dict(&mut self, entries: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        use std::collections::BTreeMap;
        let map: BTreeMap<&str, &(String, Vec<usize>, Vec<f32>)> =
            entries.iter().map(|e| (e.0.as_str(), e)).collect();
        let fetch = |name: String, dst: &mut [f32]| -> Result<()> {
            let (_, _, values) = map.get(name.as_str()).ok_or_else(|| Error::NetSpec(
                format!("state dict missing tensor {name}"),
            ))?;
            if values.len() != dst.len() {
                return Err(Error::NetSpec(format!(
                    "tensor {name} has {} values, expected {}",
                    values.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(values);
            Ok(())
        };
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("b{i:02}");
            match &mut block.conv {
                ConvOp::Down(c) => {
                    fetch(format!("{prefix}.conv.weight"), c.weight.as_slice_mut().unwrap())?;
                    if let Some(b) = &mut c.bias {
                        fetch(format!("{prefix}.conv.bias"), b.as_slice_mut().unwrap())?;
                    }
                }
                ConvOp::Up(c) => {
                    fetch(format!("{prefix}.conv.weight"), c.weight.as_slice_mut().unwrap())?;
                    if let Some(b) = &mut c.bias {
                        fetch(format!("{prefix}.conv.bias"), b.as_slice_mut().unwrap())?;
                    }
                }
            }
            if let Some(norm) = &mut block.norm {
                fetch(format!("{prefix}.bn.gamma"), norm.gamma.as_slice_mut().unwrap())?;
                fetch(format!("{prefix}.bn.beta"), norm.beta.as_slice_mut().unwrap())?;
                fetch(
                    format!("{prefix}.bn.running_mean"),
                    norm.running_mean.as_slice_mut().unwrap(),
                )?;
                fetch(
                    format!("{prefix}.bn.running_var"),
                    norm.running_var.as_slice_mut().unwrap(),
                )?;
            }
        }
        Ok(())
    }
}

impl ParamWalk for Network {
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32])) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let prefix = format!("b{i:02}");
            match &mut block.conv {
                ConvOp::Down(c) => {
                    f(
                        &format!("{prefix}.conv.weight"),
                        c.weight.as_slice_mut().unwrap(),
                        c.grad_weight.as_slice_mut().unwrap(),
                    );
                    if let (Some(b), Some(g)) = (&mut c.bias, &mut c.grad_bias) {
                        f(
                            &format!("{prefix}.conv.bias"),
                            b.as_slice_mut().unwrap(),
                            g.as_slice_mut().unwrap(),
                        );
                    }
                }
                ConvOp::Up(c) => {
                    f(
                        &format!("{prefix}.conv.weight"),
                        c.weight.as_slice_mut().unwrap(),
                        c.grad_weight.as_slice_mut().unwrap(),
                    );
                    if let (Some(b), Some(g)) = (&mut c.bias, &mut c.grad_bias) {
                        f(
                            &format!("{prefix}.conv.bias"),
                            b.as_slice_mut().unwrap(),
                            g.as_slice_mut().unwrap(),
                        );
                    }
                }
            }
            if let Some(norm) = &mut block.norm {
                f(
                    &format!("{prefix}.bn.gamma"),
                    norm.gamma.as_slice_mut().unwrap(),
                    norm.grad_gamma.as_slice_mut().unwrap(),
                );
                f(
                    &format!("{prefix}.bn.beta"),
                    norm.beta.as_slice_mut().unwrap(),
                    norm.grad_beta.as_slice_mut().unwrap(),
                );
            }
        }
    }
}

/// Build the generator at the given width multiplier.
pub fn build_generator(m: f64, rng: &mut ChaCha8Rng) -> Result<Network> {
    Network::build(NetworkSpec::generator(m)?, rng)
}

/// Build the patch discriminator at the given width multiplier.
pub fn build_discriminator(m: f64, rng: &mut ChaCha8Rng) -> Result<Network> {
    Network::build(NetworkSpec::discriminator(m)?, rng)
}

/// Generator forward with the input contract enforced: 4x256x256 input in
/// [-1, 1], softmax output on the per-pixel simplex.
pub fn forward_generator(
    net: &mut Network,
    batch: &Array4<f32>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Array4<f32>> {
    let (_, c, h, w) = batch.dim();
    if c != GEN_IN_CHANNELS || h != 256 || w != 256 {
        return Err(Error::Shape(format!(
            "generator input must be {GEN_IN_CHANNELS}x256x256, got {c}x{h}x{w}"
        )));
    }
    if batch.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-6) {
        return Err(Error::Shape(
            "generator input values must lie in [-1, 1]".into(),
        ));
    }
    net.forward(batch, mode, rng)
}

/// Discriminator forward on an (image, mask) pair; concatenates channels.
pub fn forward_discriminator(
    net: &mut Network,
    image: &Array4<f32>,
    mask: &Array4<f32>,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<Array4<f32>> {
    let (n, c, h, w) = image.dim();
    let (mn, mc, mh, mw) = mask.dim();
    if c != GEN_IN_CHANNELS {
        return Err(Error::Shape(format!("image must have 4 channels, got {c}")));
    }
    if mc != NUM_CLASSES {
        return Err(Error::Shape(format!(
            "label mask must have {NUM_CLASSES} channels, got {mc}"
        )));
    }
    if (n, h, w) != (mn, mh, mw) {
        return Err(Error::Shape(format!(
            "image {n}x{h}x{w} and mask {mn}x{mh}x{mw} batch/spatial dims differ"
        )));
    }
    let joint = concatenate(Axis(1), &[image.view(), mask.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    net.forward(&joint, mode, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::act::simplex_deviation;
    use crate::rng::stream;

    #[test]
    fn generator_spec_reproduces_the_reference_channel_plan() {
        let spec = NetworkSpec::generator(1.0).unwrap();
        assert_eq!(spec.layers.len(), 14);
        let plan: Vec<(usize, usize)> = spec
            .layers
            .iter()
            .map(|l| (l.in_channels, l.out_channels))
            .collect();
        assert_eq!(
            plan,
            vec![
                (4, 64),
                (64, 128),
                (128, 256),
                (256, 512),
                (512, 512),
                (512, 512),
                (512, 512),
                (512, 512),
                (1024, 512),
                (1024, 512),
                (1024, 256),
                (512, 128),
                (256, 64),
                (128, 6),
            ]
        );
        // dropout only in decoder blocks 9 and 10
        let with_dropout: Vec<usize> = spec
            .layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.dropout.is_some())
            .map(|(i, _)| i + 1)
            .collect();
        assert_eq!(with_dropout, vec![9, 10]);
        // bottleneck block 7 is plain ReLU without norm
        assert_eq!(spec.layers[6].norm, NormKind::None);
        assert_eq!(spec.layers[6].activation, ActKind::Relu);
    }

    #[test]
    fn cnn_spec_is_structurally_identical_to_the_generator() {
        assert_eq!(NetworkSpec::cnn(1.0).unwrap(), NetworkSpec::generator(1.0).unwrap());
    }

    #[test]
    fn width_multiplier_validation() {
        assert!(NetworkSpec::generator(1.0 / 16.0).is_err());
        assert!(NetworkSpec::generator(0.3).is_err()); // 64*0.3 = 19.2
        let spec = NetworkSpec::generator(0.125).unwrap();
        assert_eq!(spec.layers[0].out_channels, 8);
        assert_eq!(spec.layers[0].in_channels, 4); // input never scales
        assert_eq!(spec.layers[13].out_channels, 6); // output never scales
    }

    #[test]
    fn small_generator_output_is_a_simplex_and_eval_is_deterministic() {
        let mut rng = stream(41, "init", 0);
        let mut net = build_generator(0.125, &mut rng).unwrap();
        let mut drop_rng = stream(41, "dropout", 0);
        let x = Array4::from_shape_fn((1, 4, 256, 256), |(_, c, i, j)| {
            (((c + i + j) % 17) as f32 / 8.5) - 1.0
        });
        let y1 = forward_generator(&mut net, &x, Mode::Eval, &mut drop_rng).unwrap();
        assert_eq!(y1.dim(), (1, 6, 256, 256));
        assert!(simplex_deviation(&y1) < 1e-5);
        let y2 = forward_generator(&mut net, &x, Mode::Eval, &mut drop_rng).unwrap();
        assert_eq!(y1, y2);
        // train mode with dropout may differ between calls
        let t1 = forward_generator(&mut net, &x, Mode::Train, &mut drop_rng).unwrap();
        let t2 = forward_generator(&mut net, &x, Mode::Train, &mut drop_rng).unwrap();
        assert_ne!(t1, t2);
    }

    #[test]
    fn discriminator_contract_checks() {
        let mut rng = stream(42, "init", 0);
        let mut net = build_discriminator(0.125, &mut rng).unwrap();
        let mut drop_rng = stream(42, "dropout", 0);
        let x = Array4::zeros((1, 4, 256, 256));
        let mask = Array4::from_elem((1, 6, 256, 256), 1.0 / 6.0);
        let scores = forward_discriminator(&mut net, &x, &mask, Mode::Eval, &mut drop_rng).unwrap();
        assert_eq!(scores.dim(), (1, 1, 8, 8));
        assert!(scores.iter().all(|&v| v > 0.0 && v < 1.0));
        // 5-channel mask is a contract violation
        let bad = Array4::zeros((1, 5, 256, 256));
        assert!(forward_discriminator(&mut net, &x, &bad, Mode::Eval, &mut drop_rng).is_err());
    }

    #[test]
    fn batch_order_does_not_change_per_sample_scores_in_eval() {
        let mut rng = stream(43, "init", 0);
        let mut net = build_discriminator(0.125, &mut rng).unwrap();
        let mut drop_rng = stream(43, "dropout", 0);
        let a = Array4::from_shape_fn((1, 10, 256, 256), |(_, c, i, j)| {
            ((c * 31 + i * 7 + j) % 13) as f32 / 13.0 - 0.5
        });
        let b = a.mapv(|v| -v);
        let ab = concatenate(Axis(0), &[a.view(), b.view()]).unwrap();
        let ba = concatenate(Axis(0), &[b.view(), a.view()]).unwrap();
        let s_ab = net.forward(&ab, Mode::Eval, &mut drop_rng).unwrap();
        let s_ba = net.forward(&ba, Mode::Eval, &mut drop_rng).unwrap();
        let a_first = s_ab.index_axis(Axis(0), 0).to_owned();
        let a_second = s_ba.index_axis(Axis(0), 1).to_owned();
        assert_eq!(a_first, a_second);
    }

    #[test]
    fn backward_runs_through_the_skip_topology() {
        let mut rng = stream(44, "init", 0);
        let mut net = build_generator(0.125, &mut rng).unwrap();
        let mut drop_rng = stream(44, "dropout", 0);
        let x = Array4::from_elem((1, 4, 256, 256), 0.1f32);
        let y = net.forward(&x, Mode::Train, &mut drop_rng).unwrap();
        let dx = net.backward(&y);
        assert_eq!(dx.dim(), x.dim());
        // gradients landed somewhere
        let mut any_nonzero = false;
        net.for_each_param(&mut |_, _, g| {
            if g.iter().any(|v| *v != 0.0) {
                any_nonzero = true;
            }
        });
        assert!(any_nonzero);
    }

    #[test]
    fn state_dict_round_trip_preserves_outputs() {
        let mut rng = stream(45, "init", 0);
        let mut net = build_discriminator(0.125, &mut rng).unwrap();
        let mut rng2 = stream(46, "init", 0);
        let mut net2 = build_discriminator(0.125, &mut rng2).unwrap();
        net2.load_state_dict(&net.state_dict()).unwrap();
        let mut drop_rng = stream(45, "dropout", 0);
        let x = Array4::from_elem((1, 10, 256, 256), 0.25f32);
        let y1 = net.forward(&x, Mode::Eval, &mut drop_rng).unwrap();
        let y2 = net2.forward(&x, Mode::Eval, &mut drop_rng).unwrap();
        assert_eq!(y1, y2);
    }
}
