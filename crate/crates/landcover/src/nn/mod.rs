//! Minimal CPU tensor layers with hand-written backprop.
//!
//! Everything is specialized to the fixed 4x4 kernel, stride 2, padding 1
//! convolution geometry used by both networks. Tensors are `ndarray`
//! arrays in (batch, channel, height, width) layout, f32 throughout with
//! f64 accumulation where it matters.

pub mod act;
pub mod conv;
pub mod dropout;
pub mod norm;
pub mod optim;

pub use act::{Act, ActKind};
pub use conv::{Conv2d, ConvTranspose2d};
pub use dropout::Dropout;
pub use norm::BatchNorm2d;
pub use optim::{Adam, Sgd};

/// Forward-pass mode: training uses batch statistics and active dropout,
/// eval uses running statistics with dropout off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Walk every learnable parameter as (name, values, gradient) slices.
/// Optimizers and checkpointing are written against this.
pub trait ParamWalk {
    #[allow(clippy::type_complexity)]
    fn for_each_param(&mut self, f: &mut dyn FnMut(&str, &mut [f32], &mut [f32]));
}
