//! Land-cover semantic segmentation of 4-band multispectral tiles, trained
//! either adversarially (a conditional GAN with a U-Net generator and a
//! patch discriminator) or fully supervised (the same U-Net under weighted
//! cross entropy), so the two approaches can be compared under identical,
//! reproducible conditions.
//!
//! The crate is organized around the pipeline:
//!
//! - [`taxonomy`]: the six-class schema, source-legend remapping, class
//!   weights, and render colors
//! - [`data`]: tile containers, manifests, normalization, one-hot encoding,
//!   distribution statistics, and synthetic corpora
//! - [`nets`]: declarative construction of the generator, discriminator,
//!   and CNN baseline, with shape and parameter-count verification
//! - [`losses`]: the adversarial objective, class-weighted L2, combined
//!   generator loss, and weighted cross entropy
//! - [`engine`]: the two training procedures with deterministic seeding,
//!   checkpointing, and early stopping
//! - [`metrics`]: per-class F1, confusion matrices, and rendering
//!
//! The `landcover` binary exposes all of it as subcommands; the book under
//! `book/` walks through the concepts.
//!
//! ```
//! use landcover::taxonomy::{Class, ClassTaxonomy, Remap};
//!
//! let tax = ClassTaxonomy::default();
//! assert_eq!(tax.remap_label(42).unwrap(), Remap::Keep(Class::Forest));
//! assert_eq!(tax.remap_label(31).unwrap(), Remap::Dropped);
//! ```

pub mod checkpoint;
pub mod data;
pub mod engine;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod rng;
pub mod taxonomy;

pub use error::{Error, Result};
