//! Region-supervised image augmentation.
//!
//! The crate keeps the pixels inside annotated bounding boxes (optionally
//! enlarged by a set of aspect-ratio factors) and zeroes the rest of the
//! image, alongside mask-restricted versions of Mixup, Cutout and Cutmix.
//! Around the kernels it provides annotation ingestion, small-object subset
//! construction, replayable batch manifests, a classification-metrics suite
//! and a synthetic linear-probe experiment.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod augment;
pub mod batch;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod par;
pub mod probe;
pub mod seed;

pub use augment::{
    cut_and_remain, sup_cutmix, sup_cutout, sup_mixup, AugmentedSample, Label, Method, MixParams,
    Provenance,
};
pub use error::{Error, Result};
pub use geometry::{AspectRatioSet, BinaryMask, BoundingBox, PixelRegion};
pub use image::ImageTensor;
pub use par::Execution;

/// Version string embedded in every manifest and report header.
pub const TOOL_VERSION: &str = concat!("cutremain ", env!("CARGO_PKG_VERSION"));
