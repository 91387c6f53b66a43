//! Zero-shot change detection for co-registered bi-temporal imagery.
//!
//! The pipeline turns two images of the same scene into a binary change map:
//!
//! 1. a backbone adapter extracts a three-level feature pyramid per image,
//! 2. [`rff`] recalibrates and fuses the levels into full-resolution tensors,
//! 3. [`change`] takes the per-pixel cosine distance between the two tensors,
//! 4. optionally [`psa`] builds a semantic attention map from object masks and
//!    text prompts and multiplies it into the distance map,
//! 5. a global OTSU threshold over the non-zero distances binarizes the result.
//!
//! [`pipeline::run_pair`] wires these together for the `base`, `rff` and `scm`
//! variants. [`synthetic`] provides weight-free adapters, [`tiling`] the
//! sliding-window grid for large mosaics, and [`metrics`] the evaluation.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, dataset layout
//! and the command line live in the companion `scm` crate.

#![no_std]

extern crate alloc;

pub mod adapters;
pub mod change;
pub mod error;
pub mod feature;
pub mod metrics;
pub mod pipeline;
pub mod psa;
pub mod raster;
pub mod rff;
pub mod synthetic;
pub mod tiling;

pub use adapters::{AdapterSet, Embedder, Embedding, FeatureExtractor, MaskGenerator, PyramidLayout, SegmentMaskSet};
pub use change::{ChangeMap, DifferenceMap};
pub use error::{Error, Result};
pub use feature::{FeatureMap, FeaturePyramid, FusedFeature};
pub use metrics::{ConfusionCounts, Scores};
pub use pipeline::{run_pair, Diagnostics, PipelineConfig, Variant};
pub use psa::{AttentionMap, PromptGroups};
pub use raster::{BinaryMask, GroundTruth, ImagePair, RgbImage, Temporal};
pub use synthetic::synthetic_backbone;
