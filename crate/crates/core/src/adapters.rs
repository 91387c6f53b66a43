//! Contracts for the pretrained models the pipeline consumes.
//!
//! Three roles are involved: a multi-scale feature extractor, a class-agnostic
//! object mask generator, and a joint image/text embedder. Adapters are
//! stateful and take `&mut self`; use one instance per worker.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feature::FeaturePyramid;
use crate::raster::{BinaryMask, RgbImage, Temporal};

pub trait FeatureExtractor {
    /// Last-three-stage pyramid of `image`; must be deterministic.
    fn extract_pyramid(&mut self, image: &RgbImage) -> Result<FeaturePyramid>;
}

pub trait MaskGenerator {
    /// Object masks at the input resolution; may be empty.
    fn generate_masks(&mut self, image: &RgbImage) -> Result<Vec<BinaryMask>>;
}

pub trait Embedder {
    fn embed_image(&mut self, patch: &RgbImage) -> Result<Embedding>;
    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Image,
    Text,
}

/// Embedding vector with non-zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f32>,
    modality: Modality,
}

impl Embedding {
    pub fn new(values: Vec<f32>, modality: Modality) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::argument("embedding has no dimensions"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("embedding has non-finite values"));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::argument("embedding has zero norm"));
        }
        Ok(Self { values, modality })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::shape(format!(
                "embedding dims differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
        for (&a, &b) in self.values.iter().zip(&other.values) {
            let (a, b) = (f64::from(a), f64::from(b));
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        Ok(dot / libm::sqrt(na * nb))
    }
}

/// Rejects empty term lists and blank terms.
pub fn check_terms(texts: &[String]) -> Result<()> {
    if texts.is_empty() {
        return Err(Error::argument("no text terms to embed"));
    }
    if texts.iter().any(|t| t.trim().is_empty()) {
        return Err(Error::argument("blank text term"));
    }
    Ok(())
}

/// Object masks produced for one of the two acquisitions.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMaskSet {
    masks: Vec<BinaryMask>,
    source: Temporal,
}

impl SegmentMaskSet {
    /// Masks without foreground are dropped; masks of the wrong size are an error.
    pub fn new(masks: Vec<BinaryMask>, source: Temporal, dims: (usize, usize)) -> Result<Self> {
        if let Some(m) = masks.iter().find(|m| m.dims() != dims) {
            return Err(Error::shape(format!(
                "mask {:?} does not match image {:?}",
                m.dims(),
                dims
            )));
        }
        let masks = masks.into_iter().filter(|m| m.count() > 0).collect();
        Ok(Self { masks, source })
    }

    pub fn empty(source: Temporal) -> Self {
        Self {
            masks: Vec::new(),
            source,
        }
    }

    pub fn masks(&self) -> &[BinaryMask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn source(&self) -> Temporal {
        self.source
    }
}

/// Adapter bundle handed to the pipeline. Mask generation and embedding are
/// only needed by the semantic-attention variant.
pub struct AdapterSet {
    pub extractor: Box<dyn FeatureExtractor + Send>,
    pub masks: Option<Box<dyn MaskGenerator + Send>>,
    pub embedder: Option<Box<dyn Embedder + Send>>,
}

impl AdapterSet {
    pub fn new(extractor: Box<dyn FeatureExtractor + Send>) -> Self {
        Self {
            extractor,
            masks: None,
            embedder: None,
        }
    }

    pub fn with_masks(mut self, masks: Box<dyn MaskGenerator + Send>) -> Self {
        self.masks = Some(masks);
        self
    }

    pub fn with_embedder(mut self, embedder: Box<dyn Embedder + Send>) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn supports_attention(&self) -> bool {
        self.masks.is_some() && self.embedder.is_some()
    }
}

impl core::fmt::Debug for AdapterSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AdapterSet")
            .field("masks", &self.masks.is_some())
            .field("embedder", &self.embedder.is_some())
            .finish()
    }
}

/// Static description of a backbone's pyramid layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PyramidLayout {
    pub strides: [usize; 3],
    pub channels: [usize; 3],
}

impl Default for PyramidLayout {
    fn default() -> Self {
        Self {
            strides: [8, 16, 32],
            channels: [4, 8, 16],
        }
    }
}

impl PyramidLayout {
    pub fn validate(&self) -> Result<()> {
        if self.strides.contains(&0) || self.channels.contains(&0) {
            return Err(Error::Config(String::from(
                "pyramid strides and channels must be positive",
            )));
        }
        if !(self.strides[0] < self.strides[1] && self.strides[1] < self.strides[2]) {
            return Err(Error::Config(format!(
                "pyramid strides must increase, got {:?}",
                self.strides
            )));
        }
        Ok(())
    }
}
