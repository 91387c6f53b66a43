//! Per-pair change detection for the three pipeline variants.

use alloc::format;
use alloc::string::String;

use crate::adapters::AdapterSet;
use crate::change::{
    apply_attention, binarize, cosine_difference, otsu_threshold, ChangeMap, DifferenceMap, OTSU_BINS,
};
use crate::error::{Error, Result};
use crate::feature::FusedFeature;
use crate::psa::{build_psa, PromptGroups, PsaOptions};
use crate::raster::ImagePair;
use crate::rff::{fuse_base, fuse_top_down, FusionOptions};

/// Which parts of the method are switched on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Variant {
    /// Raw levels upsampled and concatenated.
    Base,
    /// Recalibrated top-down fusion.
    Rff,
    /// Fusion plus semantic attention.
    #[default]
    Scm,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Rff => "rff",
            Variant::Scm => "scm",
        }
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "rff" | "base+rff" => Ok(Variant::Rff),
            "scm" => Ok(Variant::Scm),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub variant: Variant,
    pub fusion: FusionOptions,
    pub otsu_bins: usize,
    /// Fixed threshold replacing OTSU.
    pub threshold: Option<f64>,
    pub psa: PsaOptions,
    pub prompts: PromptGroups,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            variant: Variant::default(),
            fusion: FusionOptions::default(),
            otsu_bins: OTSU_BINS,
            threshold: None,
            psa: PsaOptions::default(),
            prompts: PromptGroups::default(),
        }
    }
}

impl PipelineConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ThresholdSource {
    #[default]
    Otsu,
    Override,
    /// Nothing to threshold; the change map is empty.
    Degenerate,
}

/// What happened while processing one pair.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    pub tile_id: String,
    pub variant: Variant,
    pub threshold: Option<f64>,
    pub threshold_source: ThresholdSource,
    pub zero_norm_pixels: usize,
    pub nonzero_pixels: usize,
    pub changed_pixels: usize,
    pub masks_t1: usize,
    pub masks_t2: usize,
    pub patches: usize,
}

/// Both fused tensors for a pair under the chosen variant.
pub fn fuse_pair(
    pair: &ImagePair,
    adapters: &mut AdapterSet,
    cfg: &PipelineConfig,
) -> Result<(FusedFeature, FusedFeature)> {
    let p1 = adapters.extractor.extract_pyramid(pair.t1())?;
    let p2 = adapters.extractor.extract_pyramid(pair.t2())?;
    match cfg.variant {
        Variant::Base => Ok((
            fuse_base(&p1, cfg.fusion.interpolation)?,
            fuse_base(&p2, cfg.fusion.interpolation)?,
        )),
        Variant::Rff | Variant::Scm => Ok((fuse_top_down(&p1, cfg.fusion)?, fuse_top_down(&p2, cfg.fusion)?)),
    }
}

/// Difference map after optional attention, plus the diagnostics gathered so far.
pub fn difference_for_pair(
    pair: &ImagePair,
    adapters: &mut AdapterSet,
    cfg: &PipelineConfig,
) -> Result<(DifferenceMap, Diagnostics)> {
    let (c1, c2) = fuse_pair(pair, adapters, cfg)?;
    let mut diff = cosine_difference(&c1, &c2)?;
    let mut diag = Diagnostics {
        tile_id: String::from(pair.id()),
        variant: cfg.variant,
        zero_norm_pixels: diff.zero_norm_pixels(),
        ..Diagnostics::default()
    };
    if cfg.variant == Variant::Scm {
        let (Some(masks), Some(embedder)) = (adapters.masks.as_deref_mut(), adapters.embedder.as_deref_mut()) else {
            return Err(Error::Config(String::from(
                "the scm variant needs a mask generator and an embedder",
            )));
        };
        let (attention, stats) = build_psa(pair, masks, embedder, &cfg.prompts, &cfg.psa)?;
        diff = apply_attention(&diff, &attention)?;
        diag.masks_t1 = stats.masks_t1;
        diag.masks_t2 = stats.masks_t2;
        diag.patches = stats.patches;
    }
    diag.nonzero_pixels = diff.values().iter().filter(|&&v| v != 0.0).count();
    Ok((diff, diag))
}

/// Runs the full variant pipeline on one pair.
///
/// Degenerate thresholding (no two distinct non-zero differences) yields an
/// all-zero map with [`ThresholdSource::Degenerate`].
pub fn run_pair(pair: &ImagePair, adapters: &mut AdapterSet, cfg: &PipelineConfig) -> Result<(ChangeMap, Diagnostics)> {
    let (diff, mut diag) = difference_for_pair(pair, adapters, cfg)?;
    let map = match cfg.threshold {
        Some(t) => {
            diag.threshold_source = ThresholdSource::Override;
            binarize(&diff, t)
        }
        None => match otsu_threshold(diff.values(), cfg.otsu_bins) {
            Ok(t) => binarize(&diff, t),
            Err(Error::Degenerate) => {
                diag.threshold_source = ThresholdSource::Degenerate;
                let (h, w) = diff.dims();
                ChangeMap::unchanged(h, w)
            }
            Err(e) => return Err(e),
        },
    };
    diag.threshold = map.threshold();
    diag.changed_pixels = map.changed_pixels();
    Ok((map, diag))
}
