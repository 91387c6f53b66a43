//! Piecewise semantic attention.
//!
//! Every object mask of both acquisitions is cropped into a patch and scored
//! against two groups of text prompts (building-related and not). The
//! softmax mass on the building group becomes that mask's building
//! probability, which is painted into a per-acquisition score map. The two
//! maps are added and remapped: sums of at least 0.5 give full weight,
//! smaller positive sums are doubled, uncovered pixels stay at 0.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::adapters::{Embedder, Embedding, MaskGenerator, SegmentMaskSet};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImagePair, RgbImage, Temporal};

pub const DEFAULT_BUILDING_TERMS: [&str; 7] = [
    "roof",
    "rooftop",
    "building",
    "house",
    "apartment",
    "residential",
    "factory",
];

pub const DEFAULT_NONBUILDING_TERMS: [&str; 7] = [
    "baseball",
    "diamond",
    "bareland",
    "swimming pool",
    "basketball court",
    "roundabout",
    "playground",
];

pub const DEFAULT_TEMPLATE: &str = "a satellite photo of a {term}";
pub const DEFAULT_TEMPERATURE: f64 = 100.0;
/// Patches narrower or shorter than this are edge-padded up to it.
pub const MIN_PATCH_SIDE: usize = 16;

/// Building and non-building prompt vocabularies.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PromptGroups {
    building: Vec<String>,
    nonbuilding: Vec<String>,
}

impl Default for PromptGroups {
    fn default() -> Self {
        Self {
            building: DEFAULT_BUILDING_TERMS.iter().map(|s| String::from(*s)).collect(),
            nonbuilding: DEFAULT_NONBUILDING_TERMS.iter().map(|s| String::from(*s)).collect(),
        }
    }
}

impl PromptGroups {
    pub fn new(building: Vec<String>, nonbuilding: Vec<String>) -> Result<Self> {
        if building.is_empty() || nonbuilding.is_empty() {
            return Err(Error::argument("both prompt groups need at least one term"));
        }
        if let Some(t) = building.iter().chain(&nonbuilding).find(|t| t.trim().is_empty()) {
            return Err(Error::argument(format!("blank prompt term {t:?}")));
        }
        if let Some(t) = building.iter().find(|t| nonbuilding.contains(t)) {
            return Err(Error::argument(format!("term {t:?} appears in both prompt groups")));
        }
        Ok(Self { building, nonbuilding })
    }

    pub fn building(&self) -> &[String] {
        &self.building
    }

    pub fn nonbuilding(&self) -> &[String] {
        &self.nonbuilding
    }

    /// Building terms first, then non-building.
    pub fn all_terms(&self) -> impl Iterator<Item = &String> {
        self.building.iter().chain(&self.nonbuilding)
    }
}

/// How a mask becomes an image patch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PatchMode {
    /// Bounding-box crop, surroundings kept.
    #[default]
    BoundingBox,
    /// Bounding-box crop with pixels outside the mask blacked out.
    Masked,
}

/// How the two per-acquisition score maps are merged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Combine {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PsaOptions {
    /// Sentence template with a `{term}` placeholder; `None` embeds bare terms.
    pub template: Option<String>,
    /// Multiplier applied to cosine similarities before the softmax.
    pub temperature: f64,
    pub patch_mode: PatchMode,
    pub combine: Combine,
}

impl Default for PsaOptions {
    fn default() -> Self {
        Self {
            template: Some(String::from(DEFAULT_TEMPLATE)),
            temperature: DEFAULT_TEMPERATURE,
            patch_mode: PatchMode::default(),
            combine: Combine::default(),
        }
    }
}

impl PsaOptions {
    pub fn render(&self, term: &str) -> String {
        match &self.template {
            Some(t) => t.replace("{term}", term),
            None => String::from(term),
        }
    }
}

/// Prompt groups together with their text embeddings.
#[derive(Debug, Clone)]
pub struct PromptBank {
    n_building: usize,
    texts: Vec<Embedding>,
}

impl PromptBank {
    pub fn embed(prompts: &PromptGroups, options: &PsaOptions, embedder: &mut dyn Embedder) -> Result<Self> {
        let sentences: Vec<String> = prompts.all_terms().map(|t| options.render(t)).collect();
        let texts = embedder.embed_texts(&sentences)?;
        if texts.len() != sentences.len() {
            return Err(Error::inference(
                "embedder",
                format!("{} texts in, {} embeddings out", sentences.len(), texts.len()),
            ));
        }
        Ok(Self {
            n_building: prompts.building().len(),
            texts,
        })
    }

    pub fn n_building(&self) -> usize {
        self.n_building
    }

    pub fn texts(&self) -> &[Embedding] {
        &self.texts
    }
}

/// Building probability of one mask.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PatchScore {
    pub mask_index: usize,
    pub p_bld: f64,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Softmax mass on the first `n_building` classes of `temperature * similarities`.
///
/// Computed as `S_b / (S_b + S_n)` from the group sums of the shifted
/// exponentials, so groups with equal mass give exactly one half.
pub fn building_probability(similarities: &[f64], n_building: usize, temperature: f64) -> f64 {
    let logits: Vec<f64> = similarities.iter().map(|s| s * temperature).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mass = |ls: &[f64]| ls.iter().map(|&l| libm::exp(l - max)).sum::<f64>();
    let (bld, other) = logits.split_at(n_building.min(logits.len()));
    let (sb, sn) = (mass(bld), mass(other));
    (sb / (sb + sn)).clamp(0.0, 1.0)
}

/// Crops the mask's bounding box from `image`, padding short sides to
/// [`MIN_PATCH_SIDE`] by edge replication (split evenly, extra row/column after).
pub fn extract_patch(image: &RgbImage, mask: &BinaryMask, mode: PatchMode) -> Result<RgbImage> {
    if image.dims() != mask.dims() {
        return Err(Error::shape(format!(
            "mask {:?} does not match image {:?}",
            mask.dims(),
            image.dims()
        )));
    }
    let (top, left, bottom, right) = mask
        .bounding_box()
        .ok_or_else(|| Error::argument("cannot extract a patch from an empty mask"))?;
    let (bh, bw) = (bottom - top, right - left);
    let (ph, pw) = (bh.max(MIN_PATCH_SIDE), bw.max(MIN_PATCH_SIDE));
    let (pad_top, pad_left) = ((ph - bh) / 2, (pw - bw) / 2);
    Ok(RgbImage::from_fn(ph, pw, |y, x| {
        let sy = top + y.saturating_sub(pad_top).min(bh - 1);
        let sx = left + x.saturating_sub(pad_left).min(bw - 1);
        match mode {
            PatchMode::Masked if !mask.get(sy, sx) => [0, 0, 0],
            _ => image.pixel(sy, sx),
        }
    }))
}

/// Scores one patch against the prompt bank.
pub fn classify_patch(
    patch: &RgbImage,
    bank: &PromptBank,
    embedder: &mut dyn Embedder,
    temperature: f64,
    mask_index: usize,
) -> Result<PatchScore> {
    let image = embedder.embed_image(patch)?;
    let sims = bank.texts.iter().map(|t| image.cosine(t)).collect::<Result<Vec<_>>>()?;
    Ok(PatchScore {
        mask_index,
        p_bld: building_probability(&sims, bank.n_building, temperature),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Single(Temporal),
    Combined,
}

/// Per-pixel building score; zero wherever no mask reaches.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    kind: ScoreKind,
}

impl ScoreMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape("score buffer length does not match dims"));
        }
        let hi = match kind {
            ScoreKind::Single(_) => 1.0,
            ScoreKind::Combined => 2.0,
        };
        if values.iter().any(|v| !(0.0..=hi).contains(v)) {
            return Err(Error::argument(format!("scores must lie in [0, {hi}]")));
        }
        Ok(Self {
            height,
            width,
            values,
            kind,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }
}

/// Paints each mask with its score; overlaps keep the larger score.
pub fn rasterize_scores(masks: &SegmentMaskSet, scores: &[PatchScore], dims: (usize, usize)) -> Result<ScoreMap> {
    if masks.len() != scores.len() {
        return Err(Error::argument(format!(
            "{} masks but {} scores",
            masks.len(),
            scores.len()
        )));
    }
    let (h, w) = dims;
    let mut values = vec![0.0f64; h * w];
    for score in scores {
        let mask = masks
            .masks()
            .get(score.mask_index)
            .ok_or_else(|| Error::argument(format!("score for missing mask {}", score.mask_index)))?;
        if mask.dims() != dims {
            return Err(Error::shape("mask does not match score map dims"));
        }
        let p = score.p_bld.clamp(0.0, 1.0);
        for (v, &m) in values.iter_mut().zip(mask.as_slice()) {
            if m != 0 && p > *v {
                *v = p;
            }
        }
    }
    ScoreMap::new(h, w, values, ScoreKind::Single(masks.source()))
}

pub fn combine_bitemporal(s1: &ScoreMap, s2: &ScoreMap, mode: Combine) -> Result<ScoreMap> {
    if s1.dims() != s2.dims() {
        return Err(Error::shape(format!(
            "score maps differ: {:?} vs {:?}",
            s1.dims(),
            s2.dims()
        )));
    }
    if s1.kind == ScoreKind::Combined || s2.kind == ScoreKind::Combined {
        return Err(Error::argument("combining needs two single-acquisition score maps"));
    }
    let scale = match mode {
        Combine::Sum => 1.0,
        Combine::Mean => 0.5,
    };
    let values = s1.values.iter().zip(&s2.values).map(|(a, b)| (a + b) * scale).collect();
    ScoreMap::new(s1.height, s1.width, values, ScoreKind::Combined)
}

/// The piecewise weight for one combined score.
#[inline]
pub fn remap_value(p: f64) -> f64 {
    if p >= 0.5 {
        1.0
    } else if p > 0.0 {
        p * 2.0
    } else {
        0.0
    }
}

/// Per-pixel semantic weight in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape("attention buffer length does not match dims"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::argument("attention weights must lie in [0, 1]"));
        }
        Ok(Self { height, width, values })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn piecewise_remap(combined: &ScoreMap) -> AttentionMap {
    AttentionMap {
        height: combined.height,
        width: combined.width,
        values: combined.values.iter().map(|&p| remap_value(p)).collect(),
    }
}

/// Counters reported by [`build_psa`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsaStats {
    pub masks_t1: usize,
    pub masks_t2: usize,
    pub patches: usize,
}

/// Masks, patches and scores for one acquisition.
pub fn score_image(
    image: &RgbImage,
    source: Temporal,
    generator: &mut dyn MaskGenerator,
    embedder: &mut dyn Embedder,
    bank: &PromptBank,
    options: &PsaOptions,
) -> Result<(ScoreMap, usize)> {
    let masks = SegmentMaskSet::new(generator.generate_masks(image)?, source, image.dims())?;
    let mut scores = Vec::with_capacity(masks.len());
    for (i, mask) in masks.masks().iter().enumerate() {
        let patch = extract_patch(image, mask, options.patch_mode)?;
        scores.push(classify_patch(&patch, bank, embedder, options.temperature, i)?);
    }
    Ok((rasterize_scores(&masks, &scores, image.dims())?, masks.len()))
}

/// End-to-end attention map for a bi-temporal pair.
pub fn build_psa(
    pair: &ImagePair,
    generator: &mut dyn MaskGenerator,
    embedder: &mut dyn Embedder,
    prompts: &PromptGroups,
    options: &PsaOptions,
) -> Result<(AttentionMap, PsaStats)> {
    let bank = PromptBank::embed(prompts, options, embedder)?;
    let (s1, n1) = score_image(pair.t1(), Temporal::First, generator, embedder, &bank, options)?;
    let (s2, n2) = score_image(pair.t2(), Temporal::Second, generator, embedder, &bank, options)?;
    let combined = combine_bitemporal(&s1, &s2, options.combine)?;
    let stats = PsaStats {
        masks_t1: n1,
        masks_t2: n2,
        patches: n1 + n2,
    };
    Ok((piecewise_remap(&combined), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn terms(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn default_prompts_are_valid() {
        let p = PromptGroups::default();
        assert_eq!(p.building().len(), 7);
        assert_eq!(p.nonbuilding().len(), 7);
        assert!(PromptGroups::new(p.building().to_vec(), p.nonbuilding().to_vec()).is_ok());
    }

    #[test]
    fn prompt_groups_reject_overlap_and_empty() {
        assert!(PromptGroups::new(terms(&["roof"]), terms(&["roof"])).is_err());
        assert!(PromptGroups::new(terms(&[]), terms(&["pool"])).is_err());
        assert!(PromptGroups::new(terms(&["roof"]), terms(&[" "])).is_err());
    }

    #[test]
    fn template_rendering() {
        let o = PsaOptions::default();
        assert_eq!(o.render("roof"), "a satellite photo of a roof");
        let raw = PsaOptions {
            template: None,
            ..PsaOptions::default()
        };
        assert_eq!(raw.render("roof"), "roof");
    }

    #[test]
    fn patch_of_full_mask_is_whole_image() {
        let img = RgbImage::from_fn(20, 24, |y, x| [y as u8, x as u8, 7]);
        let m = BinaryMask::from_fn(20, 24, |_, _| true);
        assert_eq!(extract_patch(&img, &m, PatchMode::BoundingBox).unwrap(), img);
    }

    #[test]
    fn single_pixel_patch_is_padded() {
        let img = RgbImage::from_fn(32, 32, |y, x| [y as u8, x as u8, 0]);
        let m = BinaryMask::from_fn(32, 32, |y, x| y == 5 && x == 9);
        let p = extract_patch(&img, &m, PatchMode::BoundingBox).unwrap();
        assert_eq!(p.dims(), (16, 16));
        assert!(p.as_bytes().chunks(3).all(|px| px == [5, 9, 0]));
    }

    #[test]
    fn rectangular_patch_pads_short_side() {
        let img = RgbImage::from_fn(40, 40, |y, x| [y as u8, x as u8, 0]);
        let m = BinaryMask::from_fn(40, 40, |y, x| (10..20).contains(&y) && (5..25).contains(&x));
        let p = extract_patch(&img, &m, PatchMode::BoundingBox).unwrap();
        assert_eq!(p.dims(), (16, 20));
        // three replicated rows above, three below
        assert_eq!(p.pixel(0, 0), [10, 5, 0]);
        assert_eq!(p.pixel(3, 0), [10, 5, 0]);
        assert_eq!(p.pixel(4, 0), [11, 5, 0]);
        assert_eq!(p.pixel(15, 19), [19, 24, 0]);
    }

    #[test]
    fn masked_patch_blanks_outside() {
        let img = RgbImage::filled(32, 32, [9, 9, 9]);
        let m = BinaryMask::from_fn(32, 32, |y, x| (4..20).contains(&y) && (4..20).contains(&x) && x >= y);
        let p = extract_patch(&img, &m, PatchMode::Masked).unwrap();
        assert_eq!(p.pixel(0, 15), [9, 9, 9]);
        assert_eq!(p.pixel(15, 0), [0, 0, 0]);
    }

    #[test]
    fn empty_mask_has_no_patch() {
        let img = RgbImage::filled(32, 32, [0; 3]);
        assert!(extract_patch(&img, &BinaryMask::zeros(32, 32), PatchMode::BoundingBox).is_err());
    }

    #[test]
    fn equal_similarities_split_evenly() {
        assert_eq!(building_probability(&[0.3; 14], 7, 100.0), 0.5);
        assert_eq!(building_probability(&[0.1, 0.1], 1, 100.0), 0.5);
    }

    #[test]
    fn strong_building_similarity_dominates() {
        let mut sims = vec![10.0; 7];
        sims.extend(vec![-10.0; 7]);
        assert!((building_probability(&sims, 7, 1.0) - 1.0).abs() < 1e-4);
    }

    fn set(masks: Vec<BinaryMask>) -> SegmentMaskSet {
        let dims = masks.first().map(|m| m.dims()).unwrap_or((4, 4));
        SegmentMaskSet::new(masks, Temporal::First, dims).unwrap()
    }

    #[test]
    fn rasterize_cases() {
        let empty = rasterize_scores(&SegmentMaskSet::empty(Temporal::First), &[], (4, 4)).unwrap();
        assert!(empty.values().iter().all(|&v| v == 0.0));

        let a = BinaryMask::from_fn(4, 4, |y, _| y < 2);
        let one = rasterize_scores(
            &set(vec![a.clone()]),
            &[PatchScore {
                mask_index: 0,
                p_bld: 0.7,
            }],
            (4, 4),
        )
        .unwrap();
        assert_eq!(&one.values()[..8], &[0.7; 8]);
        assert_eq!(&one.values()[8..], &[0.0; 8]);

        let b = BinaryMask::from_fn(4, 4, |y, _| (1..3).contains(&y));
        let scores = [
            PatchScore {
                mask_index: 1,
                p_bld: 0.9,
            },
            PatchScore {
                mask_index: 0,
                p_bld: 0.3,
            },
        ];
        let two = rasterize_scores(&set(vec![a, b]), &scores, (4, 4)).unwrap();
        for y in 0..4 {
            let expect = match y {
                0 => 0.3,
                1 | 2 => 0.9,
                _ => 0.0,
            };
            assert_eq!(two.values()[y * 4], expect);
        }
        assert!(rasterize_scores(&set(vec![BinaryMask::from_fn(4, 4, |_, _| true)]), &[], (4, 4)).is_err());
    }

    fn single(values: Vec<f64>, t: Temporal) -> ScoreMap {
        let n = values.len();
        ScoreMap::new(1, n, values, ScoreKind::Single(t)).unwrap()
    }

    #[test]
    fn combine_adds() {
        let s1 = single(vec![0.0, 0.3, 0.8], Temporal::First);
        let s2 = single(vec![0.5, 0.4, 0.9], Temporal::Second);
        let c = combine_bitemporal(&s1, &s2, Combine::Sum).unwrap();
        assert_eq!(c.values()[0], 0.5);
        assert!((c.values()[1] - 0.7).abs() < 1e-12);
        assert!((c.values()[2] - 1.7).abs() < 1e-12);
        let m = combine_bitemporal(&s1, &s2, Combine::Mean).unwrap();
        assert!((m.values()[2] - 0.85).abs() < 1e-12);
        assert!(combine_bitemporal(&c, &s2, Combine::Sum).is_err());
    }

    #[test]
    fn remap_branches() {
        assert_eq!(remap_value(0.6), 1.0);
        assert_eq!(remap_value(0.5), 1.0);
        assert_eq!(remap_value(0.25), 0.5);
        assert_eq!(remap_value(0.0), 0.0);
        assert_eq!(remap_value(1.7), 1.0);
    }

    proptest! {
        #[test]
        fn remap_is_monotone_and_bounded(a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(remap_value(lo) <= remap_value(hi));
            prop_assert!((0.0..=1.0).contains(&remap_value(a)));
        }

        #[test]
        fn term_order_does_not_matter(
            sims in proptest::collection::vec(-1.0f64..1.0, 6),
            rot in 0usize..3,
        ) {
            let p = building_probability(&sims, 3, 100.0);
            let mut b = sims[..3].to_vec();
            let mut n = sims[3..].to_vec();
            b.rotate_left(rot);
            n.reverse();
            b.extend(n);
            prop_assert!((p - building_probability(&b, 3, 100.0)).abs() < 1e-6);
        }
    }
}
