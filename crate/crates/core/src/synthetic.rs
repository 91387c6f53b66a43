//! Weight-free stand-ins for the pretrained models.
//!
//! * Features: block means of the RGB values over each stride's cells
//!   (box-filter downsampling), mixed into channels by seeded affine maps.
//! * Masks: 4-connected components of pixels whose brightest channel exceeds
//!   the image's mean brightness by a margin.
//! * Embeddings: a toy two-axis semantic space. Texts mentioning a building
//!   word point along the first axis, non-building words along the second.
//!   Image patches are placed between the two axes by their red-versus-blue
//!   balance, so red objects read as buildings and blue ones do not. A
//!   seeded hash of the input fills the remaining dimensions.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::adapters::{
    check_terms, AdapterSet, Embedder, Embedding, FeatureExtractor, MaskGenerator, Modality, PyramidLayout,
};
use crate::error::Result;
use crate::feature::{stage_side, FeatureMap, FeaturePyramid};
use crate::psa::{DEFAULT_BUILDING_TERMS, DEFAULT_NONBUILDING_TERMS};
use crate::raster::{check_min_size, BinaryMask, RgbImage};

/// Embedding width of [`SyntheticEmbedder`].
pub const SYNTHETIC_EMBED_DIM: usize = 64;

fn seeded_rng(seed: u64, tag: &[u8], payload: &[u8]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"scm-synthetic");
    hasher.update(seed.to_le_bytes());
    hasher.update((tag.len() as u64).to_le_bytes());
    hasher.update(tag);
    hasher.update(payload);
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Bundle of all three synthetic adapters with the default layout.
pub fn synthetic_backbone(seed: u64) -> AdapterSet {
    synthetic_backbone_with(seed, PyramidLayout::default())
}

pub fn synthetic_backbone_with(seed: u64, layout: PyramidLayout) -> AdapterSet {
    AdapterSet::new(Box::new(SyntheticExtractor::new(seed, layout)))
        .with_masks(Box::new(SyntheticMaskGenerator::default()))
        .with_embedder(Box::new(SyntheticEmbedder::new(seed)))
}

/// Box-filter pyramid with seeded channel mixing.
#[derive(Debug, Clone)]
pub struct SyntheticExtractor {
    layout: PyramidLayout,
    /// Per level, per channel: `[w_r, w_g, w_b, bias]`.
    mixing: [Vec<[f32; 4]>; 3],
}

impl SyntheticExtractor {
    pub fn new(seed: u64, layout: PyramidLayout) -> Self {
        let mixing = [0usize, 1, 2].map(|level| {
            let mut rng = seeded_rng(seed, b"mixing", &[level as u8]);
            (0..layout.channels[level])
                .map(|_| {
                    [
                        rng.random_range(-1.0f32..1.0),
                        rng.random_range(-1.0f32..1.0),
                        rng.random_range(-1.0f32..1.0),
                        rng.random_range(-0.5f32..0.5),
                    ]
                })
                .collect()
        });
        Self { layout, mixing }
    }

    pub fn layout(&self) -> PyramidLayout {
        self.layout
    }
}

/// Mean RGB (scaled to `[0, 1]`) of each `stride x stride` cell; edge cells
/// average only the pixels they contain.
pub fn block_means(image: &RgbImage, stride: usize) -> (usize, usize, Vec<[f64; 3]>) {
    let (h, w) = image.dims();
    let (bh, bw) = (stage_side(h, stride), stage_side(w, stride));
    let mut sums = vec![[0.0f64; 3]; bh * bw];
    let mut counts = vec![0u32; bh * bw];
    for y in 0..h {
        for x in 0..w {
            let cell = (y / stride) * bw + x / stride;
            let p = image.pixel(y, x);
            for k in 0..3 {
                sums[cell][k] += f64::from(p[k]);
            }
            counts[cell] += 1;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= 255.0 * f64::from(n);
        }
    }
    (bh, bw, sums)
}

impl FeatureExtractor for SyntheticExtractor {
    fn extract_pyramid(&mut self, image: &RgbImage) -> Result<FeaturePyramid> {
        check_min_size(image)?;
        self.layout.validate()?;
        let levels = [0usize, 1, 2].map(|level| {
            let (bh, bw, means) = block_means(image, self.layout.strides[level]);
            let mix = &self.mixing[level];
            FeatureMap::from_fn(bh, bw, mix.len(), |c, y, x| {
                let m = means[y * bw + x];
                let [wr, wg, wb, bias] = mix[c];
                (f64::from(wr) * m[0] + f64::from(wg) * m[1] + f64::from(wb) * m[2] + f64::from(bias)) as f32
            })
        });
        FeaturePyramid::new(levels, self.layout.strides, image.dims())
    }
}

/// Bright-object connected components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticMaskGenerator {
    /// How far above the mean brightness a pixel must be to count as object.
    pub margin: f64,
    /// Components smaller than this are discarded.
    pub min_area: usize,
}

impl Default for SyntheticMaskGenerator {
    fn default() -> Self {
        Self {
            margin: 16.0,
            min_area: 1,
        }
    }
}

impl SyntheticMaskGenerator {
    pub fn foreground(&self, image: &RgbImage) -> BinaryMask {
        let (h, w) = image.dims();
        let brightness = |y: usize, x: usize| {
            let p = image.pixel(y, x);
            f64::from(p[0].max(p[1]).max(p[2]))
        };
        let mut total = 0.0;
        for y in 0..h {
            for x in 0..w {
                total += brightness(y, x);
            }
        }
        let cut = total / (h * w).max(1) as f64 + self.margin;
        BinaryMask::from_fn(h, w, |y, x| brightness(y, x) > cut)
    }
}

/// 4-connected components of `fg`, ordered by their first pixel in raster order.
pub fn connected_components(fg: &BinaryMask) -> Vec<BinaryMask> {
    let (h, w) = fg.dims();
    let mut label = vec![usize::MAX; h * w];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if fg.as_slice()[start] == 0 || label[start] != usize::MAX {
            continue;
        }
        let id = components.len();
        let mut mask = BinaryMask::zeros(h, w);
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            mask.set(y, x, true);
            let mut visit = |j: usize| {
                if fg.as_slice()[j] != 0 && label[j] == usize::MAX {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
        }
        components.push(mask);
    }
    components
}

impl MaskGenerator for SyntheticMaskGenerator {
    fn generate_masks(&mut self, image: &RgbImage) -> Result<Vec<BinaryMask>> {
        let fg = self.foreground(image);
        Ok(connected_components(&fg)
            .into_iter()
            .filter(|m| m.count() >= self.min_area)
            .collect())
    }
}

/// Two-axis toy joint embedder; see the module docs.
#[derive(Debug, Clone)]
pub struct SyntheticEmbedder {
    seed: u64,
    building_words: Vec<String>,
    nonbuilding_words: Vec<String>,
}

impl SyntheticEmbedder {
    /// Uses the default building / non-building vocabularies.
    pub fn new(seed: u64) -> Self {
        Self::with_vocabulary(
            seed,
            DEFAULT_BUILDING_TERMS.iter().map(|s| String::from(*s)).collect(),
            DEFAULT_NONBUILDING_TERMS.iter().map(|s| String::from(*s)).collect(),
        )
    }

    pub fn with_vocabulary(seed: u64, building_words: Vec<String>, nonbuilding_words: Vec<String>) -> Self {
        Self {
            seed,
            building_words,
            nonbuilding_words,
        }
    }

    fn noise(&self, tag: &[u8], payload: &[u8], scale: f32, out: &mut [f32]) {
        let mut rng = seeded_rng(self.seed, tag, payload);
        let tail = &mut out[2..];
        for v in tail.iter_mut() {
            *v = rng.random_range(-1.0f32..1.0);
        }
        let norm = libm::sqrtf(tail.iter().map(|v| v * v).sum::<f32>());
        if norm > 0.0 {
            tail.iter_mut().for_each(|v| *v *= scale / norm);
        }
    }

    /// Red-minus-blue balance of a patch in `[-1, 1]`.
    pub fn redness(patch: &RgbImage) -> f64 {
        let n = (patch.height() * patch.width()).max(1) as f64;
        let mut diff = 0.0;
        for px in patch.as_bytes().chunks_exact(3) {
            diff += f64::from(px[0]) - f64::from(px[2]);
        }
        diff / (255.0 * n)
    }
}

fn normalized(mut v: Vec<f32>) -> Vec<f32> {
    let norm = libm::sqrtf(v.iter().map(|x| x * x).sum::<f32>());
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

impl Embedder for SyntheticEmbedder {
    fn embed_image(&mut self, patch: &RgbImage) -> Result<Embedding> {
        if patch.height() == 0 || patch.width() == 0 {
            return Err(crate::error::Error::argument("empty patch"));
        }
        let mut v = vec![0.0f32; SYNTHETIC_EMBED_DIM];
        let s = Self::redness(patch) as f32;
        v[0] = (1.0 + s) / 2.0;
        v[1] = (1.0 - s) / 2.0;
        let mut payload = Vec::with_capacity(patch.as_bytes().len() + 16);
        payload.extend_from_slice(&(patch.height() as u64).to_le_bytes());
        payload.extend_from_slice(&(patch.width() as u64).to_le_bytes());
        payload.extend_from_slice(patch.as_bytes());
        self.noise(b"image", &payload, 0.1, &mut v);
        Embedding::new(normalized(v), Modality::Image)
    }

    fn embed_texts(&mut self, texts: &[String]) -> Result<Vec<Embedding>> {
        check_terms(texts)?;
        texts
            .iter()
            .map(|text| {
                let lower = text.to_lowercase();
                let mut v = vec![0.0f32; SYNTHETIC_EMBED_DIM];
                if self.building_words.iter().any(|w| lower.contains(w.as_str())) {
                    v[0] = 1.0;
                }
                if self.nonbuilding_words.iter().any(|w| lower.contains(w.as_str())) {
                    v[1] = 1.0;
                }
                self.noise(b"text", text.as_bytes(), 0.35, &mut v);
                Embedding::new(normalized(v), Modality::Text)
            })
            .collect()
    }
}
