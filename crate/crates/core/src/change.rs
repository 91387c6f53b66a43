//! Cosine difference maps, attention weighting and global OTSU binarization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feature::FusedFeature;
use crate::psa::AttentionMap;
use crate::raster::BinaryMask;

/// Default histogram resolution for [`otsu_threshold`].
pub const OTSU_BINS: usize = 256;

/// Per-pixel cosine distance in `[0, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    zero_norm_pixels: usize,
}

impl DifferenceMap {
    /// Values are clamped into `[0, 2]`.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "difference buffer has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("difference values must be finite"));
        }
        Ok(Self {
            height,
            width,
            values: values.into_iter().map(|v| v.clamp(0.0, 2.0)).collect(),
            zero_norm_pixels: 0,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Pixels where either feature vector had zero norm (reported as no change).
    pub fn zero_norm_pixels(&self) -> usize {
        self.zero_norm_pixels
    }
}

/// Binary change prediction and the threshold that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeMap {
    mask: BinaryMask,
    /// `None` when thresholding was degenerate and the map is all zero.
    threshold: Option<f64>,
}

impl ChangeMap {
    pub fn new(mask: BinaryMask, threshold: Option<f64>) -> Self {
        Self { mask, threshold }
    }

    pub fn unchanged(height: usize, width: usize) -> Self {
        Self {
            mask: BinaryMask::zeros(height, width),
            threshold: None,
        }
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    pub fn changed_pixels(&self) -> usize {
        self.mask.count()
    }
}

/// One minus the channel-wise cosine similarity of two fused tensors.
///
/// Pixels where either vector has zero norm get a difference of 0.
pub fn cosine_difference(c1: &FusedFeature, c2: &FusedFeature) -> Result<DifferenceMap> {
    let (a, b) = (c1.map(), c2.map());
    if a.dims() != b.dims() || a.channels() != b.channels() {
        return Err(Error::shape(format!(
            "fused features differ: {}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    let plane = a.height() * a.width();
    let mut dot = vec![0.0f64; plane];
    let mut n1 = vec![0.0f64; plane];
    let mut n2 = vec![0.0f64; plane];
    for c in 0..a.channels() {
        let (pa, pb) = (a.channel(c), b.channel(c));
        for i in 0..plane {
            let (x, y) = (f64::from(pa[i]), f64::from(pb[i]));
            dot[i] += x * y;
            n1[i] += x * x;
            n2[i] += y * y;
        }
    }
    let mut zero_norm_pixels = 0;
    let values = (0..plane)
        .map(|i| {
            if n1[i] == 0.0 || n2[i] == 0.0 {
                zero_norm_pixels += 1;
                return 0.0;
            }
            // sqrt(n1 * n2) rather than sqrt(n1) * sqrt(n2): identical vectors give exactly 0
            let cos = dot[i] / libm::sqrt(n1[i] * n2[i]);
            (1.0 - cos).clamp(0.0, 2.0)
        })
        .collect();
    Ok(DifferenceMap {
        height: a.height(),
        width: a.width(),
        values,
        zero_norm_pixels,
    })
}

/// Scales the difference map by the semantic attention weights.
pub fn apply_attention(diff: &DifferenceMap, attention: &AttentionMap) -> Result<DifferenceMap> {
    if diff.dims() != attention.dims() {
        return Err(Error::shape(format!(
            "difference map {:?} vs attention map {:?}",
            diff.dims(),
            attention.dims()
        )));
    }
    let values = diff.values.iter().zip(attention.values()).map(|(d, a)| d * a).collect();
    Ok(DifferenceMap { values, ..*diff })
}

/// Global OTSU threshold over the non-zero entries of `values`.
///
/// The non-zero values are binned into `bins` equal-width bins spanning
/// their own `[min, max]`. The split maximizing between-class variance wins
/// (lowest bin on ties) and the upper edge of its last lower-class bin is
/// returned. Exact zeros are ignored. Fails with [`Error::Degenerate`] when
/// fewer than two distinct non-zero values remain.
pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::argument("OTSU needs at least two histogram bins"));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values.iter().filter(|&&v| v != 0.0) {
        min = min.min(v);
        max = max.max(v);
    }
    if min.partial_cmp(&max) != Some(core::cmp::Ordering::Less) {
        return Err(Error::Degenerate);
    }
    let width = (max - min) / bins as f64;
    let mut hist = vec![0u64; bins];
    for &v in values.iter().filter(|&&v| v != 0.0) {
        hist[bin_of(v, min, width, bins)] += 1;
    }

    let total: u64 = hist.iter().sum();
    let moment: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();
    let mut below = 0u64;
    let mut below_moment = 0u64;
    let mut best: Option<SplitScore> = None;
    let mut best_bin = 0;
    for (t, &h) in hist.iter().enumerate().take(bins - 1) {
        below += h;
        below_moment += t as u64 * h;
        let above = total - below;
        if below == 0 || above == 0 {
            continue;
        }
        let score = SplitScore::new(total, moment, below, below_moment);
        if best.as_ref().is_none_or(|b| score.beats(b)) {
            best = Some(score);
            best_bin = t;
        }
    }
    Ok(min + (best_bin + 1) as f64 * width)
}

/// Between-class variance of a split, scaled by `N^2`, kept as the exact
/// fraction `d^2 / (n0 * n1)` with `d = N * S0 - n0 * S`.
struct SplitScore {
    num: Option<u128>,
    den: u128,
    approx: f64,
}

impl SplitScore {
    fn new(total: u64, moment: u64, below: u64, below_moment: u64) -> Self {
        let d = (i128::from(total) * i128::from(below_moment) - i128::from(below) * i128::from(moment)).unsigned_abs();
        let den = u128::from(below) * u128::from(total - below);
        Self {
            num: d.checked_mul(d),
            den,
            approx: (d as f64) * (d as f64) / den as f64,
        }
    }

    /// Strictly greater; exact unless the cross products overflow.
    fn beats(&self, other: &Self) -> bool {
        let exact = self
            .num
            .zip(other.num)
            .and_then(|(a, b)| Some((a.checked_mul(other.den)?, b.checked_mul(self.den)?)));
        match exact {
            Some((lhs, rhs)) => lhs > rhs,
            None => self.approx > other.approx,
        }
    }
}

/// Histogram bin of `v` for bins of `width` starting at `min`; the maximum lands in the last bin.
#[inline]
pub fn bin_of(v: f64, min: f64, width: f64, bins: usize) -> usize {
    (((v - min) / width) as usize).min(bins - 1)
}

/// Marks pixels whose difference strictly exceeds `threshold`.
pub fn binarize(diff: &DifferenceMap, threshold: f64) -> ChangeMap {
    let (h, w) = diff.dims();
    let data = diff.values.iter().map(|&v| u8::from(v > threshold)).collect();
    let mask = BinaryMask::new(h, w, data).expect("binary values with matching length");
    ChangeMap::new(mask, Some(threshold))
}
