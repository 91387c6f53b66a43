//! Recalibrated feature fusion.
//!
//! Each pyramid level is reweighted channel-wise by its own channel means,
//! then merged top-down: the coarser map is interpolated to the finer grid,
//! its channels are sampled equidistantly down to the finer channel count,
//! and the two are added. The merged levels are finally interpolated to the
//! input resolution and concatenated as `[level 3 | level 4 | level 5]`.
//!
//! Everything here is parameter-free and pure.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::feature::{FeatureMap, FeaturePyramid, FusedFeature};

/// Channel weight used by [`recalibrate`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Recalibration {
    /// Plain arithmetic mean of the channel.
    #[default]
    RawMean,
    /// Mean of absolute values.
    AbsMean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Interpolation {
    /// Bilinear with aligned corners.
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FusionOptions {
    pub recalibration: Recalibration,
    pub interpolation: Interpolation,
}

/// Per-channel weights (`1 x 1 x C`) for a level.
pub fn channel_weights(level: &FeatureMap, strategy: Recalibration) -> Vec<f32> {
    let n = (level.height() * level.width()) as f64;
    (0..level.channels())
        .map(|c| {
            let plane = level.channel(c);
            let sum: f64 = match strategy {
                Recalibration::RawMean => plane.iter().map(|&v| f64::from(v)).sum(),
                Recalibration::AbsMean => plane.iter().map(|&v| f64::from(v).abs()).sum(),
            };
            if n > 0.0 {
                (sum / n) as f32
            } else {
                0.0
            }
        })
        .collect()
}

/// Multiplies every channel by its own weight from [`channel_weights`].
pub fn recalibrate(level: &FeatureMap, strategy: Recalibration) -> FeatureMap {
    let weights = channel_weights(level, strategy);
    let mut out = level.clone();
    for (c, w) in weights.into_iter().enumerate() {
        out.channel_mut(c).iter_mut().for_each(|v| *v *= w);
    }
    out
}

/// Source channel picked for output channel `k` when sampling `high` channels down to `low`.
#[inline]
pub fn resample_index(k: usize, high: usize, low: usize) -> usize {
    k * high / low
}

/// Keeps `target` channels taken at equidistant indices `floor(k * C / target)`.
pub fn resample_channels(src: &FeatureMap, target: usize) -> Result<FeatureMap> {
    let high = src.channels();
    if target == 0 || target > high {
        return Err(Error::argument(format!("cannot resample {high} channels to {target}")));
    }
    let mut data = Vec::with_capacity(src.height() * src.width() * target);
    for k in 0..target {
        data.extend_from_slice(src.channel(resample_index(k, high, target)));
    }
    FeatureMap::new(src.height(), src.width(), target, data)
}

/// Source coordinate table for an aligned-corners resize of one axis.
fn axis_map(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    (0..dst)
        .map(|i| {
            if src == 1 || dst == 1 {
                return (0, 0, 0.0);
            }
            let pos = (i * (src - 1)) as f64 / (dst - 1) as f64;
            let lo = (libm::floor(pos) as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, (pos - lo as f64) as f32)
        })
        .collect()
}

/// Spatially enlarges `src` to `target` (height, width).
pub fn upsample_spatial(src: &FeatureMap, target: (usize, usize), interpolation: Interpolation) -> Result<FeatureMap> {
    let (th, tw) = target;
    let (h, w) = src.dims();
    if th < h || tw < w {
        return Err(Error::argument(format!(
            "upsampling {h}x{w} to {th}x{tw} would shrink the map"
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::argument("cannot interpolate an empty map"));
    }
    if (th, tw) == (h, w) {
        return Ok(src.clone());
    }
    let ys = axis_map(h, th);
    let xs = axis_map(w, tw);
    let mut data = Vec::with_capacity(th * tw * src.channels());
    for c in 0..src.channels() {
        let plane = src.channel(c);
        for &(y0, y1, fy) in &ys {
            let r0 = &plane[y0 * w..(y0 + 1) * w];
            let r1 = &plane[y1 * w..(y1 + 1) * w];
            for &(x0, x1, fx) in &xs {
                let v = match interpolation {
                    Interpolation::Bilinear => {
                        let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                        let bottom = r1[x0] + (r1[x1] - r1[x0]) * fx;
                        top + (bottom - top) * fy
                    }
                    Interpolation::Nearest => {
                        let row = if fy >= 0.5 { r1 } else { r0 };
                        if fx >= 0.5 {
                            row[x1]
                        } else {
                            row[x0]
                        }
                    }
                };
                data.push(v);
            }
        }
    }
    FeatureMap::new(th, tw, src.channels(), data)
}

/// Brings a coarser map onto a finer one's grid and channel count.
fn align_to(coarse: &FeatureMap, fine: &FeatureMap, interpolation: Interpolation) -> Result<FeatureMap> {
    let up = upsample_spatial(coarse, fine.dims(), interpolation)?;
    resample_channels(&up, fine.channels())
}

/// Recalibrated top-down fusion of a pyramid into a full-resolution tensor.
///
/// Channel counts must be non-decreasing from level 3 to level 5.
pub fn fuse_top_down(pyramid: &FeaturePyramid, options: FusionOptions) -> Result<FusedFeature> {
    let [c3, c4, c5] = pyramid.channels();
    if c3 > c4 || c4 > c5 {
        return Err(Error::argument(format!(
            "top-down fusion needs non-decreasing channels, got ({c3}, {c4}, {c5})"
        )));
    }
    let [l3, l4, l5] = pyramid.levels();
    let r3 = recalibrate(l3, options.recalibration);
    let r4 = recalibrate(l4, options.recalibration);
    let r5 = recalibrate(l5, options.recalibration);

    let m4 = r4.add(&align_to(&r5, &r4, options.interpolation)?)?;
    let m3 = r3.add(&align_to(&m4, &r3, options.interpolation)?)?;

    let dims = pyramid.image_dims();
    let parts = [
        upsample_spatial(&m3, dims, options.interpolation)?,
        upsample_spatial(&m4, dims, options.interpolation)?,
        upsample_spatial(&r5, dims, options.interpolation)?,
    ];
    FeatureMap::concat_channels(&parts).map(FusedFeature)
}

/// Plain upsample-and-concatenate of the raw levels, without recalibration or merging.
pub fn fuse_base(pyramid: &FeaturePyramid, interpolation: Interpolation) -> Result<FusedFeature> {
    let dims = pyramid.image_dims();
    let parts = pyramid
        .levels()
        .iter()
        .map(|l| upsample_spatial(l, dims, interpolation))
        .collect::<Result<Vec<_>>>()?;
    FeatureMap::concat_channels(&parts).map(FusedFeature)
}
