//! Real-valued feature tensors and the three-level backbone pyramid.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Channel-major (`C x H x W`) single-precision tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "feature buffer has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Every channel of every pixel set to `value`.
    pub fn constant(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.height * self.width;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise sum of two equally shaped tensors.
    pub fn add(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels {
            return Err(Error::shape(format!(
                "cannot add {}x{}x{} and {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(FeatureMap { data, ..*self })
    }

    /// Stacks tensors of identical spatial size along the channel axis.
    pub fn concat_channels(parts: &[FeatureMap]) -> Result<FeatureMap> {
        let first = parts.first().ok_or_else(|| Error::argument("nothing to concatenate"))?;
        let dims = first.dims();
        if let Some(bad) = parts.iter().find(|p| p.dims() != dims) {
            return Err(Error::shape(format!(
                "concatenation of {:?} with {:?}",
                dims,
                bad.dims()
            )));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(dims.0 * dims.1 * channels);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(FeatureMap {
            height: dims.0,
            width: dims.1,
            channels,
            data,
        })
    }
}

/// Output spatial size of a stride-`s` stage over an `n`-pixel side.
pub fn stage_side(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

/// Outputs of the backbone's last three stages, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    levels: [FeatureMap; 3],
    strides: [usize; 3],
    image_dims: (usize, usize),
}

impl FeaturePyramid {
    pub fn new(levels: [FeatureMap; 3], strides: [usize; 3], image_dims: (usize, usize)) -> Result<Self> {
        let (h, w) = image_dims;
        for (i, (level, &stride)) in levels.iter().zip(&strides).enumerate() {
            if stride == 0 {
                return Err(Error::argument("pyramid strides must be positive"));
            }
            let expected = (stage_side(h, stride), stage_side(w, stride));
            if level.dims() != expected {
                return Err(Error::shape(format!(
                    "pyramid level {} is {:?}, expected {:?} for a {h}x{w} image at stride {stride}",
                    i + 3,
                    level.dims(),
                    expected
                )));
            }
            if level.channels() == 0 {
                return Err(Error::argument(format!("pyramid level {} has no channels", i + 3)));
            }
            if !level.is_finite() {
                return Err(Error::argument(format!(
                    "pyramid level {} has non-finite values",
                    i + 3
                )));
            }
        }
        for pair in levels.windows(2) {
            if pair[1].height() >= pair[0].height() || pair[1].width() >= pair[0].width() {
                return Err(Error::shape(
                    "pyramid spatial dims must strictly decrease from level 3 to level 5",
                ));
            }
        }
        Ok(Self {
            levels,
            strides,
            image_dims,
        })
    }

    pub fn levels(&self) -> &[FeatureMap; 3] {
        &self.levels
    }

    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    pub fn channels(&self) -> [usize; 3] {
        [
            self.levels[0].channels(),
            self.levels[1].channels(),
            self.levels[2].channels(),
        ]
    }

    pub fn image_dims(&self) -> (usize, usize) {
        self.image_dims
    }

    pub fn into_levels(self) -> [FeatureMap; 3] {
        self.levels
    }
}

/// Full-resolution concatenation of the fused pyramid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature(pub FeatureMap);

impl FusedFeature {
    pub fn map(&self) -> &FeatureMap {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn channels(&self) -> usize {
        self.0.channels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pyramid_for(h: usize, w: usize) -> Result<FeaturePyramid> {
        let strides = [8, 16, 32];
        let chans = [4, 8, 16];
        let levels =
            [0, 1, 2].map(|i| FeatureMap::zeros(stage_side(h, strides[i]), stage_side(w, strides[i]), chans[i]));
        FeaturePyramid::new(levels, strides, (h, w))
    }

    #[test]
    fn stride_arithmetic_for_1024() {
        let p = pyramid_for(1024, 1024).unwrap();
        let dims: Vec<_> = p.levels().iter().map(|l| l.dims()).collect();
        assert_eq!(dims, [(128, 128), (64, 64), (32, 32)]);
    }

    #[test]
    fn ceil_dims_for_odd_sizes() {
        let p = pyramid_for(33, 70).unwrap();
        assert_eq!(p.levels()[0].dims(), (5, 9));
        assert_eq!(p.levels()[2].dims(), (2, 3));
    }

    #[test]
    fn rejects_wrong_level_dims() {
        let levels = [
            FeatureMap::zeros(4, 4, 1),
            FeatureMap::zeros(2, 2, 1),
            FeatureMap::zeros(1, 1, 1),
        ];
        assert!(FeaturePyramid::new(levels, [8, 16, 32], (64, 64)).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        let mut l3 = FeatureMap::zeros(8, 8, 1);
        l3.channel_mut(0)[3] = f32::NAN;
        let levels = [l3, FeatureMap::zeros(4, 4, 1), FeatureMap::zeros(2, 2, 1)];
        assert!(FeaturePyramid::new(levels, [8, 16, 32], (64, 64)).is_err());
    }

    #[test]
    fn concat_orders_blocks() {
        let a = FeatureMap::constant(2, 2, 1, 1.0);
        let b = FeatureMap::constant(2, 2, 2, 2.0);
        let c = FeatureMap::concat_channels(&[a, b]).unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.channel(0), &[1.0; 4]);
        assert_eq!(c.channel(2), &[2.0; 4]);
    }
}
