//! Owned pixel containers: 8-bit RGB images, binary masks and bi-temporal pairs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Smallest side accepted by the pipeline (one cell at stride 32).
pub const MIN_SIDE: usize = 32;

/// Row-major, channel-interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "rgb buffer has {} bytes, expected {}x{}x3",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self { height, width, data }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Copies the window `[top, top+height) x [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::argument(format!(
                "window {height}x{width} at ({top},{left}) exceeds {}x{} raster",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Ok(Self { height, width, data })
    }
}

/// Row-major binary raster holding only 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    /// Builds a mask from 0/1 values; any other value is rejected.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(format!(
                "mask buffer has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::argument("mask values must be 0 or 1"));
        }
        Ok(Self { height, width, data })
    }

    /// Binarizes an 8-bit raster at `> threshold`.
    pub fn from_u8(height: usize, width: usize, values: &[u8], threshold: u8) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::shape(format!(
                "label buffer has {} values, expected {}x{}",
                values.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data: values.iter().map(|&v| u8::from(v > threshold)).collect(),
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(y, x)));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[y * self.width + x] = u8::from(on);
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Inclusive-exclusive bounding box `(top, left, bottom, right)` of the foreground.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut top = usize::MAX;
        let mut left = usize::MAX;
        let mut bottom = 0;
        let mut right = 0;
        for y in 0..self.height {
            let row = &self.data[y * self.width..(y + 1) * self.width];
            for (x, &v) in row.iter().enumerate() {
                if v != 0 {
                    top = top.min(y);
                    left = left.min(x);
                    bottom = bottom.max(y + 1);
                    right = right.max(x + 1);
                }
            }
        }
        (top != usize::MAX).then_some((top, left, bottom, right))
    }

    /// Copies the window `[top, top+height) x [left, left+width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width {
            return Err(Error::argument(format!(
                "window {height}x{width} at ({top},{left}) exceeds {}x{} mask",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            let start = y * self.width + left;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self { height, width, data })
    }
}

/// Which acquisition an object came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Temporal {
    First,
    Second,
}

/// Co-registered bi-temporal rasters of one scene.
#[derive(Debug, Clone)]
pub struct ImagePair {
    id: String,
    t1: RgbImage,
    t2: RgbImage,
}

impl ImagePair {
    pub fn new(id: impl Into<String>, t1: RgbImage, t2: RgbImage) -> Result<Self> {
        if t1.dims() != t2.dims() {
            return Err(Error::shape(format!(
                "bi-temporal rasters differ: {:?} vs {:?}",
                t1.dims(),
                t2.dims()
            )));
        }
        check_min_size(&t1)?;
        Ok(Self { id: id.into(), t1, t2 })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn t1(&self) -> &RgbImage {
        &self.t1
    }

    pub fn t2(&self) -> &RgbImage {
        &self.t2
    }

    pub fn image(&self, which: Temporal) -> &RgbImage {
        match which {
            Temporal::First => &self.t1,
            Temporal::Second => &self.t2,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.t1.dims()
    }
}

pub fn check_min_size(image: &RgbImage) -> Result<()> {
    if image.height() < MIN_SIDE || image.width() < MIN_SIDE {
        return Err(Error::Size {
            height: image.height(),
            width: image.width(),
            min: MIN_SIDE,
        });
    }
    Ok(())
}

/// Binary reference change mask aligned with an [`ImagePair`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth(pub BinaryMask);

impl GroundTruth {
    /// 8-bit labels are binarized at `> 127`.
    pub fn from_labels(height: usize, width: usize, labels: &[u8]) -> Result<Self> {
        BinaryMask::from_u8(height, width, labels, 127).map(Self)
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}
