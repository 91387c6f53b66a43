//! Confusion counts, F1 / mIoU / OA, and colorized comparison maps.

use alloc::format;
use alloc::vec::Vec;
use core::ops::{Add, AddAssign};

use crate::change::ChangeMap;
use crate::error::{Error, Result};
use crate::raster::{GroundTruth, RgbImage};

pub const COLOR_TP: [u8; 3] = [255, 255, 255];
pub const COLOR_TN: [u8; 3] = [0, 0, 0];
pub const COLOR_FP: [u8; 3] = [255, 0, 0];
pub const COLOR_FN: [u8; 3] = [0, 255, 0];

/// Pixel counts with "changed" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl core::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

fn check_dims(pred: &ChangeMap, gt: &GroundTruth) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(Error::shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    Ok(())
}

pub fn accumulate(pred: &ChangeMap, gt: &GroundTruth) -> Result<ConfusionCounts> {
    check_dims(pred, gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.mask().as_slice().iter().zip(gt.mask().as_slice()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scores {
    pub f1: f64,
    pub miou: f64,
    pub oa: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 of the change class, mean IoU over change and no-change, and overall
/// accuracy. A class absent from both prediction and reference scores 0.
pub fn scores(c: &ConfusionCounts) -> Scores {
    let iou_change = ratio(c.tp, c.tp + c.fp + c.fn_);
    let iou_same = ratio(c.tn, c.tn + c.fp + c.fn_);
    Scores {
        f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
        miou: (iou_change + iou_same) / 2.0,
        oa: ratio(c.tp + c.tn, c.total()),
    }
}

/// How per-tile results become dataset scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Aggregation {
    /// Scores of the summed counts.
    #[default]
    Micro,
    /// Mean of per-tile scores.
    Macro,
}

pub fn aggregate(per_tile: &[ConfusionCounts], mode: Aggregation) -> Scores {
    match mode {
        Aggregation::Micro => scores(&per_tile.iter().copied().sum()),
        Aggregation::Macro => {
            if per_tile.is_empty() {
                return Scores::default();
            }
            let n = per_tile.len() as f64;
            let all: Vec<Scores> = per_tile.iter().map(scores).collect();
            Scores {
                f1: all.iter().map(|s| s.f1).sum::<f64>() / n,
                miou: all.iter().map(|s| s.miou).sum::<f64>() / n,
                oa: all.iter().map(|s| s.oa).sum::<f64>() / n,
            }
        }
    }
}

/// White TP, black TN, red FP, green FN.
pub fn render(pred: &ChangeMap, gt: &GroundTruth) -> Result<RgbImage> {
    check_dims(pred, gt)?;
    let (h, w) = pred.dims();
    let (p, g) = (pred.mask(), gt.mask());
    Ok(RgbImage::from_fn(h, w, |y, x| match (p.get(y, x), g.get(y, x)) {
        (true, true) => COLOR_TP,
        (false, false) => COLOR_TN,
        (true, false) => COLOR_FP,
        (false, true) => COLOR_FN,
    }))
}
