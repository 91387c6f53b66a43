//! Equidistant sliding-window tiling of large mosaics.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, RgbImage};

/// Square window into a larger source raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TileSpec {
    pub row: usize,
    pub col: usize,
    pub row_start: usize,
    pub col_start: usize,
    pub size: usize,
    pub source_dims: (usize, usize),
}

impl TileSpec {
    pub fn fits(&self) -> bool {
        self.row_start + self.size <= self.source_dims.0 && self.col_start + self.size <= self.source_dims.1
    }
}

/// Starts of `n` windows of `tile` spread evenly over `extent`:
/// `round(k * (extent - tile) / (n - 1))`, halves rounded up.
pub fn window_starts(extent: usize, tile: usize) -> Vec<usize> {
    let n = extent.div_ceil(tile);
    if n <= 1 {
        return alloc::vec![0];
    }
    let span = (extent - tile) as u128;
    let gaps = (n - 1) as u128;
    (0..n as u128)
        .map(|k| ((2 * k * span + gaps) / (2 * gaps)) as usize)
        .collect()
}

/// Grid of `ceil(H/tile) x ceil(W/tile)` windows covering the whole source,
/// overlapping where the size is not a multiple of `tile`. Row-major order.
pub fn tile_grid(source_dims: (usize, usize), tile: usize) -> Result<Vec<TileSpec>> {
    let (h, w) = source_dims;
    if tile == 0 {
        return Err(Error::argument("tile size must be positive"));
    }
    if h < tile || w < tile {
        return Err(Error::argument(format!(
            "source {h}x{w} is smaller than the {tile}px tile"
        )));
    }
    let rows = window_starts(h, tile);
    let cols = window_starts(w, tile);
    let mut specs = Vec::with_capacity(rows.len() * cols.len());
    for (row, &row_start) in rows.iter().enumerate() {
        for (col, &col_start) in cols.iter().enumerate() {
            specs.push(TileSpec {
                row,
                col,
                row_start,
                col_start,
                size: tile,
                source_dims,
            });
        }
    }
    Ok(specs)
}

fn check_spec(spec: &TileSpec, dims: (usize, usize)) -> Result<()> {
    if spec.source_dims != dims || !spec.fits() {
        return Err(Error::argument(format!(
            "tile at ({}, {}) of size {} does not fit a {}x{} source",
            spec.row_start, spec.col_start, spec.size, dims.0, dims.1
        )));
    }
    Ok(())
}

pub fn read_tile(source: &RgbImage, spec: &TileSpec) -> Result<RgbImage> {
    check_spec(spec, source.dims())?;
    source.crop(spec.row_start, spec.col_start, spec.size, spec.size)
}

pub fn read_mask_tile(source: &BinaryMask, spec: &TileSpec) -> Result<BinaryMask> {
    check_spec(spec, source.dims())?;
    source.crop(spec.row_start, spec.col_start, spec.size, spec.size)
}
