//! Raster decoding and encoding (8-bit PNG / TIFF).

use std::path::Path;

use anyhow::{Context, Result};
use image::{GrayImage, ImageReader};
use scm_core::{BinaryMask, ChangeMap, GroundTruth, RgbImage};

fn open(path: &Path) -> Result<image::DynamicImage> {
    let mut reader = ImageReader::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .with_guessed_format()
        .with_context(|| format!("probing {}", path.display()))?;
    // mosaics can be far larger than the decoder's default allocation cap
    reader.no_limits();
    reader.decode().with_context(|| format!("decoding {}", path.display()))
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = open(path)?.into_rgb8();
    let (w, h) = img.dimensions();
    Ok(RgbImage::new(h as usize, w as usize, img.into_raw())?)
}

/// Reads a label raster (any color type) and binarizes its luma at `> 127`.
pub fn load_labels(path: &Path) -> Result<GroundTruth> {
    let img = open(path)?.into_luma8();
    let (w, h) = img.dimensions();
    Ok(GroundTruth::from_labels(h as usize, w as usize, img.as_raw())?)
}

pub fn save_rgb(path: &Path, image: &RgbImage) -> Result<()> {
    let buf = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, image.as_bytes().to_vec())
        .context("rgb buffer size")?;
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Writes a binary mask as an 8-bit grayscale image with values 0 / 255.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.as_slice().iter().map(|&v| v * 255).collect();
    let buf = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, data).context("mask buffer size")?;
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Reads a change map written by [`save_mask`].
pub fn load_change_map(path: &Path) -> Result<ChangeMap> {
    let gt = load_labels(path)?;
    Ok(ChangeMap::new(gt.0, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = BinaryMask::from_fn(5, 7, |y, x| (x + y) % 3 == 0);
        save_mask(&p, &m).unwrap();
        assert_eq!(load_change_map(&p).unwrap().mask(), &m);
    }

    #[test]
    fn rgb_png_roundtrip_and_tiff() {
        let dir = tempfile::tempdir().unwrap();
        let img = RgbImage::from_fn(6, 4, |y, x| [y as u8 * 10, x as u8 * 20, 7]);
        let png = dir.path().join("a.png");
        save_rgb(&png, &img).unwrap();
        assert_eq!(load_rgb(&png).unwrap(), img);
        let tif = dir.path().join("a.tif");
        save_rgb(&tif, &img).unwrap();
        assert_eq!(load_rgb(&tif).unwrap(), img);
    }

    #[test]
    fn missing_file_names_path() {
        let err = load_rgb(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent/x.png"));
    }
}
