//! Dataset ingestion.
//!
//! LEVIR-CD (test split) is a directory with three sub-trees holding files of
//! the same name:
//!
//! ```text
//! <root>/A/<name>.png       first acquisition
//! <root>/B/<name>.png       second acquisition
//! <root>/label/<name>.png   change reference (0 / 255)
//! ```
//!
//! WHU-CD is one large co-registered mosaic pair, read from
//! `<root>/A.<ext>`, `<root>/B.<ext>` and `<root>/label.<ext>` with `ext` one
//! of `tif`, `tiff`, `png`, and cut into overlapping 1024-pixel tiles.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{Context, Result};
use log::warn;
use scm_core::tiling::{read_mask_tile, read_tile, tile_grid, TileSpec};
use scm_core::{GroundTruth, ImagePair, RgbImage};
use serde::{Deserialize, Serialize};

use crate::io::{load_labels, load_rgb};

pub const WHU_TILE: usize = 1024;
const IMAGE_EXTENSIONS: [&str; 4] = ["png", "tif", "tiff", "jpg"];

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{kind} counterpart missing for {name}: expected {}", path.display())]
    MissingCounterpart {
        kind: &'static str,
        name: String,
        path: PathBuf,
    },
    #[error("no {0} image found under {1}")]
    MissingMosaic(&'static str, PathBuf),
    #[error("{what} is {got:?} but the first acquisition is {expected:?}")]
    DimensionMismatch {
        what: String,
        got: (usize, usize),
        expected: (usize, usize),
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Levir,
    Whu,
}

impl FromStr for DatasetKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "levir" | "levir-cd" => Ok(Self::Levir),
            "whu" | "whu-cd" => Ok(Self::Whu),
            other => anyhow::bail!("unknown dataset {other:?} (expected levir or whu)"),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Levir => "levir",
            Self::Whu => "whu",
        })
    }
}

/// One evaluation unit: a pair with its reference.
#[derive(Debug, Clone)]
pub struct Sample {
    pub pair: ImagePair,
    pub gt: GroundTruth,
    pub tile: Option<TileSpec>,
}

/// File triple of one LEVIR-CD item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevirItem {
    pub id: String,
    pub t1: PathBuf,
    pub t2: PathBuf,
    pub label: PathBuf,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Lists LEVIR-CD items in file-name order. Every `A/` file needs a `B/` and
/// a `label/` file of the same name.
pub fn enumerate_levir(root: &Path) -> Result<Vec<LevirItem>> {
    let a_dir = root.join("A");
    if !a_dir.is_dir() {
        warn!("{} does not exist; dataset is empty", a_dir.display());
        return Ok(Vec::new());
    }
    let mut names: Vec<String> = std::fs::read_dir(&a_dir)
        .with_context(|| format!("listing {}", a_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && is_image(p))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect();
    names.sort();
    if names.is_empty() {
        warn!("no images under {}; dataset is empty", a_dir.display());
    }
    names
        .into_iter()
        .map(|name| {
            let counterpart = |kind: &'static str, dir: &str| {
                let path = root.join(dir).join(&name);
                if path.is_file() {
                    Ok(path)
                } else {
                    Err(DatasetError::MissingCounterpart {
                        kind,
                        name: name.clone(),
                        path,
                    })
                }
            };
            let id = Path::new(&name)
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or(&name)
                .to_string();
            Ok(LevirItem {
                id,
                t1: a_dir.join(&name),
                t2: counterpart("second-acquisition", "B")?,
                label: counterpart("label", "label")?,
            })
        })
        .collect()
}

pub fn load_levir_item(item: &LevirItem) -> Result<Sample> {
    let t1 = load_rgb(&item.t1)?;
    let t2 = load_rgb(&item.t2)?;
    let gt = load_labels(&item.label)?;
    if gt.dims() != t1.dims() {
        return Err(DatasetError::DimensionMismatch {
            what: item.label.display().to_string(),
            got: gt.dims(),
            expected: t1.dims(),
        }
        .into());
    }
    let pair = ImagePair::new(item.id.clone(), t1, t2).with_context(|| format!("pair {}", item.id))?;
    Ok(Sample { pair, gt, tile: None })
}

fn find_mosaic(root: &Path, stem: &'static str) -> Result<PathBuf> {
    ["tif", "tiff", "png"]
        .iter()
        .map(|ext| root.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| DatasetError::MissingMosaic(stem, root.to_path_buf()).into())
}

/// Both WHU-CD acquisitions and the reference, fully decoded.
#[derive(Debug)]
pub struct WhuMosaic {
    pub t1: RgbImage,
    pub t2: RgbImage,
    pub gt: GroundTruth,
}

impl WhuMosaic {
    pub fn open(root: &Path) -> Result<Self> {
        let t1 = load_rgb(&find_mosaic(root, "A")?)?;
        let t2 = load_rgb(&find_mosaic(root, "B")?)?;
        let gt = load_labels(&find_mosaic(root, "label")?)?;
        for (what, dims) in [("second acquisition", t2.dims()), ("label", gt.dims())] {
            if dims != t1.dims() {
                return Err(DatasetError::DimensionMismatch {
                    what: what.to_string(),
                    got: dims,
                    expected: t1.dims(),
                }
                .into());
            }
        }
        Ok(Self { t1, t2, gt })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.t1.dims()
    }

    pub fn tiles(&self, size: usize) -> Result<Vec<TileSpec>> {
        Ok(tile_grid(self.dims(), size)?)
    }

    pub fn sample(&self, spec: &TileSpec) -> Result<Sample> {
        let pair = ImagePair::new(
            whu_tile_id(spec),
            read_tile(&self.t1, spec)?,
            read_tile(&self.t2, spec)?,
        )?;
        let gt = GroundTruth(read_mask_tile(self.gt.mask(), spec)?);
        Ok(Sample {
            pair,
            gt,
            tile: Some(*spec),
        })
    }
}

pub fn whu_tile_id(spec: &TileSpec) -> String {
    format!("whu_r{:02}_c{:02}", spec.row, spec.col)
}

/// Random-access view over either dataset, shareable across worker threads.
#[derive(Debug, Clone)]
pub enum Dataset {
    Levir(Arc<Vec<LevirItem>>),
    Whu {
        mosaic: Arc<WhuMosaic>,
        tiles: Arc<Vec<TileSpec>>,
    },
}

impl Dataset {
    pub fn open(kind: DatasetKind, root: &Path) -> Result<Self> {
        match kind {
            DatasetKind::Levir => Ok(Self::Levir(Arc::new(enumerate_levir(root)?))),
            DatasetKind::Whu => {
                let mosaic = WhuMosaic::open(root)?;
                let tiles = mosaic.tiles(WHU_TILE)?;
                Ok(Self::Whu {
                    mosaic: Arc::new(mosaic),
                    tiles: Arc::new(tiles),
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Levir(items) => items.len(),
            Self::Whu { tiles, .. } => tiles.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, index: usize) -> String {
        match self {
            Self::Levir(items) => items[index].id.clone(),
            Self::Whu { tiles, .. } => whu_tile_id(&tiles[index]),
        }
    }

    pub fn load(&self, index: usize) -> Result<Sample> {
        match self {
            Self::Levir(items) => load_levir_item(&items[index]),
            Self::Whu { mosaic, tiles } => mosaic.sample(&tiles[index]),
        }
    }

    /// Reference mask for an item, without decoding the acquisitions when avoidable.
    pub fn ground_truth(&self, index: usize) -> Result<GroundTruth> {
        match self {
            Self::Levir(items) => load_labels(&items[index].label),
            Self::Whu { mosaic, tiles } => Ok(GroundTruth(read_mask_tile(mosaic.gt.mask(), &tiles[index])?)),
        }
    }

    pub fn tile(&self, index: usize) -> Option<TileSpec> {
        match self {
            Self::Levir(_) => None,
            Self::Whu { tiles, .. } => Some(tiles[index]),
        }
    }
}
