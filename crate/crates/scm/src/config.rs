//! Run configuration and adapter construction.
//!
//! The configuration file is TOML and mirrors the command-line flags:
//!
//! ```toml
//! dataset = "levir"          # levir | whu
//! root = "/data/LEVIR-CD/test"
//! variant = "scm"            # base | rff | scm
//! out = "runs/levir-scm"
//! prompts = "prompts/default.txt"
//! threshold = 0.35           # optional, replaces OTSU
//! workers = 4
//! aggregate = "micro"        # micro | macro
//! otsu_bins = 256
//!
//! [fusion]
//! recalibration = "raw-mean" # raw-mean | abs-mean
//! interpolation = "bilinear" # bilinear | nearest
//!
//! [psa]
//! template = "a satellite photo of a {term}"
//! temperature = 100.0
//! patch_mode = "bounding-box" # bounding-box | masked
//! combine = "sum"             # sum | mean
//!
//! [adapter]
//! kind = "process"           # process (default) | synthetic
//! command = ["python3", "scripts/scm_worker.py"]
//! weights = "/models"        # falls back to $SCM_WEIGHTS_DIR
//! device = "cuda:0"
//! seed = 0                   # synthetic only
//! strides = [8, 16, 32]
//! channels = [320, 640, 640]
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use scm_core::metrics::Aggregation;
use scm_core::pipeline::PipelineConfig;
use scm_core::psa::PsaOptions;
use scm_core::rff::FusionOptions;
use scm_core::synthetic::synthetic_backbone_with;
use scm_core::{AdapterSet, PromptGroups, PyramidLayout, Variant};
use serde::{Deserialize, Serialize};

use crate::datasets::DatasetKind;
use crate::process::{process_adapters, ProcessClient};
use crate::prompts::load_prompts;

pub const WEIGHTS_ENV: &str = "SCM_WEIGHTS_DIR";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    Synthetic,
    #[default]
    Process,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub kind: AdapterKind,
    pub command: Vec<String>,
    pub weights: Option<PathBuf>,
    pub device: String,
    pub seed: u64,
    pub strides: [usize; 3],
    pub channels: [usize; 3],
}

impl Default for AdapterConfig {
    fn default() -> Self {
        let layout = PyramidLayout::default();
        Self {
            kind: AdapterKind::default(),
            command: vec!["python3".into(), "scripts/scm_worker.py".into()],
            weights: None,
            device: "cpu".into(),
            seed: 0,
            strides: layout.strides,
            channels: layout.channels,
        }
    }
}

impl AdapterConfig {
    pub fn layout(&self) -> PyramidLayout {
        PyramidLayout {
            strides: self.strides,
            channels: self.channels,
        }
    }

    /// Configured weights directory, else `$SCM_WEIGHTS_DIR`.
    pub fn weights_dir(&self) -> Option<PathBuf> {
        self.weights
            .clone()
            .or_else(|| std::env::var_os(WEIGHTS_ENV).map(PathBuf::from))
    }

    /// Creates one adapter replica.
    pub fn build(&self) -> Result<AdapterSet> {
        self.layout().validate()?;
        match self.kind {
            AdapterKind::Synthetic => Ok(synthetic_backbone_with(self.seed, self.layout())),
            AdapterKind::Process => {
                let weights = self
                    .weights_dir()
                    .with_context(|| format!("adapter weights missing: set adapter.weights or ${WEIGHTS_ENV}"))?;
                if !weights.is_dir() {
                    bail!("adapter weights directory {} does not exist", weights.display());
                }
                let mut client = ProcessClient::spawn(&self.command, Some(&weights), &self.device)?;
                let reported = client.info()?;
                if reported.strides != self.strides {
                    log::warn!(
                        "adapter reports strides {:?}, configuration says {:?}",
                        reported.strides,
                        self.strides
                    );
                }
                Ok(process_adapters(client))
            }
        }
    }
}

/// Everything a `run` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub root: PathBuf,
    pub variant: Variant,
    pub out: PathBuf,
    pub prompts: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub workers: usize,
    pub aggregate: Aggregation,
    pub otsu_bins: usize,
    pub fusion: FusionOptions,
    pub psa: PsaOptions,
    pub adapter: AdapterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Levir,
            root: PathBuf::new(),
            variant: Variant::Scm,
            out: PathBuf::from("out"),
            prompts: None,
            threshold: None,
            workers: 1,
            aggregate: Aggregation::Micro,
            otsu_bins: scm_core::change::OTSU_BINS,
            fusion: FusionOptions::default(),
            psa: PsaOptions::default(),
            adapter: AdapterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("worker count must be at least 1");
        }
        if self.otsu_bins < 2 {
            bail!("otsu_bins must be at least 2");
        }
        if let Some(t) = self.threshold {
            if !(0.0..=2.0).contains(&t) {
                bail!("threshold {t} is outside [0, 2]");
            }
        }
        if self.psa.temperature <= 0.0 || !self.psa.temperature.is_finite() {
            bail!("psa.temperature must be positive");
        }
        self.adapter.layout().validate()?;
        Ok(())
    }

    pub fn prompt_groups(&self) -> Result<PromptGroups> {
        match &self.prompts {
            Some(p) => load_prompts(p),
            None => Ok(PromptGroups::default()),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        Ok(PipelineConfig {
            variant: self.variant,
            fusion: self.fusion,
            otsu_bins: self.otsu_bins,
            threshold: self.threshold,
            psa: self.psa.clone(),
            prompts: self.prompt_groups()?,
        })
    }
}
