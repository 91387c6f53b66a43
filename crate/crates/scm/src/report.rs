//! Evaluation report persisted as `report.json`.

use std::path::Path;

use anyhow::{Context, Result};
use scm_core::metrics::{aggregate, scores, Aggregation, ConfusionCounts, Scores};
use scm_core::tiling::TileSpec;
use scm_core::Variant;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub id: String,
    pub counts: ConfusionCounts,
    pub scores: Scores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tile: Option<TileSpec>,
}

impl TileRecord {
    pub fn new(id: String, counts: ConfusionCounts, tile: Option<TileSpec>) -> Self {
        Self {
            id,
            counts,
            scores: scores(&counts),
            tile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    /// Absent when the report was recomputed from saved maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    pub aggregation: Aggregation,
    pub scores: Scores,
    pub totals: ConfusionCounts,
    pub per_tile: Vec<TileRecord>,
}

impl EvalReport {
    pub fn new(dataset: String, variant: Option<Variant>, aggregation: Aggregation, per_tile: Vec<TileRecord>) -> Self {
        let counts: Vec<ConfusionCounts> = per_tile.iter().map(|t| t.counts).collect();
        Self {
            dataset,
            variant,
            aggregation,
            scores: aggregate(&counts, aggregation),
            totals: counts.iter().copied().sum(),
            per_tile,
        }
    }

    /// Aggregate recomputed from the stored per-tile counts.
    pub fn recompute(&self, aggregation: Aggregation) -> Scores {
        let counts: Vec<ConfusionCounts> = self.per_tile.iter().map(|t| t.counts).collect();
        aggregate(&counts, aggregation)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// A tile that could not be processed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}
