//! Prompt files: two named sections, one term per line.
//!
//! ```text
//! # comment
//! [building]
//! roof
//! house
//!
//! [non-building]
//! swimming pool
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use scm_core::PromptGroups;

pub fn parse_prompts(text: &str) -> Result<PromptGroups> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Building,
        NonBuilding,
    }
    let mut section = Section::None;
    let (mut building, mut nonbuilding) = (Vec::new(), Vec::new());
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim().to_ascii_lowercase().as_str() {
                "building" => Section::Building,
                "non-building" | "nonbuilding" | "non_building" => Section::NonBuilding,
                other => bail!("line {}: unknown section [{other}]", n + 1),
            };
            continue;
        }
        let term = line.to_string();
        match section {
            Section::Building => building.push(term),
            Section::NonBuilding => nonbuilding.push(term),
            Section::None => bail!("line {}: term {line:?} outside of a section", n + 1),
        }
    }
    Ok(PromptGroups::new(building, nonbuilding)?)
}

pub fn load_prompts(path: &Path) -> Result<PromptGroups> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_prompts(&text).with_context(|| format!("parsing {}", path.display()))
}
