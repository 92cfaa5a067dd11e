//! Run configuration documents and atomic text output.
//!
//! Every command writes the fully resolved parameters it ran with as
//! `config.json` next to its outputs, so a run can be reproduced from the
//! artifact directory alone.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use tr_core::data::NoiseSpec;
use tr_core::solver::SolverConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Synth {
        shape: Vec<usize>,
        ranks: Vec<usize>,
        seed: u64,
        rate: f64,
        noise: Option<NoiseSpec>,
    },
    Decompose {
        input: String,
        truth: Option<String>,
        solver: SolverConfig,
    },
    Complete {
        input: String,
        mask: String,
        truth: Option<String>,
        solver: SolverConfig,
    },
    Bench {
        sweep: String,
        shape: Vec<usize>,
        ranks: Vec<usize>,
        values: Vec<u64>,
        repeats: usize,
        solver: Option<SolverConfig>,
    },
    Ablate {
        shape: Vec<usize>,
        ranks: Vec<usize>,
        noise: Option<NoiseSpec>,
        seeds: u64,
        solver: SolverConfig,
    },
}

/// Writes text via a sibling temp file and a rename, so readers never see a
/// partially written file.
pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

pub fn write_config(dir: &Path, config: &RunConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(config)?;
    write_text_atomic(&dir.join("config.json"), &text)
}
