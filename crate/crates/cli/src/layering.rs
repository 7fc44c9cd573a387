//! Flag > config file > environment > default resolution.

use std::collections::BTreeMap;
use std::path::Path;

use synaptic_core::experiment::ExperimentConfig;

use crate::commands::Failure;

pub const OUT_DIR_ENV: &str = "SYNAPTIC_OUT_DIR";

/// Reads a flat `key=value` file. Blank lines and `#` comments are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Failure::Usage(format!("{}:{}: expected key=value", path.display(), i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Resolved experiment config plus any command-specific keys.
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub extras: BTreeMap<String, String>,
    pub data_given: bool,
}

/// Applies `file` then `flags` on top of `base`. The `data` key goes first
/// so dataset-dependent keys such as `target` apply to the final dataset.
/// Keys listed in `extras` are collected instead of applied.
pub fn resolve(
    base: ExperimentConfig,
    file: &[(String, String)],
    flags: &[(String, String)],
    extras: &[&str],
) -> Result<Resolved, Failure> {
    let mut cfg = base;
    if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        if !dir.is_empty() {
            cfg.output_dir = dir.into();
        }
    }
    let data = flags
        .iter()
        .chain(file.iter())
        .find(|(k, _)| k == "data" || k == "dataset")
        .map(|(_, v)| v.clone());
    let data_given = data.is_some();
    if let Some(d) = &data {
        cfg.set("data", d)?;
    }
    let mut collected = BTreeMap::new();
    for (k, v) in file.iter().chain(flags.iter()) {
        if k == "data" || k == "dataset" {
            continue;
        }
        if extras.contains(&k.as_str()) {
            collected.insert(k.clone(), v.clone());
        } else {
            cfg.set(k, v)?;
        }
    }
    Ok(Resolved {
        cfg,
        extras: collected,
        data_given,
    })
}

pub fn owned(pairs: Vec<(&'static str, String)>) -> Vec<(String, String)> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}
