//! File formats and subcommands behind the `inekf` binary.

pub mod commands;
pub mod config;
pub mod logio;

use std::path::Path;

use inekf_core::sim::SensorLog;

use crate::commands::Result;
use crate::config::Config;

pub fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            Config::parse(&text).map_err(|e| format!("{}: {e}", p.display()).into())
        }
    }
}

/// Reads a log and, when present, its truth companion.
pub fn load_log(path: &Path) -> Result<SensorLog> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let records = logio::read_log(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let truth_file = logio::truth_path(path);
    let truth = if truth_file.exists() {
        let text = std::fs::read_to_string(&truth_file)?;
        logio::read_truth(&text).map_err(|e| format!("{}: {e}", truth_file.display()))?
    } else {
        Vec::new()
    };
    Ok(SensorLog { records, truth })
}
