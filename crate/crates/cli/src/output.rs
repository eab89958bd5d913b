//! Run directories and the file formats written into them.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Version of every CSV and JSON schema written by this binary. Bump when a
/// column is renamed, removed or changes meaning; appending columns does not
/// require a bump.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the directory under which runs are created
/// when neither the command line nor the config names one.
pub const OUTPUT_ROOT_ENV: &str = "PDPSGD_OUTPUT_ROOT";

pub const CONFIG_ECHO: &str = "config_echo.toml";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Picks the run directory: explicit flag, then config, then `<root>/<name>`.
pub fn resolve_dir(flag: Option<&Path>, configured: Option<&Path>, name: &str) -> CliResult<PathBuf> {
    let dir = match (flag, configured) {
        (Some(d), _) | (None, Some(d)) => d.to_path_buf(),
        (None, None) => output_root().join(name),
    };
    absolute(&dir)
}

pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    std::path::absolute(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("creating {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| CliError::runtime(format!("serialising config: {e}")))?;
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))
}

/// Writes `rows` as a headed CSV; the header comes from the row type's field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV with an explicit header, for layouts that are not a flat struct.
pub fn write_csv_records(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Empty cell for a missing value, shortest round-trip text otherwise.
pub fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
