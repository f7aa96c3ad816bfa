//! File formats shared by every command.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits; round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to a sibling temp file and renames it into place, so a
/// killed run never leaves a truncated result behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.partial", e.to_string_lossy()),
        None => "partial".into(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Builds a CSV in memory and writes it atomically.
pub fn write_csv_with(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    write_atomic(path, &buf)
}

/// `<file>.json` next to a data file, carrying the full configuration.
pub fn sidecar_path(data: &Path) -> PathBuf {
    let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".json");
    data.with_file_name(name)
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a, C: Serialize, E: Serialize> {
    pub command: &'a str,
    pub code_version: &'a str,
    pub master_seed: u64,
    pub config: &'a C,
    pub extra: E,
}

pub fn write_sidecar<C: Serialize, E: Serialize>(
    data: &Path,
    command: &str,
    master_seed: u64,
    config: &C,
    extra: E,
) -> Result<()> {
    write_json(
        &sidecar_path(data),
        &Sidecar {
            command,
            code_version: CODE_VERSION,
            master_seed,
            config,
            extra,
        },
    )
}
