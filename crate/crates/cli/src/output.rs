//! Deterministic artifact writing: sorted JSON keys, atomic rename, and
//! a timestamped sidecar kept out of the data files.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Serializes with sorted keys (via the `Value` round-trip) and a
/// trailing newline; identical inputs give byte-identical files.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v: Value = serde_json::to_value(value)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    let mut s = serde_json::to_string_pretty(&v)
        .map_err(|e| CliError::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => d.join(format!(
            ".{}.tmp",
            path.file_name().unwrap_or_default().to_string_lossy()
        )),
        None => PathBuf::from(format!(".{}.tmp", path.display())),
    };
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, to_sorted_json(value)?.as_bytes())
}

/// Checks that the output directory exists and is writable before any
/// compute happens.
pub fn check_out_dir(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    let probe = dir.join(".mesocloud-probe");
    std::fs::write(&probe, b"")
        .map_err(|e| CliError::Config(format!("output directory {} not writable: {e}", dir.display())))?;
    let _ = std::fs::remove_file(&probe);
    Ok(())
}

/// Run metadata sidecar: the only artifact carrying a timestamp, so the
/// data files stay byte-identical across reruns.
#[derive(Serialize)]
pub struct RunMeta {
    pub command: String,
    pub unix_time: u64,
    pub n_voids: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Set when no oracle comparison backs the run.
    pub unvalidated_against_oracle: bool,
}

impl RunMeta {
    pub fn new(command: &str, n_voids: usize) -> Self {
        Self {
            command: command.into(),
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            n_voids,
            alpha: None,
            unvalidated_against_oracle: true,
        }
    }
}
