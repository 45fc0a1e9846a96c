//! Atomic file writes and provenance headers.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::RunConfig;

/// Write via a temp file in the same directory, then rename: readers never
/// observe a partial file.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, content).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("renaming {} -> {}", tmp.display(), path.display()))?;
    Ok(())
}

/// Comment line stamped at the top of CSV outputs for exact reruns.
pub fn csv_header_comment(config: &RunConfig) -> String {
    format!("# config_hash={} seed={}\n", config.hash(), config.seed)
}

/// XML comment stamped into SVG outputs.
pub fn svg_header_comment(config: &RunConfig) -> String {
    format!("<!-- config_hash={} seed={} -->\n", config.hash(), config.seed)
}

/// Provenance object embedded in JSON outputs.
pub fn json_meta(config: &RunConfig) -> serde_json::Value {
    serde_json::json!({ "config_hash": config.hash(), "seed": config.seed })
}

/// CSV reader that skips `#` comment lines.
pub fn csv_reader<R: std::io::Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader)
}
