//! Small file helpers: single-column label and mask CSVs, JSON output.

use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

/// Reads a one-column CSV with a header; the first column is used.
fn read_column(path: &Path) -> anyhow::Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {i}", path.display()))?;
        match rec.get(0) {
            Some(v) => out.push(v.trim().to_string()),
            None => bail!("{} row {i} is empty", path.display()),
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> anyhow::Result<Vec<usize>> {
    read_column(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.parse().with_context(|| format!("{} row {i}: {v:?} is not a label", path.display())))
        .collect()
}

pub fn write_labels(path: &Path, labels: &[usize]) -> anyhow::Result<()> {
    let mut text = String::with_capacity(labels.len() * 3 + 6);
    text.push_str("label\n");
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Accepts 0/1 or true/false.
pub fn read_mask(path: &Path) -> anyhow::Result<Vec<bool>> {
    read_column(path)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v.to_ascii_lowercase().as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => bail!("{} row {i}: {v:?} is not 0/1", path.display()),
        })
        .collect()
}

pub fn write_mask(path: &Path, header: &str, mask: &[bool]) -> anyhow::Result<()> {
    let mut text = format!("{header}\n");
    for &m in mask {
        text.push_str(if m { "1\n" } else { "0\n" });
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
