use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), num)
}

/// CSV file written from a header and string rows.
pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize, R: Serialize> {
    command: &'a str,
    args: &'a A,
    resolved: R,
}

/// Writes `config.json` with the parsed arguments and every derived setting.
pub fn write_config<A: Serialize, R: Serialize>(dir: &Path, command: &str, args: &A, resolved: R) -> Result<()> {
    let text = serde_json::to_string_pretty(&Resolved { command, args, resolved })?;
    let path = dir.join("config.json");
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for it in items {
        text.push_str(&serde_json::to_string(it)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
