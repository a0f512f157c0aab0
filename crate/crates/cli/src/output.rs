//! CSV tables with a provenance line, summary JSON, and gnuplot scripts.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Machine-readable outcome of one command.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub pass: bool,
    pub config_sha256: String,
    pub metrics: serde_json::Value,
}

/// Writes `# config_sha256=<hash>`, the header, then the rows.
pub fn write_csv(path: &Path, hash: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(file, "# config_sha256={hash}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn write_summary(dir: &Path, cmd: &str, summary: &Summary) -> Result<PathBuf> {
    let path = dir.join(format!("summary_{cmd}.json"));
    write_json(&path, summary)?;
    Ok(path)
}

/// Gnuplot script reading a CSV with `#` comments and a header row.
pub fn write_gnuplot(path: &Path, csv_name: &str, body: &str) -> Result<()> {
    let text = format!(
        "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\nfile = '{csv_name}'\n{body}\n"
    );
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
