//! Output plumbing: JSON summaries with config echo and plain CSV series.
//!
//! Everything written here is byte-stable for a fixed configuration and seed;
//! the only run-dependent field is `wallTimeS` in the summary, which consumers
//! should exclude when hashing payloads.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary<'a, C: Serialize, R: Serialize> {
    pub config: &'a C,
    pub wall_time_s: f64,
    pub results: R,
    pub verdicts: &'a [Verdict],
    pub pass: bool,
}

pub fn write_summary<C: Serialize, R: Serialize>(
    dir: &Path,
    command: &str,
    config: &C,
    results: R,
    verdicts: &[Verdict],
    wall_time_s: f64,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let summary = Summary {
        config,
        wall_time_s,
        results,
        verdicts,
        pass: verdicts.iter().all(|v| v.pass),
    };
    let path = dir.join(format!("{command}_summary.json"));
    let mut file = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, &summary)?;
    file.write_all(b"\n")?;
    Ok(path)
}

/// Write a CSV file with a header row; each row is preformatted by the
/// caller. Shortest-round-trip float formatting keeps files reproducible.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(path)
}

pub fn write_jsonl<T: Serialize>(
    dir: &Path,
    name: &str,
    records: impl IntoIterator<Item = T>,
) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    for record in records {
        serde_json::to_writer(&mut file, &record)?;
        file.write_all(b"\n")?;
    }
    Ok(path)
}
