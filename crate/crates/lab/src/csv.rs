//! Error-series CSV files: a `# key=value` header block, the column line
//! `epsilon,realization,seed,metric,value`, then one row per value.
//!
//! Sweeps write to `<name>.partial` first. Each finished ε is closed by a
//! `# complete epsilon=<ε>` line, so an interrupted file can be resumed, and
//! the file is renamed once every ε is done.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use homlat_core::analysis::{ErrorRecord, ErrorSeries};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: &str = "epsilon,realization,seed,metric,value";

pub fn partial_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

fn format_row(r: &ErrorRecord) -> String {
    // `{}` on f64 prints the shortest string that round-trips exactly
    format!("{},{},{},{},{}", r.epsilon, r.realization, r.seed, r.metric, r.value)
}

fn header_lines(metadata: &BTreeMap<String, String>) -> Result<String> {
    let mut out = format!("# schema_version={CSV_SCHEMA_VERSION}\n");
    for (k, v) in metadata {
        if k.contains('=') || k.contains('\n') || v.contains('\n') {
            bail!("metadata entry {k:?} cannot be written on one header line");
        }
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(COLUMNS);
    out.push('\n');
    Ok(out)
}

/// Contents of a (possibly partial) series file.
#[derive(Debug, Default)]
pub struct SeriesFile {
    pub series: ErrorSeries,
    /// ε values closed by a completion marker.
    pub complete: Vec<f64>,
}

pub fn read_series(path: &Path) -> Result<SeriesFile> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = SeriesFile::default();
    let mut pending: Vec<ErrorRecord> = Vec::new();
    let mut saw_columns = false;
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(e) = rest.strip_prefix("complete epsilon=") {
                let e: f64 = e.parse().with_context(|| format!("line {}: bad marker", n + 1))?;
                out.complete.push(e);
                out.series.records.extend(pending.drain(..).filter(|r| r.epsilon == e));
                continue;
            }
            let (k, v) = rest.split_once('=').with_context(|| format!("line {}: header without '='", n + 1))?;
            if k == "schema_version" {
                if v != CSV_SCHEMA_VERSION.to_string() {
                    bail!("unsupported CSV schema version {v}");
                }
                continue;
            }
            out.series.metadata.insert(k.to_string(), v.to_string());
            continue;
        }
        if line == COLUMNS {
            saw_columns = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !saw_columns {
            bail!("line {}: data before the column line", n + 1);
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            bail!("line {}: expected 5 fields", n + 1);
        }
        pending.push(ErrorRecord {
            epsilon: parts[0].parse()?,
            realization: parts[1].parse()?,
            seed: parts[2].parse()?,
            metric: parts[3].to_string(),
            value: parts[4].parse()?,
        });
    }
    // rows outside any completed block belong to a finished file
    let status = out.series.metadata.get("status").map(String::as_str);
    if status == Some("complete") {
        out.series.records.extend(pending);
    }
    Ok(out)
}

/// Appends ε blocks to the partial file of `path`.
pub struct SeriesWriter {
    target: PathBuf,
    partial: PathBuf,
    file: File,
}

impl SeriesWriter {
    /// Starts a fresh partial file.
    pub fn create(path: &Path, metadata: &BTreeMap<String, String>) -> Result<Self> {
        let partial = partial_path(path);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut file = File::create(&partial)?;
        let mut meta = metadata.clone();
        meta.insert("status".into(), "incomplete".into());
        file.write_all(header_lines(&meta)?.as_bytes())?;
        file.sync_all()?;
        Ok(Self { target: path.to_path_buf(), partial, file })
    }

    /// Reopens an existing partial file for appending.
    pub fn resume(path: &Path) -> Result<Self> {
        let partial = partial_path(path);
        let file = OpenOptions::new().append(true).open(&partial)?;
        Ok(Self { target: path.to_path_buf(), partial, file })
    }

    pub fn write_block(&mut self, eps: f64, rows: &[ErrorRecord]) -> Result<()> {
        let mut buf = String::new();
        for r in rows {
            buf.push_str(&format_row(r));
            buf.push('\n');
        }
        buf.push_str(&format!("# complete epsilon={eps}\n"));
        self.file.write_all(buf.as_bytes())?;
        self.file.sync_all()?;
        Ok(())
    }

    /// Writes the final file and removes the partial.
    pub fn finish(self, metadata: &BTreeMap<String, String>, series: &ErrorSeries) -> Result<()> {
        drop(self.file);
        write_series(&self.target, metadata, series)?;
        fs::remove_file(&self.partial)?;
        Ok(())
    }
}

/// Writes a complete series file in one go.
pub fn write_series(path: &Path, metadata: &BTreeMap<String, String>, series: &ErrorSeries) -> Result<()> {
    let mut meta = metadata.clone();
    meta.insert("status".into(), "complete".into());
    let mut body = header_lines(&meta)?;
    for r in &series.records {
        body.push_str(&format_row(r));
        body.push('\n');
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// The data rows of a series file, without the header block.
pub fn body_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().filter(|l| !l.starts_with('#') && *l != COLUMNS).map(String::from).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(e: f64, r: usize, m: &str, v: f64) -> ErrorRecord {
        ErrorRecord { epsilon: e, realization: r, seed: r as u64, metric: m.into(), value: v }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let mut meta = BTreeMap::new();
        meta.insert("config_hash".to_string(), "abc".to_string());
        let series = ErrorSeries {
            metadata: meta.clone(),
            records: vec![rec(0.125, 0, "aed", 0.1 + 0.2), rec(0.125, 1, "aev", 1e-300), rec(0.03125, 0, "aed", 7.0)],
        };
        write_series(&path, &meta, &series).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back.series.records, series.records);
        assert_eq!(back.series.metadata["status"], "complete");
        assert_eq!(back.series.metadata["config_hash"], "abc");
    }

    #[test]
    fn partial_keeps_only_closed_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let meta = BTreeMap::new();
        let mut w = SeriesWriter::create(&path, &meta).unwrap();
        w.write_block(0.25, &[rec(0.25, 0, "aed", 1.0)]).unwrap();
        drop(w);
        // simulate a crash halfway through the next block
        let mut f = OpenOptions::new().append(true).open(partial_path(&path)).unwrap();
        writeln!(f, "0.5,0,0,aed,2").unwrap();
        let back = read_series(&partial_path(&path)).unwrap();
        assert_eq!(back.complete, vec![0.25]);
        assert_eq!(back.series.records, vec![rec(0.25, 0, "aed", 1.0)]);
        assert_eq!(back.series.metadata["status"], "incomplete");
    }

    #[test]
    fn rejects_other_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, format!("# schema_version=9\n{COLUMNS}\n")).unwrap();
        assert!(read_series(&path).is_err());
    }
}
