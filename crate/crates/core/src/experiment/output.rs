//! CSV tables with `#`-prefixed metadata lines.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Ordered `key: value` provenance lines written ahead of the CSV header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        let mut m = Metadata::default();
        m.push("tool", concat!("nbmimo ", env!("CARGO_PKG_VERSION")));
        if let Some(rev) = option_env!("NBMIMO_GIT_REV") {
            m.push("revision", rev);
        }
        m
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            // Keep every line a comment even if a value spans lines.
            writeln!(w, "# {k}: {}", v.replace('\n', " "))?;
        }
        Ok(())
    }
}

/// Writes metadata and records to `w`.
pub fn write_table<W: Write, T: Serialize>(mut w: W, meta: &Metadata, records: &[T]) -> Result<(), csv::Error> {
    meta.write(&mut w)?;
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_table_file<T: Serialize>(path: &Path, meta: &Metadata, records: &[T]) -> Result<(), csv::Error> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_table(f, meta, records)
}

/// Renders a table to a string.
pub fn table_string<T: Serialize>(meta: &Metadata, records: &[T]) -> String {
    let mut buf = Vec::new();
    write_table(&mut buf, meta, records).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// `results.csv` → `results.<suffix>.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{suffix}.{ext}"))
}

/// Splits a table produced by [`write_table`] into metadata pairs and CSV body.
pub fn split_table(text: &str) -> (Vec<(String, String)>, String) {
    let mut meta = Vec::new();
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once(": ") {
                meta.push((k.to_string(), v.to_string()));
                continue;
            }
        }
        body.push_str(line);
        body.push('\n');
    }
    (meta, body)
}
