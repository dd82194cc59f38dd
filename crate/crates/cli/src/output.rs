//! Deterministic CSV tables written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Formats a number for CSV: shortest round-trip decimal, `inf` for
/// positive infinity. NaN and negative infinity are refused.
pub fn cell(x: f64) -> Result<String, CliError> {
    if x.is_nan() {
        return Err(CliError::NonConvergence("a computed value is NaN".into()));
    }
    if x == f64::INFINITY {
        return Ok("inf".into());
    }
    if x == f64::NEG_INFINITY {
        return Err(CliError::NonConvergence("a computed value is -inf".into()));
    }
    // avoid "-0"
    Ok(if x == 0.0 { "0".into() } else { format!("{x}") })
}

#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, values: &[f64]) -> Result<(), CliError> {
        self.push_cells(values.iter().map(|&v| cell(v)).collect::<Result<Vec<_>, _>>()?);
        Ok(())
    }

    pub fn push_cells(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Parsed CSV: header plus numeric columns (`inf` allowed).
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ParsedCsv {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| CliError::Validation(format!("{} is empty", path.display())))?
            .split(',')
            .map(|s| s.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| match c.trim() {
                    "inf" => Ok(f64::INFINITY),
                    v => v.parse::<f64>(),
                })
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| CliError::Validation(format!("{}: line {} is not numeric", path.display(), i + 2)))?;
            if row.len() != header.len() {
                return Err(CliError::Validation(format!(
                    "{}: line {} has {} cells, header has {}",
                    path.display(),
                    i + 2,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("no column `{name}` (have {})", self.header.join(", "))))
    }
}
