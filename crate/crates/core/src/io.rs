//! File output helpers.

use std::io::{self, Write};
use std::path::Path;

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlotDataError {
    #[error("the diagnostics file is empty")]
    Empty,
    #[error("no column named `{0}`")]
    UnknownColumn(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
}

/// Turns diagnostics CSV into whitespace-aligned columns with a `#` header
/// line, the format gnuplot and similar tools read directly. `select` keeps
/// only the named columns in the given order.
pub fn csv_to_columns(csv: &str, select: &[String]) -> Result<String, PlotDataError> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or(PlotDataError::Empty)?.split(',').collect();
    let picks: Vec<usize> = if select.is_empty() {
        (0..header.len()).collect()
    } else {
        select
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| PlotDataError::UnknownColumn(name.clone()))
            })
            .collect::<Result<_, _>>()?
    };
    let mut rows = vec![picks.iter().map(|&i| header[i].to_string()).collect::<Vec<_>>()];
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(PlotDataError::Ragged {
                line: idx + 2,
                expected: header.len(),
                found: fields.len(),
            });
        }
        rows.push(picks.iter().map(|&i| fields[i].to_string()).collect());
    }
    let widths: Vec<usize> = (0..picks.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        out.push_str(if r == 0 { "# " } else { "  " });
        let cells: Vec<String> = row.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}
