//! Dataset persistence and deterministic text formatting.
//!
//! Two interchangeable on-disk forms for a [`ViewDataset`]: a long-format
//! CSV (`view,sample,coord,value`) and a binary blob with an 8-byte magic,
//! a 24-byte little-endian header (n, d, view_index as u64), and the
//! column-major float64 payload. Floats in text artifacts are printed with
//! 17 significant digits so parsing them back reproduces the exact bits;
//! writing the same dataset twice yields byte-identical files.

use std::path::Path;

use nalgebra::DMatrix;

use crate::cca::ViewDataset;
use crate::error::{Error, Result};

/// Leading bytes of the binary dataset format.
pub const DATASET_MAGIC: &[u8; 8] = b"MVCCA001";

/// Canonical float rendering for emitted artifacts: scientific notation
/// with 17 significant digits, enough to round-trip any f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Write a string to a file, annotating failures with the path.
pub fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| io_error(path, e))
}

/// Read a file into a string, annotating failures with the path.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

/// Long-format CSV export, sample-major row order.
pub fn write_dataset_csv(path: &Path, dataset: &ViewDataset) -> Result<()> {
    let mut out = String::from("view,sample,coord,value\n");
    let data = dataset.data();
    for sample in 0..dataset.num_samples() {
        for coord in 0..dataset.dim() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                dataset.view_index(),
                sample,
                coord,
                format_float(data[(sample, coord)])
            ));
        }
    }
    write_text(path, &out)
}

/// Inverse of [`write_dataset_csv`]; any missing, duplicated, or
/// inconsistent cell is a parse error.
pub fn read_dataset_csv(path: &Path) -> Result<ViewDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_error(path, e.to_string()))?;
    {
        let headers = reader.headers().map_err(|e| parse_error(path, e.to_string()))?;
        let expected = ["view", "sample", "coord", "value"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(parse_error(
                path,
                format!("header {:?}, expected {expected:?}", headers),
            ));
        }
    }
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    let mut view: Option<usize> = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, e.to_string()))?;
        if record.len() != 4 {
            return Err(parse_error(path, format!("row {line}: {} fields", record.len())));
        }
        let field = |k: usize| -> Result<usize> {
            record[k]
                .parse::<usize>()
                .map_err(|e| parse_error(path, format!("row {line}: {e}")))
        };
        let v = field(0)?;
        match view {
            None => view = Some(v),
            Some(prev) if prev != v => {
                return Err(parse_error(
                    path,
                    format!("row {line}: view {v} mixed with view {prev}"),
                ));
            }
            _ => {}
        }
        let value = record[3]
            .parse::<f64>()
            .map_err(|e| parse_error(path, format!("row {line}: {e}")))?;
        cells.push((field(1)?, field(2)?, value));
    }
    let view = view.ok_or_else(|| parse_error(path, "no data rows"))?;
    let n = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let d = cells.iter().map(|c| c.1).max().unwrap() + 1;
    if cells.len() != n * d {
        return Err(parse_error(
            path,
            format!("{} cells for a {n}x{d} dataset", cells.len()),
        ));
    }
    let mut seen = vec![false; n * d];
    let mut data = DMatrix::zeros(n, d);
    for (sample, coord, value) in cells {
        let slot = sample * d + coord;
        if seen[slot] {
            return Err(parse_error(path, format!("duplicate cell ({sample}, {coord})")));
        }
        seen[slot] = true;
        data[(sample, coord)] = value;
    }
    ViewDataset::new(data, view)
}

/// Binary export: magic, (n, d, view_index) as little-endian u64, then the
/// column-major float64 payload in little-endian byte order.
pub fn write_dataset_binary(path: &Path, dataset: &ViewDataset) -> Result<()> {
    let n = dataset.num_samples();
    let d = dataset.dim();
    let mut bytes = Vec::with_capacity(32 + n * d * 8);
    bytes.extend_from_slice(DATASET_MAGIC);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    bytes.extend_from_slice(&(d as u64).to_le_bytes());
    bytes.extend_from_slice(&(dataset.view_index() as u64).to_le_bytes());
    for value in dataset.data().as_slice() {
        bytes.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Inverse of [`write_dataset_binary`].
pub fn read_dataset_binary(path: &Path) -> Result<ViewDataset> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    if bytes.len() < 32 {
        return Err(parse_error(path, format!("{} bytes, need at least 32", bytes.len())));
    }
    if &bytes[..8] != DATASET_MAGIC {
        return Err(parse_error(path, "bad magic"));
    }
    let word = |k: usize| -> Result<usize> {
        let raw = u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes"));
        usize::try_from(raw).map_err(|_| parse_error(path, format!("header word {k} overflows")))
    };
    let n = word(0)?;
    let d = word(1)?;
    let view = word(2)?;
    let cells = n
        .checked_mul(d)
        .ok_or_else(|| parse_error(path, "dimension product overflows"))?;
    let expected = 32 + cells * 8;
    if bytes.len() != expected {
        return Err(parse_error(
            path,
            format!("{} bytes for a {n}x{d} dataset, expected {expected}", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    ViewDataset::new(DMatrix::from_column_slice(n, d, &values), view)
}
