//! LGRID v1: the plain-text grid format.
//!
//! A file is one JSON header line `{"dim":..,"shape":[..],"spacing":..,
//! "origin":[..]}` followed by the occupancy as ASCII `0`/`1` rows, one line
//! per row of increasing `y`, `x` increasing left to right; in three
//! dimensions the `z` slabs appear in increasing order separated by a single
//! blank line. Every line ends with a newline. The window (origin and shape)
//! is stored verbatim, so reading a file written by this module and writing
//! it again reproduces the bytes exactly.
//!
//! Two-dimensional sets can also be exported as PGM (P2) images with
//! occupied cells black (0) and empty cells white (255); rows are written
//! from the highest `y` down so the image has `y` pointing up.

use std::fmt::Write as _;
use std::path::Path;

use ptlab_core::LatticeSet;

#[derive(Debug, thiserror::Error)]
pub enum LgridError {
    #[error("missing header line")]
    MissingHeader,
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("header dim {0} not in 1..=3")]
    BadDim(usize),
    #[error("header shape/origin length must equal dim")]
    BadHeaderLength,
    #[error("spacing {0} must be positive and finite")]
    BadSpacing(f64),
    #[error("line {line}: expected {expected} characters of 0/1, got {got:?}")]
    BadRow {
        line: usize,
        expected: usize,
        got: String,
    },
    #[error("line {line}: expected a blank line between slabs")]
    MissingBlank { line: usize },
    #[error("line {line}: unexpected trailing content")]
    TrailingContent { line: usize },
    #[error("file ended before the occupancy was complete")]
    Truncated,
    #[error("{0}")]
    Geometry(#[from] ptlab_core::lattice::GeometryError),
    #[error("PGM export requires a two-dimensional set")]
    PgmNeedsPlanar,
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    dim: usize,
    shape: Vec<usize>,
    spacing: f64,
    origin: Vec<i64>,
}

/// Serialize a set to LGRID v1 text.
pub fn to_lgrid_string(set: &LatticeSet) -> String {
    let dim = set.dim();
    let shape = set.shape();
    let origin = set.origin();
    let header = Header {
        dim,
        shape: shape[..dim].to_vec(),
        spacing: set.spacing(),
        origin: origin[..dim].to_vec(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    let row = shape[0];
    let rows_per_slab = shape[1];
    let occupancy: Vec<bool> = set.occupancy().collect();
    let mut idx = 0;
    for z in 0..shape[2] {
        if z > 0 {
            out.push('\n');
        }
        for _ in 0..rows_per_slab {
            for _ in 0..row {
                out.push(if occupancy[idx] { '1' } else { '0' });
                idx += 1;
            }
            out.push('\n');
        }
    }
    out
}

/// Parse LGRID v1 text.
pub fn from_lgrid_str(text: &str) -> Result<LatticeSet, LgridError> {
    let mut lines = text.split_inclusive('\n');
    let header_line = lines.next().ok_or(LgridError::MissingHeader)?;
    let header: Header = serde_json::from_str(header_line.trim_end_matches('\n'))
        .map_err(|e| LgridError::BadHeader(e.to_string()))?;
    if !(1..=3).contains(&header.dim) {
        return Err(LgridError::BadDim(header.dim));
    }
    if header.shape.len() != header.dim || header.origin.len() != header.dim {
        return Err(LgridError::BadHeaderLength);
    }
    if !(header.spacing > 0.0 && header.spacing.is_finite()) {
        return Err(LgridError::BadSpacing(header.spacing));
    }
    let mut shape = [1usize; 3];
    let mut origin = [0i64; 3];
    for k in 0..header.dim {
        shape[k] = header.shape[k];
        origin[k] = header.origin[k];
    }

    let mut occupancy = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
    let mut line_no = 1usize;
    for z in 0..shape[2] {
        if z > 0 {
            line_no += 1;
            match lines.next() {
                Some("\n") => {}
                _ => return Err(LgridError::MissingBlank { line: line_no }),
            }
        }
        for _ in 0..shape[1] {
            line_no += 1;
            let raw = lines.next().ok_or(LgridError::Truncated)?;
            let row = raw.strip_suffix('\n').unwrap_or(raw);
            if row.len() != shape[0] || !row.bytes().all(|b| b == b'0' || b == b'1') {
                return Err(LgridError::BadRow {
                    line: line_no,
                    expected: shape[0],
                    got: row.chars().take(40).collect(),
                });
            }
            occupancy.extend(row.bytes().map(|b| b == b'1'));
        }
    }
    if lines.next().is_some() {
        return Err(LgridError::TrailingContent { line: line_no + 1 });
    }
    Ok(LatticeSet::from_occupancy(
        header.dim,
        header.spacing,
        origin,
        shape,
        occupancy,
    )?)
}

/// Read a set from an LGRID v1 file.
pub fn read_lgrid(path: &Path) -> Result<LatticeSet, LgridError> {
    from_lgrid_str(&std::fs::read_to_string(path)?)
}

/// Write a set to an LGRID v1 file.
pub fn write_lgrid(path: &Path, set: &LatticeSet) -> Result<(), LgridError> {
    Ok(std::fs::write(path, to_lgrid_string(set))?)
}

/// Serialize a two-dimensional set as a PGM (P2) image.
pub fn to_pgm_string(set: &LatticeSet) -> Result<String, LgridError> {
    if set.dim() != 2 {
        return Err(LgridError::PgmNeedsPlanar);
    }
    let shape = set.shape();
    let (w, h) = (shape[0].max(1), shape[1].max(1));
    let occupancy: Vec<bool> = set.occupancy().collect();
    let mut out = String::new();
    let _ = writeln!(out, "P2");
    let _ = writeln!(out, "{w} {h}");
    let _ = writeln!(out, "255");
    for y in (0..h).rev() {
        let mut first = true;
        for x in 0..w {
            if !first {
                out.push(' ');
            }
            first = false;
            let v = occupancy
                .get(y * shape[0] + x)
                .copied()
                .unwrap_or(false);
            out.push_str(if v { "0" } else { "255" });
        }
        out.push('\n');
    }
    Ok(out)
}

/// Write a two-dimensional set as a PGM (P2) file.
pub fn write_pgm(path: &Path, set: &LatticeSet) -> Result<(), LgridError> {
    Ok(std::fs::write(path, to_pgm_string(set)?)?)
}
