//! File formats: the `VSPM` binary container, CSV import and PGM import,
//! plus atomic writes.
//!
//! `VSPM` layout, all integers little-endian:
//!
//! ```text
//! "VSPM" | version u16 | dtype u16 | rows u64 | cols u64 | payload
//! ```
//!
//! The payload is row-major; dtype 1 stores each entry as two f64 (re, im),
//! dtype 2 stores one f64 per entry.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use tempfile::NamedTempFile;
use vsp_core::{ComplexMatrix, ComplexVector, C64};

pub const MAGIC: &[u8; 4] = b"VSPM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Complex128 = 1,
    Float64 = 2,
}

impl Dtype {
    fn from_tag(tag: u16) -> Result<Self> {
        match tag {
            1 => Ok(Dtype::Complex128),
            2 => Ok(Dtype::Float64),
            other => bail!("unknown dtype tag {other}"),
        }
    }

    fn entry_bytes(self) -> usize {
        match self {
            Dtype::Complex128 => 16,
            Dtype::Float64 => 8,
        }
    }
}

pub fn encode_vspm(mat: &ComplexMatrix, dtype: Dtype) -> Result<Vec<u8>> {
    if dtype == Dtype::Float64 {
        ensure!(mat.iter().all(|z| z.im == 0.0), "f64 container requested for data with imaginary parts");
    }
    let (rows, cols) = mat.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * dtype.entry_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dtype as u16).to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for i in 0..rows {
        for j in 0..cols {
            let z = mat[(i, j)];
            out.extend_from_slice(&z.re.to_le_bytes());
            if dtype == Dtype::Complex128 {
                out.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b[..8].try_into().expect("8 bytes"))
}

pub fn decode_vspm(bytes: &[u8]) -> Result<ComplexMatrix> {
    ensure!(bytes.len() >= HEADER_LEN, "truncated header ({} bytes)", bytes.len());
    ensure!(&bytes[..4] == MAGIC, "missing VSPM magic");
    let version = le_u16(&bytes[4..]);
    ensure!(version == VERSION, "unsupported VSPM version {version}");
    let dtype = Dtype::from_tag(le_u16(&bytes[6..]))?;
    let rows = usize::try_from(le_u64(&bytes[8..]))?;
    let cols = usize::try_from(le_u64(&bytes[16..]))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.entry_bytes()))
        .context("dimensions overflow")?;
    let payload = &bytes[HEADER_LEN..];
    ensure!(
        payload.len() == expected,
        "payload holds {} bytes, header promises {expected}",
        payload.len()
    );
    let step = dtype.entry_bytes();
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        let at = &payload[(i * cols + j) * step..];
        match dtype {
            Dtype::Complex128 => C64::new(le_f64(at), le_f64(&at[8..])),
            Dtype::Float64 => C64::new(le_f64(at), 0.0),
        }
    }))
}

/// Parses complex entries such as `1.5`, `-2i` or `3-4i`, one matrix row
/// per CSV record.
pub fn parse_csv(text: &str) -> Result<ComplexMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("CSV record {}", line + 1))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .replace(' ', "")
                    .parse::<C64>()
                    .map_err(|e| anyhow::anyhow!("record {}: bad entry {field:?}: {e}", line + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            ensure!(row.len() == first.len(), "record {} has {} fields, expected {}", line + 1, row.len(), first.len());
        }
        rows.push(row);
    }
    ensure!(!rows.is_empty(), "CSV holds no data");
    let cols = rows[0].len();
    Ok(ComplexMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn next_token<'a>(data: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    ensure!(start < *pos, "unexpected end of PGM data");
    Ok(&data[start..*pos])
}

fn token_usize(data: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(data, pos)?;
    std::str::from_utf8(tok)?
        .parse()
        .with_context(|| format!("PGM {what}"))
}

/// Reads a P2 or P5 graymap as a `rows x cols` real matrix scaled to [0, 1].
pub fn parse_pgm(data: &[u8]) -> Result<ComplexMatrix> {
    let mut pos = 0;
    let magic = next_token(data, &mut pos)?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => bail!("not a P2/P5 graymap"),
    };
    let cols = token_usize(data, &mut pos, "width")?;
    let rows = token_usize(data, &mut pos, "height")?;
    let maxval = token_usize(data, &mut pos, "maxval")?;
    ensure!((1..=65535).contains(&maxval), "PGM maxval {maxval} out of range");
    let count = rows * cols;
    let values: Vec<usize> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        let width = if maxval < 256 { 1 } else { 2 };
        ensure!(data.len() >= start + count * width, "PGM raster truncated");
        (0..count)
            .map(|k| {
                let at = start + k * width;
                if width == 1 {
                    data[at] as usize
                } else {
                    (data[at] as usize) << 8 | data[at + 1] as usize
                }
            })
            .collect()
    } else {
        (0..count)
            .map(|_| token_usize(data, &mut pos, "sample"))
            .collect::<Result<_>>()?
    };
    ensure!(values.iter().all(|&v| v <= maxval), "PGM sample exceeds maxval");
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        C64::new(values[i * cols + j] as f64 / maxval as f64, 0.0)
    }))
}

/// Loads a matrix, choosing the format from the extension (`.csv`, `.pgm`,
/// anything else is read as `VSPM`).
pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let parsed = match ext.as_str() {
        "csv" => parse_csv(std::str::from_utf8(&bytes)?),
        "pgm" => parse_pgm(&bytes),
        _ => decode_vspm(&bytes),
    };
    parsed.with_context(|| format!("cannot parse {}", path.display()))
}

/// Loads a vector stored either as a single column or a single row. Images
/// are flattened row by row.
pub fn read_vector(path: &Path) -> Result<ComplexVector> {
    let mat = read_matrix(path)?;
    let is_image = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_image || mat.ncols() == 1 || mat.nrows() == 1 {
        let (rows, cols) = mat.shape();
        Ok(ComplexVector::from_fn(rows * cols, |k, _| mat[(k / cols, k % cols)]))
    } else {
        bail!("{} holds a {}x{} matrix, expected a vector", path.display(), mat.nrows(), mat.ncols())
    }
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot create a temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_matrix(path: &Path, mat: &ComplexMatrix) -> Result<()> {
    write_atomic(path, &encode_vspm(mat, Dtype::Complex128)?)
}

pub fn write_vector(path: &Path, v: &ComplexVector) -> Result<()> {
    write_atomic(path, &encode_vspm(&ComplexMatrix::from_column_slice(v.len(), 1, v.as_slice()), Dtype::Complex128)?)
}
