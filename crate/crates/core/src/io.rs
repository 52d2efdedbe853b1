//! File plumbing shared by every format: atomic writes, the little-endian
//! `ROMK` container primitives and plain numeric CSV tables.

use std::fs;
use std::hash::Hasher;
use std::io::{BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MAGIC: &[u8; 4] = b"ROMK";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4;

pub const FLAG_TIMES: u32 = 1;
pub const FLAG_PARAMS: u32 = 1 << 1;
/// Set on model files: the payload is a single tagged section instead of
/// snapshot arrays.
pub const FLAG_MODEL: u32 = 1 << 2;

/// Writes through a temporary file in the destination directory and renames
/// it into place, so the destination is either absent, untouched or complete.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".romkit-")
        .tempfile_in(dir)
        .map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n_dof: u64,
    pub m: u64,
    pub flags: u32,
}

impl Header {
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.n_dof.to_le_bytes());
        out.extend_from_slice(&self.m.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
    }

    pub fn read_from(r: &mut ByteReader<'_>) -> Result<Self> {
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(r.error_at(0, format!("bad magic {magic:?}, expected \"ROMK\"")));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(r.error_at(4, format!("unsupported version {version}")));
        }
        Ok(Header {
            n_dof: r.u64("n_dof")?,
            m: r.u64("m")?,
            flags: r.u32("flags")?,
        })
    }
}

/// Cursor over a byte buffer whose errors carry the byte offset.
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    source: String,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8], source: impl Into<String>) -> Self {
        ByteReader {
            buf,
            pos: 0,
            source: source.into(),
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn error_at(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::format(format!("{} byte offset {offset}", self.source), message)
    }

    pub fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error_at(
                self.pos,
                format!("truncated while reading {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| self.error_at(self.pos, format!("{what} length overflows")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| self.error_at(at, format!("{what} {v} does not fit in memory")))
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error_at(
                self.pos,
                format!("{} trailing bytes after payload", self.remaining()),
            ));
        }
        Ok(())
    }
}

/// Model files reuse the snapshot header with [`FLAG_MODEL`] set; the
/// payload is a 4-byte section tag, a `u64` body length and the body.
pub fn encode_model(n_dof: usize, m: usize, tag: &[u8; 4], body: &[u8]) -> Vec<u8> {
    let header = Header {
        n_dof: n_dof as u64,
        m: m as u64,
        flags: FLAG_MODEL,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 12 + body.len());
    header.write_to(&mut out);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(body);
    out
}

/// Checks the header and section tag; the returned reader is positioned at
/// the start of the section body.
pub fn decode_model<'a>(bytes: &'a [u8], tag: &[u8; 4], source: &str) -> Result<(Header, ByteReader<'a>)> {
    let mut r = ByteReader::new(bytes, source);
    let h = Header::read_from(&mut r)?;
    if h.flags != FLAG_MODEL {
        return Err(r.error_at(HEADER_LEN - 4, format!("flags {:#x} do not mark a model file", h.flags)));
    }
    let at = r.position();
    let found = r.take(4, "section tag")?;
    if found != tag {
        return Err(r.error_at(
            at,
            format!(
                "section tag {:?}, expected {:?}",
                String::from_utf8_lossy(found),
                String::from_utf8_lossy(tag)
            ),
        ));
    }
    let len = r.usize("section length")?;
    if len != r.remaining() {
        return Err(r.error_at(
            at + 4,
            format!("section declares {len} bytes but {} follow", r.remaining()),
        ));
    }
    Ok((h, r))
}

pub fn put_f64s(out: &mut Vec<u8>, xs: impl IntoIterator<Item = f64>) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// FNV-1a 64 over the little-endian bytes of the values.
pub fn checksum<'a>(chunks: impl IntoIterator<Item = &'a [f64]>) -> u64 {
    let mut h = FnvHasher::default();
    for chunk in chunks {
        for x in chunk {
            h.write(&x.to_le_bytes());
        }
    }
    h.finish()
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn join_f64(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(fmt_f64).collect::<Vec<_>>().join(",")
}

/// Parses a comma-separated list of decimals.
pub fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .enumerate()
        .map(|(i, tok)| {
            tok.trim().parse::<f64>().map_err(|_| {
                Error::format(format!("{what} item {i}"), format!("cannot parse {tok:?} as a number"))
            })
        })
        .collect()
}

/// Writes a matrix as headerless CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &Matrix, header: Option<&[String]>) -> Result<()> {
    atomic_write(path, |w| {
        if let Some(h) = header {
            writeln!(w, "{}", h.join(","))?;
        }
        for i in 0..m.nrows() {
            writeln!(w, "{}", join_f64(m.row(i).iter().copied()))?;
        }
        Ok(())
    })
}

/// A numeric CSV table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn ncols(&self) -> usize {
        self.rows.first().map_or_else(|| self.header.as_ref().map_or(0, |h| h.len()), |r| r.len())
    }

    /// Rows as matrix rows.
    pub fn to_matrix(&self) -> Matrix {
        let nc = self.ncols();
        Matrix::from_fn(self.rows.len(), nc, |i, j| self.rows[i][j])
    }
}

/// Reads a numeric CSV. Ragged rows are dimension errors, unparsable cells
/// format errors and NaN/Inf cells validation errors; locations are 1-based
/// lines and 0-based columns.
pub fn read_table(path: &Path, has_header: bool) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text, has_header, &path.display().to_string())
}

pub fn parse_table(text: &str, has_header: bool, source: &str) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::format(format!("{source} line {line}"), e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if has_header && header.is_none() {
            header = Some(rec.iter().map(str::to_owned).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        match width {
            Some(w) if w != rec.len() => {
                return Err(Error::Dimension(format!(
                    "{source} line {line}: ragged row with {} fields, expected {w}",
                    rec.len()
                )))
            }
            _ => width = Some(rec.len()),
        }
        let row_idx = rows.len();
        let mut row = Vec::with_capacity(rec.len());
        for (col, cell) in rec.iter().enumerate() {
            let x: f64 = cell.parse().map_err(|_| {
                Error::format(
                    format!("{source} line {line}, column {col}"),
                    format!("cannot parse {cell:?} as a number"),
                )
            })?;
            if !x.is_finite() {
                return Err(Error::Validation(format!(
                    "{source}: non-finite value {cell:?} at (row {row_idx}, col {col}), line {line}"
                )));
            }
            row.push(x);
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}
