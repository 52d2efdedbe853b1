//! Snapshot datasets: validation, CSV and `ROMK` binary persistence, and the
//! shifted pair of matrices used by DMD.
//!
//! CSV files hold one DOF per row and one snapshot per column, without a
//! header. Times, an explicit `dt` and the parameter table travel in a
//! `key=value` sidecar next to the data file (`data.csv` → `data.manifest`).
//!
//! Binary layout (all little-endian): `"ROMK"`, version `u32 = 1`,
//! `n_dof u64`, `m u64`, `flags u32` (bit 0 times, bit 1 params), then
//! column-major `f64` payload: data, times, params. The parameter count is
//! implied by the payload length.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{self, ByteReader, Header, FLAG_MODEL, FLAG_PARAMS, FLAG_TIMES, HEADER_LEN};
use crate::linalg::{ensure_finite, ensure_nonempty, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    RomkBinary,
}

impl Format {
    /// `.romk` selects the binary format, anything else CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("romk") => Format::RomkBinary,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    data: Matrix,
    times: Option<Vec<f64>>,
    params: Option<Matrix>,
    param_names: Vec<String>,
    dt: Option<f64>,
}

impl SnapshotSet {
    pub fn new(data: Matrix) -> Result<Self> {
        ensure_nonempty(&data, "snapshot data")?;
        ensure_finite(&data, "snapshot data")?;
        Ok(SnapshotSet {
            data,
            times: None,
            params: None,
            param_names: Vec::new(),
            dt: None,
        })
    }

    /// Attaches snapshot times; they must be strictly increasing and
    /// uniformly spaced to within `1e-9 · dt`.
    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        validate_times(&times, self.m())?;
        self.times = Some(times);
        Ok(self)
    }

    /// Attaches one parameter point per snapshot (`N × m`). Empty `names`
    /// generates `p0, p1, …`.
    pub fn with_params(mut self, params: Matrix, names: Vec<String>) -> Result<Self> {
        if params.ncols() != self.m() || params.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "parameter table is {}x{}, expected N x {}",
                params.nrows(),
                params.ncols(),
                self.m()
            )));
        }
        ensure_finite(&params, "parameter table")?;
        let names = if names.is_empty() {
            (0..params.nrows()).map(|i| format!("p{i}")).collect()
        } else {
            names
        };
        if names.len() != params.nrows() {
            return Err(Error::Dimension(format!(
                "{} parameter names for {} parameters",
                names.len(),
                params.nrows()
            )));
        }
        self.params = Some(params);
        self.param_names = names;
        Ok(self)
    }

    /// Explicit time step; overrides the spacing of any attached times.
    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive and finite, got {dt}")));
        }
        self.dt = Some(dt);
        Ok(self)
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn n_dof(&self) -> usize {
        self.data.nrows()
    }

    pub fn m(&self) -> usize {
        self.data.ncols()
    }

    pub fn times(&self) -> Option<&[f64]> {
        self.times.as_deref()
    }

    pub fn params(&self) -> Option<&Matrix> {
        self.params.as_ref()
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn explicit_dt(&self) -> Option<f64> {
        self.dt
    }

    /// Explicit dt, else the spacing of the times, else 1.
    pub fn dt(&self) -> f64 {
        if let Some(dt) = self.dt {
            return dt;
        }
        match self.times.as_deref() {
            Some(t) if t.len() >= 2 => (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64,
            _ => 1.0,
        }
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            n_dof: self.n_dof(),
            m: self.m(),
            dt: self.dt,
            param_names: self.param_names.clone(),
            checksum: self.checksum(),
            times: self.times.clone(),
            params: self
                .params
                .as_ref()
                .map(|p| (0..p.nrows()).map(|i| p.row(i).iter().copied().collect()).collect()),
        }
    }

    /// FNV-1a 64 over the binary payload (data, times, params).
    pub fn checksum(&self) -> u64 {
        let mut chunks: Vec<&[f64]> = vec![self.data.as_slice()];
        if let Some(t) = &self.times {
            chunks.push(t);
        }
        if let Some(p) = &self.params {
            chunks.push(p.as_slice());
        }
        io::checksum(chunks)
    }
}

fn validate_times(times: &[f64], m: usize) -> Result<()> {
    if times.len() != m {
        return Err(Error::Dimension(format!("{} times for {m} snapshots", times.len())));
    }
    if let Some(i) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::Validation(format!("time {i} is not finite")));
    }
    if m < 2 {
        return Ok(());
    }
    for i in 1..m {
        if times[i] <= times[i - 1] {
            return Err(Error::Validation(format!(
                "times not strictly increasing at index {i} ({} after {})",
                times[i],
                times[i - 1]
            )));
        }
    }
    let dt = (times[m - 1] - times[0]) / (m - 1) as f64;
    for i in 1..m {
        let dev = (times[i] - times[i - 1] - dt).abs();
        if dev > 1e-9 * dt {
            return Err(Error::Validation(format!(
                "times not uniformly spaced at index {i}: step deviates from dt={dt} by {dev}"
            )));
        }
    }
    Ok(())
}

/// Sidecar metadata written next to every saved dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub n_dof: usize,
    pub m: usize,
    pub dt: Option<f64>,
    pub param_names: Vec<String>,
    pub checksum: u64,
    /// Only carried for CSV datasets, whose data file cannot hold them.
    pub times: Option<Vec<f64>>,
    pub params: Option<Vec<Vec<f64>>>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_dof={}", self.n_dof);
        let _ = writeln!(s, "m={}", self.m);
        if let Some(dt) = self.dt {
            let _ = writeln!(s, "dt={}", io::fmt_f64(dt));
        }
        if !self.param_names.is_empty() {
            let _ = writeln!(s, "param_names={}", self.param_names.join(","));
        }
        if let Some(t) = &self.times {
            let _ = writeln!(s, "times={}", io::join_f64(t.iter().copied()));
        }
        if let Some(rows) = &self.params {
            for (name, row) in self.param_names.iter().zip(rows) {
                let _ = writeln!(s, "param.{name}={}", io::join_f64(row.iter().copied()));
            }
        }
        let _ = writeln!(s, "checksum={:016x}", self.checksum);
        s
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut n_dof = None;
        let mut m = None;
        let mut dt = None;
        let mut names: Vec<String> = Vec::new();
        let mut checksum = None;
        let mut times = None;
        let mut param_rows: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("{source} line {}", i + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(loc(), format!("expected key=value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_count = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::format(loc(), format!("{key} must be a count, got {v:?}")))
            };
            match key {
                "n_dof" => n_dof = Some(parse_count(value)?),
                "m" => m = Some(parse_count(value)?),
                "dt" => {
                    dt = Some(value.parse::<f64>().map_err(|_| {
                        Error::format(loc(), format!("dt must be a number, got {value:?}"))
                    })?)
                }
                "param_names" => {
                    names = value.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect()
                }
                "times" => times = Some(io::parse_f64_list(value, &loc())?),
                "checksum" => {
                    checksum = Some(u64::from_str_radix(value, 16).map_err(|_| {
                        Error::format(loc(), format!("checksum must be 16 hex digits, got {value:?}"))
                    })?)
                }
                k if k.starts_with("param.") => {
                    param_rows.push((k["param.".len()..].to_owned(), io::parse_f64_list(value, &loc())?))
                }
                _ => log::warn!("{}: ignoring unknown manifest key {key:?}", loc()),
            }
        }
        let missing = |k: &str| Error::format(source.to_owned(), format!("manifest lacks {k}"));
        let params = if param_rows.is_empty() {
            None
        } else {
            let mut ordered = Vec::with_capacity(names.len());
            for name in &names {
                let row = param_rows
                    .iter()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| missing(&format!("param.{name}")))?;
                ordered.push(row.1.clone());
            }
            Some(ordered)
        };
        Ok(DatasetManifest {
            n_dof: n_dof.ok_or_else(|| missing("n_dof"))?,
            m: m.ok_or_else(|| missing("m"))?,
            dt,
            param_names: names,
            checksum: checksum.ok_or_else(|| missing("checksum"))?,
            times,
            params,
        })
    }
}

/// `data.csv` → `data.manifest`.
pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("manifest")
}

pub fn load(path: &Path, format: Format) -> Result<SnapshotSet> {
    let manifest = read_manifest(path)?;
    let set = match format {
        Format::Csv => load_csv(path, manifest.as_ref())?,
        Format::RomkBinary => load_binary(path, manifest.as_ref())?,
    };
    if let Some(man) = &manifest {
        if man.n_dof != set.n_dof() || man.m != set.m() {
            return Err(Error::Dimension(format!(
                "{}: manifest declares {}x{} but payload is {}x{}",
                path.display(),
                man.n_dof,
                man.m,
                set.n_dof(),
                set.m()
            )));
        }
        let actual = set.checksum();
        if actual != man.checksum {
            return Err(Error::Validation(format!(
                "{}: checksum mismatch (manifest {:016x}, payload {actual:016x})",
                path.display(),
                man.checksum
            )));
        }
    }
    Ok(set)
}

fn read_manifest(path: &Path) -> Result<Option<DatasetManifest>> {
    let mpath = manifest_path(path);
    if !mpath.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    DatasetManifest::parse(&text, &mpath.display().to_string()).map(Some)
}

fn load_csv(path: &Path, manifest: Option<&DatasetManifest>) -> Result<SnapshotSet> {
    let table = io::read_table(path, false)?;
    if table.rows.is_empty() {
        return Err(Error::Dimension(format!("{}: no data rows", path.display())));
    }
    let mut set = SnapshotSet::new(table.to_matrix())?;
    if let Some(man) = manifest {
        if let Some(t) = &man.times {
            set = set.with_times(t.clone())?;
        }
        if let Some(rows) = &man.params {
            let nparam = rows.len();
            for (name, row) in man.param_names.iter().zip(rows) {
                if row.len() != set.m() {
                    return Err(Error::Dimension(format!(
                        "manifest parameter {name} has {} values for {} snapshots",
                        row.len(),
                        set.m()
                    )));
                }
            }
            let p = Matrix::from_fn(nparam, set.m(), |i, j| rows[i][j]);
            set = set.with_params(p, man.param_names.clone())?;
        }
        if let Some(dt) = man.dt {
            set = set.with_dt(dt)?;
        }
    }
    Ok(set)
}

fn load_binary(path: &Path, manifest: Option<&DatasetManifest>) -> Result<SnapshotSet> {
    let bytes = io::read_file(path)?;
    let mut set = decode_binary(&bytes, &path.display().to_string())?;
    if let Some(man) = manifest {
        if !man.param_names.is_empty() {
            if let Some(p) = set.params.clone() {
                set = set.with_params(p, man.param_names.clone())?;
            }
        }
        if let Some(dt) = man.dt {
            set = set.with_dt(dt)?;
        }
    }
    Ok(set)
}

pub fn decode_binary(bytes: &[u8], source: &str) -> Result<SnapshotSet> {
    let mut r = ByteReader::new(bytes, source);
    let h = Header::read_from(&mut r)?;
    if h.flags & FLAG_MODEL != 0 {
        return Err(r.error_at(HEADER_LEN - 4, "file holds a fitted model, not snapshots"));
    }
    if h.flags & !(FLAG_TIMES | FLAG_PARAMS) != 0 {
        return Err(r.error_at(HEADER_LEN - 4, format!("unknown flag bits {:#x}", h.flags)));
    }
    let n = usize::try_from(h.n_dof).map_err(|_| r.error_at(8, "n_dof too large"))?;
    let m = usize::try_from(h.m).map_err(|_| r.error_at(16, "m too large"))?;
    if n == 0 || m == 0 {
        return Err(Error::Dimension(format!("{source}: empty dataset ({n}x{m})")));
    }
    let len = n
        .checked_mul(m)
        .ok_or_else(|| r.error_at(8, "n_dof * m overflows"))?;
    let data = r.f64s(len, "data payload")?;
    let times = if h.flags & FLAG_TIMES != 0 {
        Some(r.f64s(m, "times payload")?)
    } else {
        None
    };
    let params = if h.flags & FLAG_PARAMS != 0 {
        let rem = r.remaining();
        if rem == 0 || rem % (8 * m) != 0 {
            return Err(r.error_at(
                r.position(),
                format!("parameter payload of {rem} bytes is not a whole number of {m}-column rows"),
            ));
        }
        let np = rem / (8 * m);
        Some(Matrix::from_vec(np, m, r.f64s(np * m, "params payload")?))
    } else {
        None
    };
    r.finish()?;

    let mut set = SnapshotSet::new(Matrix::from_vec(n, m, data))?;
    if let Some(t) = times {
        set = set.with_times(t)?;
    }
    if let Some(p) = params {
        set = set.with_params(p, Vec::new())?;
    }
    Ok(set)
}

pub fn encode_binary(set: &SnapshotSet) -> Vec<u8> {
    let mut flags = 0;
    if set.times.is_some() {
        flags |= FLAG_TIMES;
    }
    if set.params.is_some() {
        flags |= FLAG_PARAMS;
    }
    let header = Header {
        n_dof: set.n_dof() as u64,
        m: set.m() as u64,
        flags,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * set.data.len());
    header.write_to(&mut out);
    io::put_f64s(&mut out, set.data.iter().copied());
    if let Some(t) = &set.times {
        io::put_f64s(&mut out, t.iter().copied());
    }
    if let Some(p) = &set.params {
        io::put_f64s(&mut out, p.iter().copied());
    }
    out
}

/// Writes the dataset and its manifest sidecar, each atomically.
pub fn save(set: &SnapshotSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::RomkBinary => {
            let bytes = encode_binary(set);
            io::atomic_write(path, |w| w.write_all(&bytes))?;
        }
        Format::Csv => io::write_matrix_csv(path, &set.data, None)?,
    }
    // identical for both formats, so data.csv and data.romk can share it
    let text = set.manifest().to_text();
    io::atomic_write(&manifest_path(path), |w| w.write_all(text.as_bytes()))
}

/// `S = [x₁ … x_{m−1}]`, `Ṡ = [x₂ … x_m]`.
pub fn split_shifted(set: &SnapshotSet) -> Result<(Matrix, Matrix)> {
    let m = set.m();
    if m < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 snapshots to form shifted pairs, got {m}"
        )));
    }
    let s = set.data.columns(0, m - 1).into_owned();
    let sdot = set.data.columns(1, m - 1).into_owned();
    Ok((s, sdot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn csv_two_columns() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "1,0.5\n0,0\n").unwrap();
        let s = load(&p, Format::Csv).unwrap();
        assert_eq!(s.data(), &m(2, 2, &[1.0, 0.5, 0.0, 0.0]));
        assert_eq!(s.data().column(0).as_slice(), &[1.0, 0.0]);
        assert_eq!(s.data().column(1).as_slice(), &[0.5, 0.0]);
    }

    #[test]
    fn csv_nan_names_coordinates() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "1,2,3\n4,nan,6\n").unwrap();
        let err = load(&p, Format::Csv).unwrap_err();
        assert!(matches!(err, Error::Validation(ref msg) if msg.contains("(row 1, col 1)")), "{err}");
    }

    #[test]
    fn csv_ragged_rows() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "1,2,3\n4,5\n").unwrap();
        assert!(matches!(load(&p, Format::Csv), Err(Error::Dimension(_))));
    }

    #[test]
    fn csv_single_value_body() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("one.csv");
        let s = SnapshotSet::new(m(1, 1, &[3.25])).unwrap();
        save(&s, &p, Format::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "3.25\n");
        assert_eq!(load(&p, Format::Csv).unwrap(), s);
    }

    #[test]
    fn csv_round_trip_with_times_params_dt() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = SnapshotSet::new(m(2, 3, &[0.1, 1.0 / 3.0, -2.5e-8, 4.0, 5.0, 6.0]))
            .unwrap()
            .with_times(vec![0.0, 0.5, 1.0])
            .unwrap()
            .with_params(m(1, 3, &[1.0, 2.0, 3.0]), vec!["mu".into()])
            .unwrap()
            .with_dt(0.25)
            .unwrap();
        save(&s, &p, Format::Csv).unwrap();
        let back = load(&p, Format::Csv).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.dt(), 0.25);
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.romk");
        let s = SnapshotSet::new(m(2, 2, &[1.0, -0.0, f64::MIN_POSITIVE, 7.5]))
            .unwrap()
            .with_params(m(2, 2, &[1.0, 2.0, 3.0, 4.0]), vec!["a".into(), "b".into()])
            .unwrap();
        save(&s, &p, Format::RomkBinary).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"ROMK");
        assert_eq!(bytes.len(), HEADER_LEN + 8 * (4 + 4));
        let back = load(&p, Format::RomkBinary).unwrap();
        assert_eq!(encode_binary(&back), bytes);
        assert_eq!(back.param_names(), &["a", "b"]);
    }

    #[test]
    fn binary_header_layout() {
        let s = SnapshotSet::new(m(1, 2, &[1.0, 2.0])).unwrap().with_times(vec![0.0, 1.0]).unwrap();
        let b = encode_binary(&s);
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..16], &1u64.to_le_bytes());
        assert_eq!(&b[16..24], &2u64.to_le_bytes());
        assert_eq!(&b[24..28], &FLAG_TIMES.to_le_bytes());
        assert_eq!(&b[28..36], &1.0f64.to_le_bytes());
    }

    #[test]
    fn checksum_mismatch_detected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let s = SnapshotSet::new(m(1, 2, &[1.0, 2.0])).unwrap();
        save(&s, &p, Format::Csv).unwrap();
        std::fs::write(&p, "1,3\n").unwrap();
        assert!(matches!(load(&p, Format::Csv), Err(Error::Validation(ref msg)) if msg.contains("checksum")));
    }

    #[test]
    fn save_to_missing_directory_is_io_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("nope").join("s.romk");
        let s = SnapshotSet::new(m(1, 1, &[1.0])).unwrap();
        assert!(matches!(save(&s, &p, Format::RomkBinary), Err(Error::Io { .. })));
        assert!(!p.exists());
    }

    #[test]
    fn times_validation_and_dt_resolution() {
        let base = || SnapshotSet::new(m(1, 3, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(base().with_times(vec![0.0, 0.0, 1.0]), Err(Error::Validation(_))));
        assert!(matches!(base().with_times(vec![0.0, 0.1, 0.3]), Err(Error::Validation(_))));
        assert!(matches!(base().with_times(vec![0.0, 1.0]), Err(Error::Dimension(_))));
        assert_eq!(base().dt(), 1.0);
        assert_eq!(base().with_times(vec![0.0, 0.2, 0.4]).unwrap().dt(), 0.2);
        let explicit = base().with_times(vec![0.0, 0.2, 0.4]).unwrap().with_dt(0.5).unwrap();
        assert_eq!(explicit.dt(), 0.5);
    }

    #[test]
    fn split_shifted_definition() {
        let s = SnapshotSet::new(m(1, 3, &[1.0, 2.0, 3.0])).unwrap();
        let (a, b) = split_shifted(&s).unwrap();
        assert_eq!(a, m(1, 2, &[1.0, 2.0]));
        assert_eq!(b, m(1, 2, &[2.0, 3.0]));

        let two = SnapshotSet::new(m(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let (a, b) = split_shifted(&two).unwrap();
        assert_eq!(a.column(0), two.data().column(0));
        assert_eq!(b.column(0), two.data().column(1));

        let one = SnapshotSet::new(m(2, 1, &[1.0, 2.0])).unwrap();
        assert!(matches!(split_shifted(&one), Err(Error::Dimension(_))));
    }

    #[test]
    fn model_file_rejected_as_snapshots() {
        let h = Header { n_dof: 1, m: 1, flags: FLAG_MODEL };
        let mut b = Vec::new();
        h.write_to(&mut b);
        assert!(matches!(decode_binary(&b, "mem"), Err(Error::Format { .. })));
    }

    #[test]
    fn manifest_text_round_trip() {
        let man = DatasetManifest {
            n_dof: 3,
            m: 2,
            dt: Some(0.1),
            param_names: vec!["mu".into()],
            checksum: 0xdead_beef,
            times: Some(vec![0.0, 0.1]),
            params: Some(vec![vec![1.0, 2.0]]),
        };
        assert_eq!(DatasetManifest::parse(&man.to_text(), "mem").unwrap(), man);
        assert!(DatasetManifest::parse("n_dof=1\nbogus\n", "mem").is_err());
    }
}
