//! File formats: dense matrices as CSV or raw binary, spectra and density
//! curves as CSV, experiment reports as JSON.
//!
//! All writers are deterministic byte-for-byte given equal inputs: floats are
//! formatted with the shortest representation that round-trips, records end
//! in a bare newline, and binary payloads are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::dyson::DensityCurve;
use crate::error::{Error, Result};
use crate::metrics::ExperimentReport;
use crate::spectral::{SampleKind, SpectralSample};

/// Leading bytes of the raw matrix format.
pub const MATRIX_MAGIC: [u8; 4] = *b"ESPM";

/// Hard ceiling on cells accepted from a matrix file (guards allocations
/// against corrupt headers).
const MAX_CELLS: u64 = 1 << 28;

/// On-disk matrix representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    /// `.csv` means CSV; anything else is the raw binary format.
    pub fn from_path(path: &Path) -> MatrixFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

// ---------------------------------------------------------------------------
// matrix CSV

/// Writes `i,j,value` records (zero-based indices, row-major order) under a
/// header line.
pub fn write_matrix_csv<W: Write>(m: &Array2<f64>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["i", "j", "value"])?;
    for ((i, j), v) in m.indexed_iter() {
        wtr.write_record([i.to_string(), j.to_string(), v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a matrix written by `write_matrix_csv`. Every cell must appear
/// exactly once; dimensions are the largest indices seen plus one.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<Array2<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    {
        let headers = rdr.headers()?;
        if headers != vec!["i", "j", "value"] {
            return Err(format_err(format!(
                "expected matrix header \"i,j,value\", found {headers:?}"
            )));
        }
    }
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    for record in rdr.records() {
        let record = record?;
        if record.len() != 3 {
            return Err(format_err(format!(
                "matrix record needs 3 fields, found {}",
                record.len()
            )));
        }
        let parse = |k: usize, what: &str| -> Result<&str> {
            record
                .get(k)
                .ok_or_else(|| format_err(format!("missing {what} field")))
        };
        let i: usize = parse(0, "row")?
            .parse()
            .map_err(|e| format_err(format!("bad row index: {e}")))?;
        let j: usize = parse(1, "column")?
            .parse()
            .map_err(|e| format_err(format!("bad column index: {e}")))?;
        let v: f64 = parse(2, "value")?
            .parse()
            .map_err(|e| format_err(format!("bad value: {e}")))?;
        if !v.is_finite() {
            return Err(format_err(format!("non-finite value at ({i}, {j})")));
        }
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        cells.push((i, j, v));
    }
    if cells.is_empty() {
        return Err(format_err("matrix file holds no cells"));
    }
    if (rows as u64) * (cols as u64) > MAX_CELLS {
        return Err(format_err(format!("matrix dimensions {rows}x{cols} too large")));
    }
    let mut out = Array2::from_elem((rows, cols), f64::NAN);
    for (i, j, v) in cells {
        if !out[[i, j]].is_nan() {
            return Err(format_err(format!("duplicate cell ({i}, {j})")));
        }
        out[[i, j]] = v;
    }
    if let Some(((i, j), _)) = out.indexed_iter().find(|(_, v)| v.is_nan()) {
        return Err(format_err(format!("missing cell ({i}, {j})")));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// matrix binary

/// Raw layout: magic "ESPM", u64 row count, u64 column count, then the f64
/// entries row-major; everything little-endian.
pub fn write_matrix_binary<W: Write>(m: &Array2<f64>, mut w: W) -> Result<()> {
    w.write_all(&MATRIX_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by `write_matrix_binary`, rejecting wrong magic,
/// truncation, and trailing bytes.
pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| format_err("file shorter than the matrix header"))?;
    if magic != MATRIX_MAGIC {
        return Err(format_err(format!(
            "bad magic {magic:?}, expected {MATRIX_MAGIC:?}"
        )));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|_| format_err("file shorter than the matrix header"))?;
    let rows = u64::from_le_bytes(word);
    r.read_exact(&mut word)
        .map_err(|_| format_err("file shorter than the matrix header"))?;
    let cols = u64::from_le_bytes(word);
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > MAX_CELLS {
        return Err(format_err(format!("bad matrix dimensions {rows}x{cols}")));
    }
    let count = (rows * cols) as usize;
    let mut payload = vec![0u8; count * 8];
    r.read_exact(&mut payload)
        .map_err(|_| format_err("matrix payload truncated"))?;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(format_err("trailing bytes after the matrix payload"));
    }
    let mut values = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(format_err("non-finite value in matrix payload"));
        }
        values.push(v);
    }
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| format_err(format!("shape error: {e}")))
}

/// Writes a matrix to `path` in the given format.
pub fn save_matrix(path: &Path, m: &Array2<f64>, format: MatrixFormat) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    match format {
        MatrixFormat::Csv => write_matrix_csv(m, file),
        MatrixFormat::Binary => write_matrix_binary(m, file),
    }
}

/// Reads a matrix from `path` in the given format.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<Array2<f64>> {
    let file = BufReader::new(File::open(path)?);
    match format {
        MatrixFormat::Csv => read_matrix_csv(file),
        MatrixFormat::Binary => read_matrix_binary(file),
    }
}

// ---------------------------------------------------------------------------
// spectra, densities, reports

/// Eigenvalue samples export as `re,im` records; singular-value samples
/// (symmetrized or not) as a single `sigma` column.
pub fn write_spectral_csv<W: Write>(sample: &SpectralSample, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    match sample.kind {
        SampleKind::Eigenvalues => {
            wtr.write_record(["re", "im"])?;
            for v in &sample.values {
                wtr.write_record([v.re.to_string(), v.im.to_string()])?;
            }
        }
        SampleKind::SingularValues | SampleKind::SymmetrizedSingular => {
            wtr.write_record(["sigma"])?;
            for v in &sample.values {
                wtr.write_record([v.re.to_string()])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Density curves export as `x,rho` records.
pub fn write_density_csv<W: Write>(curve: &DensityCurve, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "rho"])?;
    for (x, rho) in curve.xs.iter().zip(&curve.rho) {
        wtr.write_record([x.to_string(), rho.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a report as pretty JSON with a trailing newline.
pub fn save_report(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut text = report.to_json_pretty()?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a report back.
pub fn load_report(path: &Path) -> Result<ExperimentReport> {
    let file = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(file)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ReportRow;
    use crate::spectral::{eigenvalues, singular_values};
    use ndarray::array;
    use num_complex::Complex64;

    fn sample_matrix() -> Array2<f64> {
        array![
            [1.0, -0.25, 1e-17],
            [0.1 + 0.2, f64::MIN_POSITIVE, -0.0],
            [123456.789, -1.0 / 3.0, 2.0f64.sqrt()],
        ]
    }

    #[test]
    fn matrix_csv_roundtrip_is_bit_exact() {
        let m = sample_matrix();
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i,j,value\n"));
        assert!(text.contains("0,1,-0.25\n"));
        let back = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(back.dim(), m.dim());
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn matrix_csv_rejects_malformed_files() {
        assert!(read_matrix_csv("a,b\n0,0,1\n".as_bytes()).is_err());
        assert!(read_matrix_csv("i,j,value\n".as_bytes()).is_err());
        // duplicate cell
        assert!(read_matrix_csv("i,j,value\n0,0,1\n0,0,2\n".as_bytes()).is_err());
        // hole at (0,0)
        assert!(read_matrix_csv("i,j,value\n0,1,1\n1,0,1\n1,1,1\n".as_bytes()).is_err());
        // non-finite entry
        assert!(read_matrix_csv("i,j,value\n0,0,NaN\n".as_bytes()).is_err());
        assert!(read_matrix_csv("i,j,value\n0,0,abc\n".as_bytes()).is_err());
    }

    #[test]
    fn matrix_binary_roundtrip_is_bit_exact() {
        let m = sample_matrix();
        let mut buf = Vec::new();
        write_matrix_binary(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"ESPM");
        assert_eq!(buf.len(), 4 + 8 + 8 + m.len() * 8);
        assert_eq!(u64::from_le_bytes(buf[4..12].try_into().unwrap()), 3);
        let back = read_matrix_binary(buf.as_slice()).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn matrix_binary_rejects_malformed_files() {
        let m = sample_matrix();
        let mut buf = Vec::new();
        write_matrix_binary(&m, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_matrix_binary(bad_magic.as_slice()).is_err());

        let truncated = &buf[..buf.len() - 1];
        assert!(read_matrix_binary(truncated).is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(read_matrix_binary(trailing.as_slice()).is_err());

        let mut huge = buf.clone();
        huge[4..12].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_matrix_binary(huge.as_slice()).is_err());
    }

    #[test]
    fn format_follows_extension() {
        assert_eq!(MatrixFormat::from_path(Path::new("m.csv")), MatrixFormat::Csv);
        assert_eq!(MatrixFormat::from_path(Path::new("m.CSV")), MatrixFormat::Csv);
        assert_eq!(MatrixFormat::from_path(Path::new("m.espm")), MatrixFormat::Binary);
        assert_eq!(MatrixFormat::from_path(Path::new("m")), MatrixFormat::Binary);
    }

    #[test]
    fn save_and_load_through_paths() {
        let dir = std::env::temp_dir().join("espectra-export-test");
        std::fs::create_dir_all(&dir).unwrap();
        let m = sample_matrix();
        for (name, format) in [("m.csv", MatrixFormat::Csv), ("m.espm", MatrixFormat::Binary)] {
            let path = dir.join(name);
            save_matrix(&path, &m, format).unwrap();
            assert_eq!(MatrixFormat::from_path(&path), format);
            let back = load_matrix(&path, format).unwrap();
            assert_eq!(back, m);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn spectral_csv_headers_follow_the_kind() {
        let m = array![[0.0, 1.0], [-1.0, 0.0]];
        let eig = eigenvalues(&m).unwrap();
        let mut buf = Vec::new();
        write_spectral_csv(&eig, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("re,im\n"));
        assert_eq!(text.lines().count(), 3);

        let sv = singular_values(&m).unwrap();
        let mut buf = Vec::new();
        write_spectral_csv(&sv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sigma\n"));
        assert!(text.contains("\n1\n"));
    }

    #[test]
    fn density_csv_layout() {
        let curve = DensityCurve {
            xs: vec![-1.0, 0.0, 1.0],
            rho: vec![0.1, 0.3, 0.1],
            z: Complex64::new(0.0, 0.0),
            eps: 1e-4,
        };
        let mut buf = Vec::new();
        write_density_csv(&curve, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "x,rho\n-1,0.1\n0,0.3\n1,0.1\n");
    }

    #[test]
    fn report_file_roundtrip() {
        let dir = std::env::temp_dir().join("espectra-report-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.json");
        let report = ExperimentReport {
            name: "demo".into(),
            params: serde_json::json!({"n": 8}),
            per_n: vec![ReportRow {
                n: 8,
                metric: "radial_ks".into(),
                stat: 0.01,
                threshold: 0.05,
                pass: true,
            }],
            seeds: vec![1, 2],
            wall_time_ms: 5,
        };
        save_report(&path, &report).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"per_N\""));
        assert!(text.ends_with('\n'));
        let back = load_report(&path).unwrap();
        assert_eq!(back.name, "demo");
        assert_eq!(back.per_n[0].n, 8);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
