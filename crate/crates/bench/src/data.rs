//! Dataset ingestion: image directories, dense CSV, Matrix Market, and a
//! seeded synthetic generator.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use nnsvd::{CsrMatrix, DataMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    DenseImage,
    SparseDocument,
    Synthetic,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::DenseImage => "dense-image",
            DatasetKind::SparseDocument => "sparse-document",
            DatasetKind::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub matrix: DataMatrix,
    pub kind: DatasetKind,
    pub provenance: Vec<PathBuf>,
}

impl Dataset {
    /// `1 - nnz / (m n)`, with `nnz` the stored entries for sparse input.
    pub fn sparsity(&self) -> f64 {
        let (m, n) = self.matrix.shape();
        1.0 - self.matrix.nnz() as f64 / (m * n) as f64
    }
}

/// On-disk input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pgm,
    Png,
    Csv,
    MatrixMarket,
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(Format::Pgm),
            "png" => Ok(Format::Png),
            "csv" => Ok(Format::Csv),
            "mtx" | "mm" | "matrix-market" => Ok(Format::MatrixMarket),
            other => Err(BenchError::Config(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Pgm => "pgm",
            Format::Png => "png",
            Format::Csv => "csv",
            Format::MatrixMarket => "mtx",
        })
    }
}

impl Format {
    /// Guesses from the file extension; directories have no default.
    pub fn infer(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?;
        ext.parse().ok()
    }
}

/// Loads `path` as the given format (inferred from the extension if `None`).
pub fn load(path: &Path, format: Option<Format>) -> Result<Dataset> {
    let format = match format.or_else(|| Format::infer(path)) {
        Some(f) => f,
        None => {
            return Err(BenchError::Config(format!(
                "cannot tell the format of {}; pass --format",
                path.display()
            )))
        }
    };
    match format {
        Format::Pgm | Format::Png => load_dense_images(path, format),
        Format::Csv if path.is_dir() => load_dense_images(path, format),
        Format::Csv => load_dense_csv(path),
        Format::MatrixMarket => load_sparse_matrix(path),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "data".into())
}

/// One column per image, flattened row-major and scaled to `[0, 1]`.
///
/// `dir` is scanned for files with the format's extension, in lexicographic
/// filename order. With `Format::Csv`, `dir` may instead be a CSV file that
/// already holds the vectorized images as columns.
pub fn load_dense_images(dir: &Path, format: Format) -> Result<Dataset> {
    if format == Format::Csv && !dir.is_dir() {
        let mut d = load_dense_csv(dir)?;
        d.kind = DatasetKind::DenseImage;
        return Ok(d);
    }
    let ext = match format {
        Format::Pgm => "pgm",
        Format::Png => "png",
        _ => return Err(BenchError::Config(format!("{format} is not an image format"))),
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| BenchError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case(ext))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(BenchError::Config(format!(
            "no .{ext} files in {}",
            dir.display()
        )));
    }

    let mut dims = None;
    let mut columns = Vec::with_capacity(files.len());
    for path in &files {
        let img = image::ImageReader::open(path)
            .map_err(|e| BenchError::io(path, e))?
            .with_guessed_format()
            .map_err(|e| BenchError::io(path, e))?
            .decode()
            .map_err(|e| BenchError::UnreadableFile {
                path: path.clone(),
                message: e.to_string(),
            })?
            .into_luma8();
        let found = img.dimensions();
        match dims {
            None => dims = Some(found),
            Some(expected) if expected != found => {
                return Err(BenchError::MixedDimensions {
                    path: path.clone(),
                    expected,
                    found,
                })
            }
            _ => {}
        }
        // ImageBuffer pixels are stored row-major.
        columns.push(img.into_raw());
    }
    let m = columns[0].len();
    let n = columns.len();
    let x = Array2::from_shape_fn((m, n), |(i, j)| f64::from(columns[j][i]) / 255.0);
    Ok(Dataset {
        name: stem(dir),
        matrix: DataMatrix::dense(x)?,
        kind: DatasetKind::DenseImage,
        provenance: files,
    })
}

/// Dense row-major CSV. A first row that does not parse as numbers is taken
/// as a header and skipped.
pub fn load_dense_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if k == 0 => continue,
            Err(e) => return Err(BenchError::parse(path, line, e.to_string())),
        };
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(BenchError::parse(
                    path,
                    line,
                    format!("{} fields, expected {}", row.len(), first.len()),
                ));
            }
        }
        if let Some(&v) = row.iter().find(|v| !v.is_finite()) {
            return Err(BenchError::parse(path, line, format!("non-finite value {v}")));
        }
        if let Some(&value) = row.iter().find(|&&v| v < 0.0) {
            return Err(BenchError::NegativeEntry {
                path: path.into(),
                line,
                value,
            });
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(BenchError::parse(path, 1, "no data rows"));
    }
    let (m, n) = (rows.len(), rows[0].len());
    let x = Array2::from_shape_fn((m, n), |(i, j)| rows[i][j]);
    Ok(Dataset {
        name: stem(path),
        matrix: DataMatrix::dense(x)?,
        kind: DatasetKind::DenseImage,
        provenance: vec![path.into()],
    })
}

fn csv_error(path: &Path, e: csv::Error) -> BenchError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => BenchError::io(path, io),
        kind => BenchError::parse(path, line, format!("{kind:?}")),
    }
}

/// Writes a dense matrix as headerless row-major CSV with shortest
/// round-trip float formatting.
pub fn write_dense_csv(path: &Path, x: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for row in x.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MmField {
    Real,
    Integer,
    Pattern,
}

/// Reads a Matrix Market `coordinate` file into CSR.
///
/// Accepts `real`, `integer` and `pattern` fields with `general` or
/// `symmetric` storage. Duplicate entries are summed; explicitly stored
/// zeros are kept as stored entries.
pub fn load_sparse_matrix(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    let csr = read_matrix_market(BufReader::new(file), path)?;
    Ok(Dataset {
        name: stem(path),
        matrix: DataMatrix::Sparse(csr),
        kind: DatasetKind::SparseDocument,
        provenance: vec![path.into()],
    })
}

pub fn read_matrix_market<R: BufRead>(reader: R, path: &Path) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next_line = || -> Result<Option<(usize, String)>> {
        match lines.next() {
            None => Ok(None),
            Some((k, Ok(l))) => Ok(Some((k, l))),
            Some((_, Err(e))) => Err(BenchError::io(path, e)),
        }
    };

    let (_, banner) = next_line()?.ok_or_else(|| BenchError::parse(path, 1, "empty file"))?;
    let tokens: Vec<String> = banner.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(BenchError::parse(path, 1, "missing %%MatrixMarket matrix banner"));
    }
    if tokens[2] != "coordinate" {
        return Err(BenchError::parse(path, 1, format!("unsupported layout {:?}", tokens[2])));
    }
    let field = match tokens[3].as_str() {
        "real" | "double" => MmField::Real,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => return Err(BenchError::parse(path, 1, format!("unsupported field {other:?}"))),
    };
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(BenchError::parse(path, 1, format!("unsupported symmetry {other:?}"))),
    };

    let (size_line, size) = loop {
        let (k, l) = next_line()?.ok_or_else(|| BenchError::parse(path, 1, "missing size line"))?;
        let t = l.trim();
        if !t.is_empty() && !t.starts_with('%') {
            break (k, t.to_string());
        }
    };
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| BenchError::parse(path, size_line, e.to_string()))?;
    let [rows, cols, entries] = dims[..] else {
        return Err(BenchError::parse(path, size_line, "size line needs rows cols nnz"));
    };
    if symmetric && rows != cols {
        return Err(BenchError::parse(path, size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(if symmetric { 2 * entries } else { entries });
    let mut seen = 0;
    while let Some((k, l)) = next_line()? {
        let t = l.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        seen += 1;
        if seen > entries {
            return Err(BenchError::parse(path, k, format!("more than {entries} entries")));
        }
        let mut it = t.split_whitespace();
        let mut index = |what: &str, bound: usize| -> Result<usize> {
            let v: usize = it
                .next()
                .ok_or_else(|| BenchError::parse(path, k, format!("missing {what} index")))?
                .parse()
                .map_err(|e: std::num::ParseIntError| BenchError::parse(path, k, e.to_string()))?;
            if v == 0 || v > bound {
                return Err(BenchError::parse(path, k, format!("{what} index {v} out of 1..={bound}")));
            }
            Ok(v - 1)
        };
        let i = index("row", rows)?;
        let j = index("column", cols)?;
        let value = match field {
            MmField::Pattern => 1.0,
            MmField::Real | MmField::Integer => {
                let tok = it
                    .next()
                    .ok_or_else(|| BenchError::parse(path, k, "missing value"))?;
                let v = if field == MmField::Integer {
                    tok.parse::<i64>().map(|v| v as f64).map_err(|e| e.to_string())
                } else {
                    tok.parse::<f64>().map_err(|e| e.to_string())
                }
                .map_err(|e| BenchError::parse(path, k, e))?;
                if !v.is_finite() {
                    return Err(BenchError::parse(path, k, format!("non-finite value {tok}")));
                }
                v
            }
        };
        if it.next().is_some() {
            return Err(BenchError::parse(path, k, "trailing fields"));
        }
        if value < 0.0 {
            return Err(BenchError::NegativeEntry {
                path: path.into(),
                line: k,
                value,
            });
        }
        triplets.push((i, j, value));
        if symmetric && i != j {
            triplets.push((j, i, value));
        }
    }
    if seen != entries {
        return Err(BenchError::parse(
            path,
            size_line,
            format!("header declares {entries} entries, found {seen}"),
        ));
    }
    Ok(CsrMatrix::from_triplets(rows, cols, &triplets)?)
}

/// Writes every stored entry as `coordinate real general`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_matrix_market<W: Write>(out: W, x: &CsrMatrix) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", x.nrows(), x.ncols(), x.nnz())?;
    for (i, j, v) in x.triplets() {
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    out.flush()
}

pub fn save_matrix_market(path: &Path, x: &CsrMatrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_matrix_market(file, x).map_err(|e| BenchError::io(path, e))
}

/// Writes `x` to `path`, choosing Matrix Market or dense CSV by extension.
pub fn save(path: &Path, x: &DataMatrix) -> Result<()> {
    match Format::infer(path) {
        Some(Format::MatrixMarket) => {
            let csr = match x {
                DataMatrix::Sparse(c) => c.clone(),
                DataMatrix::Dense(a) => CsrMatrix::from_dense(a)?,
            };
            save_matrix_market(path, &csr)
        }
        Some(Format::Csv) => write_dense_csv(path, &x.to_dense()),
        _ => Err(BenchError::Config(format!(
            "output {} must end in .mtx or .csv",
            path.display()
        ))),
    }
}

/// Parameters of [`make_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise: f64,
    pub seed: u64,
}

impl FromStr for SyntheticSpec {
    type Err = BenchError;

    /// `synthetic:MxN:RANK:NOISE:SEED`, e.g. `synthetic:200x150:20:0.05:1`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            BenchError::Config(format!(
                "{s:?} is not synthetic:MxN:RANK:NOISE:SEED"
            ))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let [tag, shape, rank, noise, seed] = parts[..] else {
            return Err(bad());
        };
        if tag != "synthetic" {
            return Err(bad());
        }
        let (m, n) = shape.split_once('x').ok_or_else(bad)?;
        Ok(SyntheticSpec {
            m: m.parse().map_err(|_| bad())?,
            n: n.parse().map_err(|_| bad())?,
            rank: rank.parse().map_err(|_| bad())?,
            noise: noise.parse().map_err(|_| bad())?,
            seed: seed.parse().map_err(|_| bad())?,
        })
    }
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "synthetic:{}x{}:{}:{}:{}",
            self.m, self.n, self.rank, self.noise, self.seed
        )
    }
}

/// `X = W* H* + noise * E` with `W*`, `H*`, `E` uniform on `[0, 1)`, drawn in
/// that order from one ChaCha8 stream, clipped at zero.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    let SyntheticSpec {
        m,
        n,
        rank,
        noise,
        seed,
    } = *spec;
    if m == 0 || n == 0 || rank == 0 || rank > m.min(n) {
        return Err(BenchError::Config(format!(
            "synthetic rank {rank} must be in 1..={}",
            m.min(n)
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(BenchError::Config(format!("noise {noise} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Array2::from_shape_fn((m, rank), |_| rng.random::<f64>());
    let h = Array2::from_shape_fn((rank, n), |_| rng.random::<f64>());
    let mut x = w.dot(&h);
    for v in x.iter_mut() {
        *v = (*v + noise * rng.random::<f64>()).max(0.0);
    }
    Ok(Dataset {
        name: format!("synthetic-{m}x{n}-r{rank}-n{noise}-s{seed}"),
        matrix: DataMatrix::dense(x)?,
        kind: DatasetKind::Synthetic,
        provenance: Vec::new(),
    })
}

/// Where a dataset comes from: a file/directory or the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Path { path: PathBuf, format: Option<Format> },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    /// `synthetic:...` strings select the generator; anything else is a path.
    pub fn parse(s: &str, format: Option<Format>) -> Result<Self> {
        if s.starts_with("synthetic:") {
            Ok(DataSource::Synthetic(s.parse()?))
        } else {
            Ok(DataSource::Path {
                path: s.into(),
                format,
            })
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Path { path, format } => load(path, *format),
            DataSource::Synthetic(spec) => make_synthetic(spec),
        }
    }
}
