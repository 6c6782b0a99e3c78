//! Delimited numeric matrices, run configuration files and MRF edge lists.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSpec, MrfEdge};

/// A numeric matrix with its header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub values: DMatrix<f64>,
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn delimiter_for(path: &Path, first_line: &str) -> u8 {
    let tsv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("tab"));
    if tsv || first_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Reads a CSV or TSV file whose first row is a header.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    let first = text.lines().next().unwrap_or("");
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path, first))
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(path, "missing header row"));
    }
    let width = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => parse_err(path, format!("ragged row {}", line + 2)),
            _ => parse_err(path, e.to_string()),
        })?;
        if record.len() != width {
            return Err(parse_err(path, format!("ragged row {}", line + 2)));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                parse_err(
                    path,
                    format!("row {}, column {}: '{field}' is not a number (missing values are not supported)", line + 2, col + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, format!("row {}, column {}: non-finite value", line + 2, col + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(Table {
        header,
        values: DMatrix::from_row_slice(rows, width, &data),
    })
}

/// Formats a value with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a matrix as CSV with a header row.
pub fn write_table(path: &Path, header: &[String], values: &DMatrix<f64>) -> Result<()> {
    if header.len() != values.ncols() {
        return Err(Error::Dimension(format!(
            "{} header names for {} columns",
            header.len(),
            values.ncols()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(format!("cannot write {}", path.display()), e.into()))?;
    let io_err = |e: csv::Error| Error::io(format!("cannot write {}", path.display()), e.into());
    w.write_record(header).map_err(io_err)?;
    for row in values.row_iter() {
        w.write_record(row.iter().map(|&v| format_value(v))).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))?;
    Ok(())
}

/// Writes `[Y, X, X0]` as one combined CSV.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let (n, s, p, p0) = (data.n(), data.s(), data.p(), data.p0());
    let mut m = DMatrix::zeros(n, s + p + p0);
    m.columns_mut(0, s).copy_from(data.y());
    m.columns_mut(s, p).copy_from(data.x());
    m.columns_mut(s + p, p0).copy_from(data.x0());
    let header: Vec<String> = data
        .y_names()
        .iter()
        .chain(data.x_names())
        .chain(data.x0_names())
        .cloned()
        .collect();
    write_table(path, &header, &m)
}

/// Parses 1-based column selections such as `1:10`, `3`, `1,4,7:9`.
pub fn parse_index_block(spec: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let bad = || Error::Config(format!("invalid column selection '{spec}'"));
        if let Some((a, b)) = part.split_once(':').or_else(|| part.split_once('-')) {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b < a {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            let a: usize = part.parse().map_err(|_| bad())?;
            if a == 0 {
                return Err(bad());
            }
            out.push(a);
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("empty column selection '{spec}'")));
    }
    Ok(out)
}

/// Where the data of a run come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// One combined file split into blocks of 1-based columns. When `x` is
    /// absent, every column outside `y` and `x0` is a predictor.
    Combined {
        path: PathBuf,
        y: Vec<usize>,
        x: Option<Vec<usize>>,
        x0: Option<Vec<usize>>,
    },
    Separate {
        y: PathBuf,
        x: PathBuf,
        x0: Option<PathBuf>,
    },
}

fn take_columns(table: &Table, cols: &[usize]) -> (DMatrix<f64>, Vec<String>) {
    let m = DMatrix::from_fn(table.values.nrows(), cols.len(), |i, j| table.values[(i, cols[j])]);
    (m, cols.iter().map(|&c| table.header[c].clone()).collect())
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Combined { path, y, x, x0 } => {
            let table = read_table(path)?;
            let width = table.values.ncols();
            let mut owner = vec![false; width];
            let mut claim = |block: &[usize]| -> Result<Vec<usize>> {
                block
                    .iter()
                    .map(|&c| {
                        if c == 0 || c > width {
                            return Err(Error::OutOfRange { index: c, limit: width });
                        }
                        if owner[c - 1] {
                            return Err(Error::OverlappingBlocks(c));
                        }
                        owner[c - 1] = true;
                        Ok(c - 1)
                    })
                    .collect()
            };
            let y_cols = claim(y)?;
            let x0_cols = match x0 {
                Some(b) => claim(b)?,
                None => Vec::new(),
            };
            let x_cols = match x {
                Some(b) => claim(b)?,
                None => {
                    (0..width).filter(|&c| !owner[c]).collect()
                }
            };
            let (ym, yn) = take_columns(&table, &y_cols);
            let (xm, xn) = take_columns(&table, &x_cols);
            let (x0m, x0n) = take_columns(&table, &x0_cols);
            Dataset::with_names(ym, xm, x0m, yn, xn, x0n)
        }
        DataSource::Separate { y, x, x0 } => {
            let ty = read_table(y)?;
            let tx = read_table(x)?;
            let (x0m, x0n) = match x0 {
                Some(p) => {
                    let t = read_table(p)?;
                    (t.values, t.header)
                }
                None => (DMatrix::zeros(ty.values.nrows(), 0), Vec::new()),
            };
            Dataset::with_names(ty.values, tx.values, x0m, ty.header, tx.header, x0n)
        }
    }
}

/// Parses a flat `key = value` file. `#` starts a comment; values may be
/// quoted. Repeated keys are errors.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, format!("line {}: expected key = value", no + 1)))?;
        let key = k.trim().to_owned();
        let value = v.trim().trim_matches('"').trim_matches('\'').to_owned();
        if key.is_empty() {
            return Err(parse_err(path, format!("line {}: empty key", no + 1)));
        }
        if out.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("key '{key}' given more than once")));
        }
    }
    Ok(out)
}

/// Reads an MRF edge list: one `i j [weight]` per line, 0-based flattened
/// indicator indices, weight 1 when absent.
pub fn read_mrf_edges(path: &Path) -> Result<Vec<MrfEdge>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    let mut edges = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        let bad = || parse_err(path, format!("line {}: expected 'i j [weight]'", no + 1));
        if fields.len() < 2 || fields.len() > 3 {
            return Err(bad());
        }
        let i: usize = fields[0].parse().map_err(|_| bad())?;
        let j: usize = fields[1].parse().map_err(|_| bad())?;
        let weight: f64 = match fields.get(2) {
            Some(w) => w.parse().map_err(|_| bad())?,
            None => 1.0,
        };
        if i == j {
            return Err(parse_err(path, format!("line {}: self-loop {i}", no + 1)));
        }
        edges.push(MrfEdge {
            i: i.min(j),
            j: i.max(j),
            weight,
        });
    }
    Ok(edges)
}

pub fn write_mrf_edges(path: &Path, edges: &[MrfEdge]) -> Result<()> {
    let mut text = String::new();
    for e in edges {
        if e.weight == 1.0 {
            text.push_str(&format!("{} {}\n", e.i, e.j));
        } else {
            text.push_str(&format!("{} {} {}\n", e.i, e.j, e.weight));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

/// A parsed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spec: ModelSpec,
    pub data: Option<DataSource>,
    pub mrf_path: Option<PathBuf>,
    pub max_threads: Option<usize>,
    pub progress_interval: Option<usize>,
    pub out_path: Option<PathBuf>,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

/// Parses a run configuration. Relative paths are resolved against the
/// directory of the configuration file. Unknown keys are errors.
pub fn parse_run_config(text: &str, path: &Path) -> Result<RunConfig> {
    let kv = parse_key_values(text, path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |v: &str| -> PathBuf {
        let p = PathBuf::from(v);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let mut spec = ModelSpec::default();
    let mut cfg = RunConfig {
        spec: ModelSpec::default(),
        data: None,
        mrf_path: None,
        max_threads: None,
        progress_interval: None,
        out_path: None,
    };
    let (mut data, mut y, mut x, mut x0) = (None, None, None, None);
    for (key, v) in &kv {
        match key.as_str() {
            "data" => data = Some(resolve(v)),
            "Y" => y = Some(v.clone()),
            "X" => x = Some(v.clone()),
            "X_0" | "X0" => x0 = Some(v.clone()),
            "covariancePrior" => spec.covariance_prior = v.parse()?,
            "gammaPrior" => spec.gamma_prior = v.parse()?,
            "gammaSampler" => spec.gamma_sampler = v.parse()?,
            "gammaInit" => spec.gamma_init = v.parse()?,
            "mrfG" => cfg.mrf_path = Some(resolve(v)),
            "nIter" => spec.n_iter = parse_num(key, v)?,
            "burnin" => spec.burnin = parse_num(key, v)?,
            "nChains" => spec.n_chains = parse_num(key, v)?,
            "seed" => spec.seed = parse_num(key, v)?,
            "maxThreads" => cfg.max_threads = Some(parse_num(key, v)?),
            "progressInterval" => cfg.progress_interval = Some(parse_num(key, v)?),
            "outFilePath" => cfg.out_path = Some(resolve(v)),
            other => match other.strip_prefix("hyperpar.") {
                Some(name) => spec.hyperparameters.set(name, parse_num(key, v)?)?,
                None => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
            },
        }
    }
    cfg.data = match (data, y, x, x0) {
        (Some(path), Some(y), x, x0) => Some(DataSource::Combined {
            path,
            y: parse_index_block(&y)?,
            x: x.as_deref().map(parse_index_block).transpose()?,
            x0: x0.as_deref().map(parse_index_block).transpose()?,
        }),
        (Some(_), None, _, _) => return Err(Error::Config("'data' requires a 'Y' column selection".into())),
        (None, Some(y), Some(x), x0) => Some(DataSource::Separate {
            y: resolve(&y),
            x: resolve(&x),
            x0: x0.as_deref().map(resolve),
        }),
        (None, None, None, None) => None,
        _ => return Err(Error::Config("give either 'data' with column blocks, or 'Y' and 'X' files".into())),
    };
    cfg.spec = spec;
    Ok(cfg)
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
    parse_run_config(&text, path)
}
