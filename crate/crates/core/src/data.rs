//! Dataset ingestion, synthetic data, preprocessing and resampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("line {line}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: label `{value}` is not 0 or 1")]
    NonBinaryLabel { line: u64, value: String },
    #[error("column `{0}` has zero variance and cannot be standardized")]
    ZeroVariance(String),
    #[error("test fraction {fraction} leaves an empty split of {rows} rows")]
    DegenerateSplit { fraction: f64, rows: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("invalid dataset shape: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    names: Vec<String>,
    label_column: String,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, label_column: impl Into<String>) -> Result<Self, DataError> {
        let label_column = label_column.into();
        let mut seen = HashSet::new();
        for n in names.iter().chain(std::iter::once(&label_column)) {
            if !seen.insert(n.as_str()) {
                return Err(DataError::DuplicateColumn(n.clone()));
            }
        }
        Ok(Self {
            names,
            label_column,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn feature_count(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreprocessMode {
    None,
    Standardize,
    MinMax,
}

impl std::str::FromStr for PreprocessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "standardize" => Ok(Self::Standardize),
            "minmax" => Ok(Self::MinMax),
            other => Err(format!(
                "unknown preprocessing `{other}` (expected none, standardize or minmax)"
            )),
        }
    }
}

/// Per-column affine transform plus the box the transformed data occupies.
///
/// `stats` holds `(mean, stddev)` for standardize, `(min, max)` for minmax and
/// the identity `(0, 1)` for none. A constant column under minmax maps to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessState {
    pub mode: PreprocessMode,
    pub stats: Vec<(f64, f64)>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

impl PreprocessState {
    fn offset_scale(&self, col: usize) -> (f64, f64) {
        let (a, b) = self.stats[col];
        match self.mode {
            PreprocessMode::None => (0.0, 1.0),
            PreprocessMode::Standardize => (a, b),
            PreprocessMode::MinMax => {
                let range = b - a;
                (a, if range > 0.0 { range } else { 1.0 })
            }
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (off, scale) = self.offset_scale(j);
                (v - off) / scale
            })
            .collect()
    }

    pub fn inverse_transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let (off, scale) = self.offset_scale(j);
                v * scale + off
            })
            .collect()
    }

    /// Per-feature `[lo, hi]` pairs.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.box_lo
            .iter()
            .zip(&self.box_hi)
            .map(|(&l, &h)| (l, h))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.box_lo.len()
            && point
                .iter()
                .zip(self.box_lo.iter().zip(&self.box_hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    pub fn clamp(&self, point: &mut [f64]) {
        for (v, (&l, &h)) in point.iter_mut().zip(self.box_lo.iter().zip(&self.box_hi)) {
            *v = v.clamp(l, h);
        }
    }
}

/// Immutable feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<Vec<f64>>,
    y: Vec<u8>,
    schema: FeatureSchema,
    preprocessing: PreprocessState,
}

fn observed_box(x: &[Vec<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in x {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    if x.is_empty() {
        lo.fill(0.0);
        hi.fill(0.0);
    }
    (lo, hi)
}

impl Dataset {
    /// Builds an unpreprocessed dataset, validating shapes and labels.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<u8>, schema: FeatureSchema) -> Result<Self, DataError> {
        if x.len() != y.len() {
            return Err(DataError::Shape(format!(
                "{} rows but {} labels",
                x.len(),
                y.len()
            )));
        }
        let dim = schema.feature_count();
        if let Some((i, row)) = x.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(DataError::Shape(format!(
                "row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        if let Some(bad) = y.iter().find(|&&l| l > 1) {
            return Err(DataError::Shape(format!("label {bad} is not binary")));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DataError::Shape("non-finite feature value".into()));
        }
        let (box_lo, box_hi) = observed_box(&x, dim);
        let preprocessing = PreprocessState {
            mode: PreprocessMode::None,
            stats: vec![(0.0, 1.0); dim],
            box_lo,
            box_hi,
        };
        Ok(Self {
            x,
            y,
            schema,
            preprocessing,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn preprocessing(&self) -> &PreprocessState {
        &self.preprocessing
    }

    fn with_rows(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        let (x, y): (Vec<_>, Vec<_>) = idx
            .into_iter()
            .map(|i| (self.x[i].clone(), self.y[i]))
            .unzip();
        Dataset {
            x,
            y,
            schema: self.schema.clone(),
            preprocessing: self.preprocessing.clone(),
        }
    }
}

fn parse_cell(raw: &str, line: u64, column: &str) -> Result<f64, DataError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DataError::NonNumeric {
            line,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

fn parse_label(raw: &str, line: u64) -> Result<u8, DataError> {
    match raw.trim().parse::<f64>() {
        Ok(0.0) => Ok(0),
        Ok(1.0) => Ok(1),
        _ => Err(DataError::NonBinaryLabel {
            line,
            value: raw.to_string(),
        }),
    }
}

/// Reads a headered, comma-separated file. The label column may sit anywhere;
/// every other column becomes a feature in file order.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header = reader.headers().map_err(csv_error)?.clone();
    let label_idx = header
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| DataError::MissingLabelColumn(label_column.to_string()))?;
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let schema = FeatureSchema::new(names, label_column)?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(schema.feature_count());
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                y.push(parse_label(cell, line)?);
            } else {
                row.push(parse_cell(cell, line, &header[j])?);
            }
        }
        x.push(row);
    }
    Dataset::new(x, y, schema)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::Csv {
        line,
        message: e.to_string(),
    }
}

/// Writes the dataset in the same dialect `load_csv` reads, label last.
/// Values use the shortest representation that parses back to the same bits.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = ds.schema.names.join(",");
    if !header.is_empty() {
        header.push(',');
    }
    header.push_str(&ds.schema.label_column);
    writeln!(out, "{header}").map_err(io)?;
    for (row, label) in ds.x.iter().zip(&ds.y) {
        for v in row {
            write!(out, "{v:?},").map_err(io)?;
        }
        writeln!(out, "{label}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Two isotropic unit-variance Gaussian clusters centred at `∓separation/2`
/// on every axis; class 0 rows come first.
pub fn synth_gaussian_blobs(n_per_class: usize, dim: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = seed::rng(seed);
    let half = separation / 2.0;
    let mut x = Vec::with_capacity(2 * n_per_class);
    let mut y = Vec::with_capacity(2 * n_per_class);
    for label in [0u8, 1] {
        let centre = if label == 0 { -half } else { half };
        for _ in 0..n_per_class {
            let row = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    centre + z
                })
                .collect();
            x.push(row);
            y.push(label);
        }
    }
    let names = (0..dim).map(|j| format!("x{j}")).collect();
    let schema = FeatureSchema::new(names, "target").expect("generated names are unique");
    Dataset::new(x, y, schema).expect("generated data is well formed")
}

/// Applies `mode` to the raw feature values. A dataset that was already
/// preprocessed is mapped back to raw values first.
pub fn default_preprocess(ds: &Dataset, mode: PreprocessMode) -> Result<Dataset, DataError> {
    let raw: Vec<Vec<f64>> = ds
        .x
        .iter()
        .map(|r| ds.preprocessing.inverse_transform(r))
        .collect();
    let dim = ds.feature_count();
    let n = raw.len();
    let stats: Vec<(f64, f64)> = match mode {
        PreprocessMode::None => vec![(0.0, 1.0); dim],
        PreprocessMode::Standardize => (0..dim)
            .map(|j| {
                let col = raw.iter().map(|r| r[j]);
                let mean = col.clone().sum::<f64>() / n as f64;
                let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let sd = var.sqrt();
                if n < 2 || !(sd > 0.0) {
                    Err(DataError::ZeroVariance(ds.schema.names[j].clone()))
                } else {
                    Ok((mean, sd))
                }
            })
            .collect::<Result<_, _>>()?,
        PreprocessMode::MinMax => {
            if n == 0 {
                return Err(DataError::Empty);
            }
            let (lo, hi) = observed_box(&raw, dim);
            lo.into_iter().zip(hi).collect()
        }
    };
    let mut state = PreprocessState {
        mode,
        stats,
        box_lo: Vec::new(),
        box_hi: Vec::new(),
    };
    let x: Vec<Vec<f64>> = raw.iter().map(|r| state.transform(r)).collect();
    let (box_lo, box_hi) = observed_box(&x, dim);
    state.box_lo = box_lo;
    state.box_hi = box_hi;
    Ok(Dataset {
        x,
        y: ds.y.clone(),
        schema: ds.schema.clone(),
        preprocessing: state,
    })
}

/// Random disjoint partition into `(train, test)`; rows keep their relative order.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if !(test_fraction > 0.0 && test_fraction < 1.0) || n_test == 0 || n_test >= n {
        return Err(DataError::DegenerateSplit {
            fraction: test_fraction,
            rows: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    let mut test: Vec<usize> = idx[..n_test].to_vec();
    let mut train: Vec<usize> = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.with_rows(train), ds.with_rows(test)))
}

/// `n` rows drawn uniformly with replacement.
pub fn bootstrap_resample(ds: &Dataset, seed: u64) -> Dataset {
    let n = ds.len();
    let mut rng = seed::rng(seed);
    ds.with_rows((0..n).map(|_| rng.gen_range(0..n)).collect::<Vec<_>>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(cols: &[&[f64]]) -> Dataset {
        let dim = cols.len();
        let n = cols[0].len();
        let x = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let names = (0..dim).map(|j| format!("c{j}")).collect();
        Dataset::new(x, vec![0; n], FeatureSchema::new(names, "target").unwrap()).unwrap()
    }

    fn temp_file(name: &str, body: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("cfx-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_file() {
        let p = temp_file("ok.csv", "a,b,target\n1,2,0\n3,4,1\n5,6,0\n");
        let ds = load_csv(&p, "target").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_count(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.row(2), &[5.0, 6.0]);
        assert_eq!(ds.preprocessing().mode, PreprocessMode::None);
    }

    #[test]
    fn non_binary_label_names_the_row() {
        let p = temp_file("bad_label.csv", "a,b,target\n1,2,0\n3,4,2\n");
        match load_csv(&p, "target") {
            Err(DataError::NonBinaryLabel { line, value }) => {
                assert_eq!(line, 3);
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let p = temp_file("bad_cell.csv", "a,b,target\n1,x,0\n");
        match load_csv(&p, "target") {
            Err(DataError::NonNumeric { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_label_and_missing_file() {
        let p = temp_file("nolabel.csv", "a,b\n1,2\n");
        assert!(matches!(
            load_csv(&p, "target"),
            Err(DataError::MissingLabelColumn(_))
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", "target"),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn standardize_gives_zero_mean_unit_sd() {
        let ds = default_preprocess(&tiny(&[&[1.0, 2.0, 3.0]]), PreprocessMode::Standardize).unwrap();
        let col: Vec<f64> = ds.rows().iter().map(|r| r[0]).collect();
        let mean = col.iter().sum::<f64>() / 3.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardize_rejects_constant_column() {
        let err = default_preprocess(&tiny(&[&[2.0, 2.0, 2.0]]), PreprocessMode::Standardize).unwrap_err();
        match err {
            DataError::ZeroVariance(name) => assert_eq!(name, "c0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn minmax_maps_to_unit_interval() {
        let ds = default_preprocess(&tiny(&[&[0.0, 5.0, 10.0], &[3.0, 3.0, 3.0]]), PreprocessMode::MinMax).unwrap();
        let col: Vec<f64> = ds.rows().iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        assert!(ds.rows().iter().all(|r| r[1] == 0.0));
        assert_eq!(ds.preprocessing().box_lo, vec![0.0, 0.0]);
        assert_eq!(ds.preprocessing().box_hi, vec![1.0, 0.0]);
    }

    #[test]
    fn split_partitions_rows() {
        let ds = synth_gaussian_blobs(50, 2, 6.0, 3);
        let (train, test) = split(&ds, 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let mut all: Vec<Vec<u64>> = train
            .rows()
            .iter()
            .chain(test.rows())
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut orig: Vec<Vec<u64>> = ds
            .rows()
            .iter()
            .map(|r| r.iter().map(|v| v.to_bits()).collect())
            .collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        let (train2, test2) = split(&ds, 0.2, 7).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
        assert!(matches!(split(&ds, 0.0, 1), Err(DataError::DegenerateSplit { .. })));
        assert!(matches!(split(&ds, 1.0, 1), Err(DataError::DegenerateSplit { .. })));
    }

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = synth_gaussian_blobs(50, 2, 6.0, 1);
        let b = synth_gaussian_blobs(50, 2, 6.0, 1);
        assert_eq!(a.len(), 100);
        assert_eq!(a.labels().iter().filter(|&&l| l == 1).count(), 50);
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_single_row_and_determinism() {
        let one = tiny(&[&[4.0]]);
        assert_eq!(bootstrap_resample(&one, 9).rows(), one.rows());
        let ds = synth_gaussian_blobs(20, 2, 6.0, 1);
        assert_eq!(bootstrap_resample(&ds, 5), bootstrap_resample(&ds, 5));
    }

    #[test]
    fn bootstrap_distinct_fraction_near_one_minus_inv_e() {
        let n = 1000;
        let x = (0..n).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(x, vec![0; n], FeatureSchema::new(vec!["v".into()], "target").unwrap()).unwrap();
        let mut total = 0.0;
        for s in 0..100 {
            let r = bootstrap_resample(&ds, s);
            let distinct: HashSet<u64> = r.rows().iter().map(|row| row[0].to_bits()).collect();
            total += distinct.len() as f64 / n as f64;
        }
        let mean = total / 100.0;
        let expected = 1.0 - (-1.0f64).exp();
        assert!((mean - expected).abs() < 0.03, "mean distinct fraction {mean}");
    }
}
