//! Benchmark loaders (IDX, CSV), synthetic toy sets and a binary cache.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const CACHE_MAGIC: &[u8; 8] = b"DWMTJDS\0";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("image file has {images} items but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    Ragged { path: PathBuf, line: u64, expected: usize, found: usize },

    #[error("{path}:{line}: column {column}: `{value}` is not a number")]
    NonNumeric { path: PathBuf, line: u64, column: usize, value: String },

    #[error("{path}: label `{label}` does not occur in the training split")]
    UnseenLabel { path: PathBuf, label: String },

    #[error("{path}: label column {column} out of range for {width} columns")]
    LabelColumn { path: PathBuf, column: usize, width: usize },

    #[error("{path}: empty table")]
    Empty { path: PathBuf },

    #[error("{path}: {msg}")]
    Cache { path: PathBuf, msg: String },

    #[error("invalid dataset: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

type DResult<T> = std::result::Result<T, DatasetError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Row-major features in `[0, 1]` with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub l: usize,
    pub n_classes: usize,
    pub features: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, l: usize, n_classes: usize, features: Vec<f32>, labels: Vec<usize>) -> DResult<Self> {
        let ds = Self {
            name: name.into(),
            l,
            n_classes,
            features,
            labels,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> DResult<()> {
        if self.features.len() != self.labels.len() * self.l {
            return Err(DatasetError::Invalid(format!(
                "{} features for {} rows of width {}",
                self.features.len(),
                self.labels.len(),
                self.l
            )));
        }
        if let Some(v) = self.features.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DatasetError::Invalid(format!("feature value {v} outside [0, 1]")));
        }
        if let Some(y) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(DatasetError::Invalid(format!("label {y} >= n_classes {}", self.n_classes)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.features[idx * self.l..(idx + 1) * self.l]
    }

    /// First `n` rows (or all if shorter).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            l: self.l,
            n_classes: self.n_classes,
            features: self.features[..n * self.l].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn read_all(path: &Path) -> DResult<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut buf))
        .map_err(io_err(path))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> DResult<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: (at + 4) as u64,
            found: bytes.len() as u64,
        })
}

/// Loads an IDX image/label pair, scaling pixels by 1/255.
pub fn load_idx(images: &Path, labels: &Path) -> DResult<Dataset> {
    let img = read_all(images)?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DatasetError::BadMagic {
            path: images.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let l = rows * cols;
    let need = 16 + count as u64 * l as u64;
    if (img.len() as u64) < need {
        return Err(DatasetError::Truncated {
            path: images.to_path_buf(),
            expected: need,
            found: img.len() as u64,
        });
    }

    let lab = read_all(labels)?;
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DatasetError::BadMagic {
            path: labels.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = be_u32(&lab, 4, labels)? as usize;
    if n_labels != count {
        return Err(DatasetError::CountMismatch {
            images: count,
            labels: n_labels,
        });
    }
    if (lab.len() as u64) < 8 + count as u64 {
        return Err(DatasetError::Truncated {
            path: labels.to_path_buf(),
            expected: 8 + count as u64,
            found: lab.len() as u64,
        });
    }

    let features = img[16..16 + count * l].iter().map(|&b| b as f32 / 255.0).collect();
    let labels_v: Vec<usize> = lab[8..8 + count].iter().map(|&b| b as usize).collect();
    let n_classes = labels_v.iter().max().map_or(0, |m| m + 1);
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, l, n_classes, features, labels_v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvOptions {
    /// Zero-based index of the label column.
    pub label_column: usize,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub has_header: bool,
}

fn default_delimiter() -> char {
    ','
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            label_column: 0,
            delimiter: ',',
            has_header: false,
        }
    }
}

struct RawTable {
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
}

fn read_csv_table(path: &Path, opts: &CsvOptions) -> DResult<RawTable> {
    let csv_err = |source| DatasetError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter as u8)
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut width = None;
    let mut table = RawTable {
        rows: Vec::new(),
        labels: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(DatasetError::Ragged {
                path: path.to_path_buf(),
                line,
                expected: w,
                found: rec.len(),
            });
        }
        if opts.label_column >= w {
            return Err(DatasetError::LabelColumn {
                path: path.to_path_buf(),
                column: opts.label_column,
                width: w,
            });
        }
        let mut row = Vec::with_capacity(w - 1);
        for (c, cell) in rec.iter().enumerate() {
            if c == opts.label_column {
                table.labels.push(cell.to_string());
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(DatasetError::NonNumeric {
                        path: path.to_path_buf(),
                        line,
                        column: c,
                        value: cell.to_string(),
                    })
                }
            }
        }
        table.rows.push(row);
    }
    if table.rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_path_buf() });
    }
    Ok(table)
}

/// Per-column min-max statistics of a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let l = rows[0].len();
        let mut min = vec![f64::INFINITY; l];
        let mut max = vec![f64::NEG_INFINITY; l];
        for r in rows {
            for (c, &v) in r.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Self { min, max }
    }

    /// Zero-range columns map to 0; out-of-range test values are clamped.
    fn apply(&self, rows: &[Vec<f64>]) -> Vec<f32> {
        rows.iter()
            .flat_map(|r| {
                r.iter().enumerate().map(|(c, &v)| {
                    let range = self.max[c] - self.min[c];
                    if range > 0.0 {
                        ((v - self.min[c]) / range).clamp(0.0, 1.0) as f32
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }
}

/// Loads a single CSV table, normalized with its own statistics.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> DResult<Dataset> {
    let (train, _) = load_csv_split(path, None, opts)?;
    Ok(train)
}

/// Loads a train/test pair of CSV tables. Min-max statistics and the label
/// vocabulary (sorted label strings) come from the training table only.
pub fn load_csv_split(train: &Path, test: Option<&Path>, opts: &CsvOptions) -> DResult<(Dataset, Option<Dataset>)> {
    let tr = read_csv_table(train, opts)?;
    let stats = MinMax::fit(&tr.rows);
    let vocab: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = tr.labels.iter().map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
    };
    let encode = |labels: &[String], path: &Path| -> DResult<Vec<usize>> {
        labels
            .iter()
            .map(|s| {
                vocab.get(s.as_str()).copied().ok_or_else(|| DatasetError::UnseenLabel {
                    path: path.to_path_buf(),
                    label: s.clone(),
                })
            })
            .collect()
    };
    let l = tr.rows[0].len();
    let name = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let train_ds = Dataset::new(name(train), l, vocab.len(), stats.apply(&tr.rows), encode(&tr.labels, train)?)?;
    let test_ds = match test {
        Some(p) => {
            let te = read_csv_table(p, opts)?;
            if te.rows[0].len() != l {
                return Err(DatasetError::Ragged {
                    path: p.to_path_buf(),
                    line: 1,
                    expected: l + 1,
                    found: te.rows[0].len() + 1,
                });
            }
            Some(Dataset::new(name(p), l, vocab.len(), stats.apply(&te.rows), encode(&te.labels, p)?)?)
        }
        None => None,
    };
    Ok((train_ds, test_ds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ToyKind {
    /// `n` samples, identity feature matrix, sample `i` has label `i`.
    Onehot { n: usize },
    /// Two classes separated by `separation` standard deviations along the
    /// first axis. Noise is truncated at 3 sigma, so any separation above
    /// 6 sigma is linearly separable.
    TwoGaussians { per_class: usize, dim: usize, separation: f64 },
    /// `classes` Gaussian blobs with random centers in the unit cube.
    Blobs { classes: usize, per_class: usize, dim: usize, sigma: f64 },
}

/// Deterministic synthetic dataset.
pub fn make_toy(kind: &ToyKind, seed: u64) -> DResult<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match *kind {
        ToyKind::Onehot { n } => {
            if n == 0 {
                return Err(DatasetError::Invalid("onehot needs n >= 1".into()));
            }
            let mut features = vec![0.0f32; n * n];
            for i in 0..n {
                features[i * n + i] = 1.0;
            }
            Dataset::new(format!("onehot-{n}"), n, n, features, (0..n).collect())
        }
        ToyKind::TwoGaussians { per_class, dim, separation } => {
            if dim == 0 || per_class == 0 || !(separation > 0.0) {
                return Err(DatasetError::Invalid("two-gaussians needs dim, per_class, separation > 0".into()));
            }
            let mut rows = Vec::with_capacity(2 * per_class);
            let mut labels = Vec::with_capacity(2 * per_class);
            for i in 0..2 * per_class {
                let class = i % 2;
                let center = if class == 0 { -separation / 2.0 } else { separation / 2.0 };
                let row: Vec<f64> = (0..dim)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let z = z.clamp(-3.0, 3.0);
                        if d == 0 {
                            center + z
                        } else {
                            z
                        }
                    })
                    .collect();
                rows.push(row);
                labels.push(class);
            }
            let features = MinMax::fit(&rows).apply(&rows);
            Dataset::new(format!("two-gaussians-{separation}"), dim, 2, features, labels)
        }
        ToyKind::Blobs { classes, per_class, dim, sigma } => {
            if classes < 2 || per_class == 0 || dim == 0 || !(sigma >= 0.0) {
                return Err(DatasetError::Invalid("blobs needs classes >= 2, per_class, dim > 0, sigma >= 0".into()));
            }
            let centers: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
                .collect();
            let mut features = Vec::with_capacity(classes * per_class * dim);
            let mut labels = Vec::with_capacity(classes * per_class);
            for i in 0..classes * per_class {
                let c = i % classes;
                for &mu in &centers[c] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push((mu + sigma * z).clamp(0.0, 1.0) as f32);
                }
                labels.push(c);
            }
            Dataset::new(format!("blobs-{classes}x{dim}"), dim, classes, features, labels)
        }
    }
}

/// Writes the internal cache format: magic, version, dimensions, name,
/// then raw little-endian `f32` features and `u32` labels.
pub fn write_cache(ds: &Dataset, path: &Path) -> DResult<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io_err(path));
    put(CACHE_MAGIC)?;
    put(&CACHE_VERSION.to_le_bytes())?;
    put(&(ds.len() as u64).to_le_bytes())?;
    put(&(ds.l as u64).to_le_bytes())?;
    put(&(ds.n_classes as u64).to_le_bytes())?;
    put(&(ds.name.len() as u64).to_le_bytes())?;
    put(ds.name.as_bytes())?;
    for v in &ds.features {
        put(&v.to_le_bytes())?;
    }
    for &y in &ds.labels {
        put(&(y as u32).to_le_bytes())?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_cache(path: &Path) -> DResult<Dataset> {
    let buf = read_all(path)?;
    let bad = |msg: &str| DatasetError::Cache {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut at = 0usize;
    let mut take = |n: usize| -> DResult<&[u8]> {
        let s = buf.get(at..at + n).ok_or_else(|| DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: (at + n) as u64,
            found: buf.len() as u64,
        })?;
        at += n;
        Ok(s)
    };
    if take(8)? != CACHE_MAGIC {
        return Err(bad("not a dataset cache file"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(bad(&format!("unsupported cache version {version}")));
    }
    let mut u64_at = || -> DResult<usize> { Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize) };
    let (n, l, n_classes, name_len) = (u64_at()?, u64_at()?, u64_at()?, u64_at()?);
    let name = String::from_utf8(take(name_len)?.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
    let features = take(n * l * 4)?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = take(n * 4)?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Dataset::new(name, l, n_classes, features, labels)
}
