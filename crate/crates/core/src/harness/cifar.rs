//! CIFAR-10 binary batches.
//!
//! Each record is one label byte in `0..=9` followed by 3072 pixel bytes.
//! Pixels are scaled to `[0, 1]` and then standardized per feature with the
//! training-set mean and standard deviation.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::trainer::{Dataset, LabelKind, TrainerError};

pub const PIXELS: usize = 3072;
pub const RECORD_LEN: usize = PIXELS + 1;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Debug, Error)]
pub enum CifarError {
    #[error("missing CIFAR-10 file {0}")]
    Missing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: truncated record at byte offset {offset} ({len} bytes left, records are {RECORD_LEN})")]
    Truncated { path: PathBuf, offset: usize, len: usize },
    #[error("{path}: label {label} at byte offset {offset} is outside 0..=9")]
    BadLabel { path: PathBuf, offset: usize, label: u8 },
    #[error("classes must be two distinct labels in 0..=9, got {0} and {1}")]
    BadClasses(u8, u8),
    #[error("no records of the requested classes")]
    NoRecords,
    #[error(transparent)]
    Dataset(#[from] TrainerError),
}

/// Which records to keep and how to label them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFilter {
    /// Keep two classes; the first is labelled +1, the second -1.
    Pair(u8, u8),
    /// Keep every record with its label in `0..10`.
    All,
}

impl ClassFilter {
    fn check(&self) -> Result<(), CifarError> {
        match *self {
            ClassFilter::Pair(a, b) if a > 9 || b > 9 || a == b => Err(CifarError::BadClasses(a, b)),
            _ => Ok(()),
        }
    }

    fn map(&self, label: u8) -> Option<i32> {
        match *self {
            ClassFilter::Pair(a, _) if label == a => Some(1),
            ClassFilter::Pair(_, b) if label == b => Some(-1),
            ClassFilter::Pair(..) => None,
            ClassFilter::All => Some(label as i32),
        }
    }

    fn kind(&self) -> LabelKind {
        match self {
            ClassFilter::Pair(..) => LabelKind::Binary,
            ClassFilter::All => LabelKind::Multiclass(10),
        }
    }
}

/// Raw pixels scaled to `[0, 1]` before standardization.
struct Records {
    pixels: Vec<f64>,
    labels: Vec<i32>,
}

fn read_file(path: &Path, filter: ClassFilter, out: &mut Records) -> Result<(), CifarError> {
    if !path.is_file() {
        return Err(CifarError::Missing(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|source| CifarError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (i, rec) in bytes.chunks(RECORD_LEN).enumerate() {
        let offset = i * RECORD_LEN;
        if rec.len() < RECORD_LEN {
            return Err(CifarError::Truncated {
                path: path.to_path_buf(),
                offset,
                len: rec.len(),
            });
        }
        let label = rec[0];
        if label > 9 {
            return Err(CifarError::BadLabel {
                path: path.to_path_buf(),
                offset,
                label,
            });
        }
        if let Some(y) = filter.map(label) {
            out.labels.push(y);
            out.pixels.extend(rec[1..].iter().map(|&p| p as f64 / 255.0));
        }
    }
    Ok(())
}

fn read_files(paths: &[PathBuf], filter: ClassFilter) -> Result<Records, CifarError> {
    filter.check()?;
    let mut out = Records {
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for p in paths {
        read_file(p, filter, &mut out)?;
    }
    if out.labels.is_empty() {
        return Err(CifarError::NoRecords);
    }
    Ok(out)
}

/// Per-feature affine map `x -> (x - mean) / std`. Constant features keep
/// unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[f64], dim: usize) -> Self {
        let n = (features.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in features.chunks(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in features.chunks(dim) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &mut [f64]) {
        let dim = self.mean.len();
        for row in features.chunks_mut(dim) {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
    }
}

/// Load and standardize the given batch files as one dataset.
pub fn load_cifar10_files(paths: &[PathBuf], filter: ClassFilter) -> Result<Dataset, CifarError> {
    let mut rec = read_files(paths, filter)?;
    Standardizer::fit(&rec.pixels, PIXELS).apply(&mut rec.pixels);
    Ok(Dataset::new(rec.pixels, PIXELS, rec.labels, filter.kind())?)
}

/// Train and test splits from a CIFAR-10 binary directory.
#[derive(Debug, Clone)]
pub struct CifarData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Load the five training batches and the test batch from `dir`. Test
/// features are standardized with the training statistics.
pub fn load_cifar10_dir(dir: &Path, filter: ClassFilter) -> Result<CifarData, CifarError> {
    let train_paths: Vec<PathBuf> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    let test_paths = [dir.join(TEST_FILE)];
    for p in train_paths.iter().chain(&test_paths) {
        if !p.is_file() {
            return Err(CifarError::Missing(p.clone()));
        }
    }
    let mut train = read_files(&train_paths, filter)?;
    let mut test = read_files(&test_paths, filter)?;
    let st = Standardizer::fit(&train.pixels, PIXELS);
    st.apply(&mut train.pixels);
    st.apply(&mut test.pixels);
    Ok(CifarData {
        train: Dataset::new(train.pixels, PIXELS, train.labels, filter.kind())?,
        test: Dataset::new(test.pixels, PIXELS, test.labels, filter.kind())?,
    })
}

/// Binary task of `class_a` (+1) against `class_b` (-1).
pub fn load_cifar10(dir: &Path, class_a: u8, class_b: u8) -> Result<CifarData, CifarError> {
    load_cifar10_dir(dir, ClassFilter::Pair(class_a, class_b))
}
