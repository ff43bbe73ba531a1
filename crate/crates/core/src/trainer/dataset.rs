//! In-memory datasets, the synthetic generator and device partitioning.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::TrainerError;
use crate::seed::{self, purpose};

/// How labels are interpreted by the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    /// Labels in {-1, +1}, one head.
    Binary,
    /// Labels in `0..classes`, one one-vs-rest head per class.
    Multiclass(usize),
}

impl LabelKind {
    pub fn heads(&self) -> usize {
        match self {
            LabelKind::Binary => 1,
            LabelKind::Multiclass(c) => *c,
        }
    }
}

/// Row-major feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<i32>,
    kind: LabelKind,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<i32>, kind: LabelKind) -> Result<Self, TrainerError> {
        if dim == 0 {
            return Err(TrainerError::InvalidDataset("feature dimension must be positive".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(TrainerError::InvalidDataset(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        let ok = match kind {
            LabelKind::Binary => labels.iter().all(|&y| y == 1 || y == -1),
            LabelKind::Multiclass(c) => labels.iter().all(|&y| y >= 0 && (y as usize) < c),
        };
        if !ok {
            return Err(TrainerError::InvalidDataset("label outside the declared label set".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(TrainerError::InvalidDataset("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            dim,
            labels,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> i32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    /// `+1` / `-1` target of row `i` for head `c`.
    pub fn target(&self, i: usize, c: usize) -> f64 {
        match self.kind {
            LabelKind::Binary => self.labels[i] as f64,
            LabelKind::Multiclass(_) => {
                if self.labels[i] as usize == c {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Parameters of the two-class Gaussian blob generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub features: usize,
    pub train: usize,
    pub test: usize,
    /// Distance between the two class means; unit-variance isotropic noise.
    pub margin: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            features: 60,
            train: 2000,
            test: 1000,
            margin: 3.0,
        }
    }
}

/// Balanced two-class blobs with means `+-(margin / 2) u` along a random unit
/// direction `u`. Returns `(train, test)`.
pub fn synthetic_blobs(spec: &SyntheticSpec, seed: u64) -> Result<(Dataset, Dataset), TrainerError> {
    let d = spec.features;
    if d == 0 || spec.train == 0 || spec.test == 0 {
        return Err(TrainerError::InvalidDataset("synthetic sizes must be positive".into()));
    }
    if !(spec.margin.is_finite() && spec.margin >= 0.0) {
        return Err(TrainerError::InvalidDataset("margin must be nonnegative".into()));
    }
    let mut rng = seed::rng_for(seed, &[purpose::DATASET]);
    let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    u.iter_mut().for_each(|x| *x /= norm);
    let mut draw = |n: usize| {
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = if i % 2 == 0 { 1 } else { -1 };
            let shift = 0.5 * spec.margin * y as f64;
            for &ui in &u {
                let z: f64 = rng.sample(StandardNormal);
                features.push(z + shift * ui);
            }
            labels.push(y);
        }
        Dataset::new(features, d, labels, LabelKind::Binary)
    };
    let train = draw(spec.train)?;
    let test = draw(spec.test)?;
    Ok((train, test))
}

/// Shuffle the rows and deal them into `devices` disjoint, nearly equal
/// parts.
pub fn partition(rows: usize, devices: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainerError> {
    if devices == 0 || rows < devices {
        return Err(TrainerError::InvalidDataset(format!(
            "cannot split {rows} rows over {devices} devices"
        )));
    }
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut seed::rng_for(seed, &[purpose::PARTITION]));
    let mut parts = vec![Vec::with_capacity(rows / devices + 1); devices];
    for (i, r) in idx.into_iter().enumerate() {
        parts[i % devices].push(r);
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

/// Training data split across devices plus a held-out test set. The sets
/// are shared so several runs can reuse one copy.
#[derive(Debug, Clone)]
pub struct FederatedData {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
    pub partition: Vec<Vec<usize>>,
}

impl FederatedData {
    pub fn new(
        train: impl Into<Arc<Dataset>>,
        test: impl Into<Arc<Dataset>>,
        partition: Vec<Vec<usize>>,
    ) -> Result<Self, TrainerError> {
        let (train, test) = (train.into(), test.into());
        if train.dim() != test.dim() || train.kind() != test.kind() {
            return Err(TrainerError::InvalidDataset("train and test sets differ in shape".into()));
        }
        if test.is_empty() {
            return Err(TrainerError::InvalidDataset("test set is empty".into()));
        }
        let mut seen = vec![false; train.len()];
        for part in &partition {
            for &r in part {
                if r >= train.len() || seen[r] {
                    return Err(TrainerError::InvalidDataset(format!(
                        "partition row {r} is out of range or repeated"
                    )));
                }
                seen[r] = true;
            }
        }
        Ok(Self { train, test, partition })
    }

    /// Rows held by any device.
    pub fn union(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.partition.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}
