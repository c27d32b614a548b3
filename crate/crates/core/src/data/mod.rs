//! Datasets, normalization, imbalanced variants, and synthetic tasks.

mod idx;
mod manifest;
mod synth;
mod tabular;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::rng::CsRng;

pub use idx::{
    load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels, IMAGES_MAGIC,
    LABELS_MAGIC,
};
pub use manifest::{load_dataset, save_dataset, Imbalance, Manifest, PartSource, Source};
pub use synth::{synth_blobs, SynthSpec, SynthSplitSizes};
pub use tabular::{format_csv, load_csv, parse_csv, write_csv};

/// Share of each chosen class's training examples dropped by default.
pub const DEFAULT_REMOVAL_FRACTION: f64 = 0.7;
/// Number of classes thinned by default.
pub const DEFAULT_IMBALANCED_CLASSES: usize = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, expected: u32, found: u32 },
    #[error("{path}: truncated, need {expected} bytes, found {found}")]
    Truncated {
        path: String,
        expected: usize,
        found: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training data is constant; cannot min-max normalize")]
    ConstantData,
    #[error("need at least {needed} classes, dataset has {classes}")]
    TooFewClasses { classes: usize, needed: usize },
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable short name for reports and exit diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            DataError::Io { .. } => "io",
            DataError::BadMagic { .. } => "bad_magic",
            DataError::Truncated { .. } => "truncated",
            DataError::CountMismatch { .. } => "count_mismatch",
            DataError::Csv { .. } => "csv",
            DataError::LabelOutOfRange { .. } => "label_out_of_range",
            DataError::ConstantData => "constant_data",
            DataError::TooFewClasses { .. } => "too_few_classes",
            DataError::DimensionMismatch(..) => "dimension_mismatch",
            DataError::Manifest(_) => "manifest",
            DataError::Format(_) => "format",
            DataError::Linalg(_) => "shape",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Features and labels of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub x: Matrix,
    pub labels: Vec<usize>,
}

impl Part {
    pub fn new(x: Matrix, labels: Vec<usize>) -> Result<Self, DataError> {
        if x.rows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: x.rows(),
                labels: labels.len(),
            });
        }
        Ok(Part { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A labeled dataset with train/validation/test splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub classes: usize,
    pub train: Part,
    pub validation: Part,
    pub test: Part,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        classes: usize,
        train: Part,
        validation: Part,
        test: Part,
    ) -> Result<Self, DataError> {
        let d = train.x.cols();
        for p in [&validation, &test] {
            if p.x.cols() != d && !p.is_empty() {
                return Err(DataError::DimensionMismatch(d, p.x.cols()));
            }
        }
        for p in [&train, &validation, &test] {
            if let Some(&label) = p.labels.iter().find(|&&y| y >= classes) {
                return Err(DataError::LabelOutOfRange { label, classes });
            }
        }
        Ok(Dataset {
            name: name.into(),
            classes,
            train,
            validation,
            test,
        })
    }

    pub fn dim(&self) -> usize {
        self.train.x.cols()
    }

    pub fn part(&self, split: Split) -> &Part {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.part(split).labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Whether min-max ranges are shared by all features or fitted per feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Global,
    PerFeature,
    /// Values are used as given.
    None,
}

/// Affine map fitted on training data: `(v − lo) / (hi − lo)`, clamped to
/// `[0, 1]`. Features constant in the training data map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl MinMax {
    pub fn fit(train: &Matrix, mode: Normalization) -> Result<Self, DataError> {
        let d = train.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for row in train.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let glo = lo.iter().cloned().fold(f64::INFINITY, f64::min);
        let ghi = hi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if ghi.partial_cmp(&glo) != Some(std::cmp::Ordering::Greater) {
            return Err(DataError::ConstantData);
        }
        Ok(match mode {
            Normalization::Global | Normalization::None => MinMax {
                lo: vec![glo; d],
                hi: vec![ghi; d],
            },
            Normalization::PerFeature => MinMax { lo, hi },
        })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix, DataError> {
        if x.cols() != self.lo.len() {
            return Err(DataError::DimensionMismatch(self.lo.len(), x.cols()));
        }
        let mut out = x.clone();
        let d = self.lo.len();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let (lo, hi) = (self.lo[i % d], self.hi[i % d]);
            *v = if hi > lo {
                ((*v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(out)
    }
}

/// Fits on the training split and maps every split with the same transform.
pub fn normalize_minmax(ds: &Dataset, mode: Normalization) -> Result<Dataset, DataError> {
    if mode == Normalization::None {
        return Ok(ds.clone());
    }
    let map = MinMax::fit(&ds.train.x, mode)?;
    let apply = |p: &Part| -> Result<Part, DataError> {
        if p.is_empty() {
            return Ok(p.clone());
        }
        Part::new(map.apply(&p.x)?, p.labels.clone())
    };
    Ok(Dataset {
        name: ds.name.clone(),
        classes: ds.classes,
        train: apply(&ds.train)?,
        validation: apply(&ds.validation)?,
        test: apply(&ds.test)?,
    })
}

/// Removes `floor(fraction · count)` training examples, chosen uniformly,
/// from each listed class. Survivors keep their order; validation and test
/// are untouched.
pub fn remove_fraction(
    ds: &Dataset,
    chosen: &[usize],
    fraction: f64,
    rng: &mut CsRng,
) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::Format(format!("removal fraction {fraction}")));
    }
    let mut keep = vec![true; ds.train.len()];
    for &class in chosen {
        if class >= ds.classes {
            return Err(DataError::LabelOutOfRange {
                label: class,
                classes: ds.classes,
            });
        }
        let members: Vec<usize> = (0..ds.train.len())
            .filter(|&i| ds.train.labels[i] == class)
            .collect();
        let remove = (fraction * members.len() as f64).floor() as usize;
        for j in rng.sample_indices(members.len(), remove) {
            keep[members[j]] = false;
        }
    }
    let rows: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    let train = Part::new(
        ds.train.x.select_rows(&rows),
        rows.iter().map(|&i| ds.train.labels[i]).collect(),
    )?;
    Ok(Dataset { train, ..ds.clone() })
}

/// Picks `n_classes` distinct classes uniformly and thins each one's training
/// examples by `fraction`. Returns the variant and the sorted chosen classes.
pub fn make_imbalanced(
    ds: &Dataset,
    n_classes: usize,
    fraction: f64,
    rng: &mut CsRng,
) -> Result<(Dataset, Vec<usize>), DataError> {
    make_imbalanced_with(ds, n_classes, fraction, None, rng)
}

/// [`make_imbalanced`] with an optional fixed class list. Class choice and
/// removal draw from separate forks of `rng`.
pub fn make_imbalanced_with(
    ds: &Dataset,
    n_classes: usize,
    fraction: f64,
    chosen: Option<&[usize]>,
    rng: &mut CsRng,
) -> Result<(Dataset, Vec<usize>), DataError> {
    if ds.classes < n_classes || n_classes == 0 {
        return Err(DataError::TooFewClasses {
            classes: ds.classes,
            needed: n_classes.max(1),
        });
    }
    let mut pick = rng.fork();
    let mut drop = rng.fork();
    let mut chosen = match chosen {
        Some(c) => c.to_vec(),
        None => pick.sample_indices(ds.classes, n_classes),
    };
    chosen.sort_unstable();
    chosen.dedup();
    let out = remove_fraction(ds, &chosen, fraction, &mut drop)?;
    Ok((out, chosen))
}
