//! Dataset manifests: JSON documents naming split files (or a synthetic
//! spec), the normalization mode, and an optional imbalance variant.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{idx, normalize_minmax, tabular, DataError, Dataset, Normalization, Part, SynthSpec};
use crate::rng::CsRng;

/// Files holding one split. Relative paths resolve against the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Idx { images: String, labels: String },
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartSource {
    #[serde(flatten)]
    pub files: Source,
    /// Keep only the first `limit` examples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

/// Thins `classes` training classes by `fraction`. With `chosen` unset the
/// classes are drawn from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imbalance {
    pub classes: usize,
    pub fraction: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen: Option<Vec<usize>>,
}

impl Imbalance {
    /// Class choice and removal read separate forks of `seed`, so fixing
    /// `chosen` to the drawn classes reproduces the same variant.
    pub fn apply(&self, ds: &Dataset) -> Result<(Dataset, Vec<usize>), DataError> {
        let mut rng = CsRng::seed_from(self.seed);
        super::make_imbalanced_with(ds, self.classes, self.fraction, self.chosen.as_deref(), &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub classes: usize,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PartSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<PartSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PartSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance: Option<Imbalance>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| DataError::io(path, e))
    }

    /// Loads, normalizes, and applies the imbalance variant. Also returns the
    /// thinned classes, if any.
    pub fn realize(&self, base: &Path) -> Result<(Dataset, Option<Vec<usize>>), DataError> {
        let raw = match (&self.synthetic, &self.train, &self.validation, &self.test) {
            (Some(spec), None, None, None) => {
                if spec.classes != self.classes {
                    return Err(DataError::Manifest(format!(
                        "synthetic spec has {} classes, manifest says {}",
                        spec.classes, self.classes
                    )));
                }
                spec.generate(&self.name)?
            }
            (None, Some(tr), Some(va), Some(te)) => Dataset::new(
                self.name.clone(),
                self.classes,
                read_part(base, tr)?,
                read_part(base, va)?,
                read_part(base, te)?,
            )?,
            _ => {
                return Err(DataError::Manifest(
                    "need either `synthetic` or all of `train`, `validation`, `test`".into(),
                ))
            }
        };
        let ds = normalize_minmax(&raw, self.normalization)?;
        match &self.imbalance {
            Some(imb) => {
                let (ds, chosen) = imb.apply(&ds)?;
                Ok((ds, Some(chosen)))
            }
            None => Ok((ds, None)),
        }
    }
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_part(base: &Path, src: &PartSource) -> Result<Part, DataError> {
    let (x, y) = match &src.files {
        Source::Idx { images, labels } => idx::load_idx(&resolve(base, images), &resolve(base, labels))?,
        Source::Csv(file) => tabular::load_csv(&resolve(base, file))?,
    };
    match src.limit {
        Some(n) if n < y.len() => {
            let rows: Vec<usize> = (0..n).collect();
            Part::new(x.select_rows(&rows), y[..n].to_vec())
        }
        _ => Part::new(x, y),
    }
}

/// Reads a manifest and realizes its dataset.
pub fn load_dataset(manifest: &Path) -> Result<(Dataset, Option<Vec<usize>>), DataError> {
    let m = Manifest::load(manifest)?;
    m.realize(manifest.parent().unwrap_or(Path::new(".")))
}

/// Writes each split as full-precision CSV next to a manifest that reloads
/// the dataset exactly. Returns the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf, DataError> {
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut parts = Vec::new();
    for (name, part) in [
        ("train", &ds.train),
        ("validation", &ds.validation),
        ("test", &ds.test),
    ] {
        let file = format!("{name}.csv");
        tabular::write_csv(&dir.join(&file), &part.x, &part.labels)?;
        parts.push(Some(PartSource {
            files: Source::Csv(file),
            limit: None,
        }));
    }
    let manifest = Manifest {
        name: ds.name.clone(),
        classes: ds.classes,
        normalization: Normalization::None,
        test: parts.pop().flatten(),
        validation: parts.pop().flatten(),
        train: parts.pop().flatten(),
        synthetic: None,
        imbalance: None,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
