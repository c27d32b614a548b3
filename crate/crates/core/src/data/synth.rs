//! Gaussian blobs around scaled unit-simplex corners.

use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, Part};
use crate::linalg::Matrix;
use crate::rng::CsRng;

/// Examples per class in each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub dim: usize,
    /// 0 puts every centre at `0.5·1`; 1 puts class `k` at the corner `e_k`.
    pub separation: f64,
    /// Per-coordinate standard deviation.
    pub noise: f64,
    pub per_class: SynthSplitSizes,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes < 2 || self.dim == 0 {
            return Err(DataError::Manifest(format!(
                "synthetic task needs >= 2 classes and >= 1 feature, got {} and {}",
                self.classes, self.dim
            )));
        }
        if !(self.separation >= 0.0
            && self.noise >= 0.0
            && self.separation.is_finite()
            && self.noise.is_finite())
        {
            return Err(DataError::Manifest(format!(
                "separation {} / noise {}",
                self.separation, self.noise
            )));
        }
        Ok(())
    }

    /// Draws train, validation, then test from one generator.
    pub fn generate(&self, name: &str) -> Result<Dataset, DataError> {
        self.validate()?;
        let mut rng = CsRng::seed_from(self.seed);
        let mut part =
            |n: usize| synth_blobs(self.classes, self.dim, n, self.separation, self.noise, &mut rng);
        let train = part(self.per_class.train);
        let validation = part(self.per_class.validation);
        let test = part(self.per_class.test);
        Dataset::new(name, self.classes, train, validation, test)
    }
}

/// `per_class` examples of each of `classes` clusters, interleaved by class.
/// Cluster `k` is centred at `(1 − s)·0.5 + s·e_(k mod d)`; samples are
/// clipped to `[0, 1]`.
pub fn synth_blobs(
    classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    noise: f64,
    rng: &mut CsRng,
) -> Part {
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        for j in 0..dim {
            let corner = if j == k % dim { 1.0 } else { 0.0 };
            let centre = (1.0 - separation) * 0.5 + separation * corner;
            data.push((centre + noise * rng.standard_normal()).clamp(0.0, 1.0));
        }
        labels.push(k);
    }
    Part {
        x: Matrix::new(n, dim, data).expect("sized above"),
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_range() {
        let p = synth_blobs(4, 20, 25, 0.6, 0.3, &mut CsRng::seed_from(1));
        assert_eq!(p.x.shape(), (100, 20));
        for k in 0..4 {
            assert_eq!(p.labels.iter().filter(|&&y| y == k).count(), 25);
        }
        assert!(p.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_separation_shares_one_distribution() {
        let p = synth_blobs(3, 4, 2000, 0.0, 0.1, &mut CsRng::seed_from(2));
        let mut means = vec![vec![0.0; 4]; 3];
        for (row, &y) in p.x.iter_rows().zip(&p.labels) {
            for j in 0..4 {
                means[y][j] += row[j] / 2000.0;
            }
        }
        // standard error of each mean is 0.1/√2000 ≈ 0.0022
        for m in means.iter().flatten() {
            assert!((m - 0.5).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn spec_is_deterministic() {
        let spec = SynthSpec {
            classes: 3,
            dim: 5,
            separation: 0.8,
            noise: 0.2,
            per_class: SynthSplitSizes {
                train: 10,
                validation: 4,
                test: 6,
            },
            seed: 7,
        };
        let a = spec.generate("s").unwrap();
        assert_eq!(a, spec.generate("s").unwrap());
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (30, 12, 18));
        assert!(SynthSpec { classes: 1, ..spec }.generate("s").is_err());
    }
}
