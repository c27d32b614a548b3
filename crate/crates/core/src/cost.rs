//! Cost matrices, per-example cost vectors, and the randomized proportional
//! benchmark generator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vector;
use crate::rng::CsRng;

/// Entries within this distance of a vector's minimum count as tied with it.
pub const COST_TIE_TOLERANCE: f64 = 1e-12;

/// Upper end of the proportional sampling range before class-ratio scaling.
pub const PROPORTIONAL_COST_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CostError {
    #[error("class {class} has no examples; cannot form a count ratio")]
    AbsentClass { class: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("cost matrix must be square, got a row of length {len} for {classes} classes")]
    NotSquare { classes: usize, len: usize },
    #[error("diagonal entry C({class},{class}) = {value} must be zero")]
    NonzeroDiagonal { class: usize, value: f64 },
    #[error("entry ({row},{col}) = {value} must be finite and non-negative")]
    InvalidEntry { row: usize, col: usize, value: f64 },
    #[error("all-zero cost matrix cannot be scaled by its maximum")]
    AllZero,
    #[error("cost vector minimum is {min}, expected 0")]
    NonzeroMinimum { min: f64 },
    #[error("cost vector entry {index} = {value} must be finite and non-negative")]
    InvalidVectorEntry { index: usize, value: f64 },
    #[error("empty cost vector")]
    Empty,
    #[error("label cost c[{label}] = {value} is not the minimum of its cost vector")]
    LabelNotMinimal { label: usize, value: f64 },
    #[error("cost matrix csv, line {line}: {msg}")]
    Csv { line: usize, msg: String },
}

/// `K×K` cost matrix: `C(y, k)` is the cost of predicting `k` for a class-`y`
/// example. Zero diagonal, finite non-negative entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostMatrixRepr", into = "CostMatrixRepr")]
pub struct CostMatrix {
    classes: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CostMatrixRepr {
    classes: usize,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<CostMatrixRepr> for CostMatrix {
    type Error = CostError;
    fn try_from(r: CostMatrixRepr) -> Result<Self, CostError> {
        if r.entries.len() != r.classes {
            return Err(CostError::NotSquare {
                classes: r.classes,
                len: r.entries.len(),
            });
        }
        CostMatrix::from_rows(&r.entries)
    }
}

impl From<CostMatrix> for CostMatrixRepr {
    fn from(c: CostMatrix) -> Self {
        CostMatrixRepr {
            classes: c.classes,
            entries: (0..c.classes).map(|y| c.row(y).to_vec()).collect(),
        }
    }
}

impl CostMatrix {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, CostError> {
        let classes = rows.len();
        let mut entries = Vec::with_capacity(classes * classes);
        for (y, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != classes {
                return Err(CostError::NotSquare {
                    classes,
                    len: row.len(),
                });
            }
            for (k, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(CostError::InvalidEntry {
                        row: y,
                        col: k,
                        value: v,
                    });
                }
                if y == k && v != 0.0 {
                    return Err(CostError::NonzeroDiagonal { class: y, value: v });
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(CostMatrix { classes, entries })
    }

    /// The 0/1 matrix `C(y, k) = [y != k]`.
    pub fn zero_one(classes: usize) -> Self {
        let mut entries = vec![1.0; classes * classes];
        for y in 0..classes {
            entries[y * classes + y] = 0.0;
        }
        CostMatrix { classes, entries }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, y: usize, k: usize) -> f64 {
        self.entries[y * self.classes + k]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.entries[y * self.classes..(y + 1) * self.classes]
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> CostMatrix {
        CostMatrix {
            classes: self.classes,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    /// CSV form: the class count on the first line, then one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", self.classes);
        for y in 0..self.classes {
            let row: Vec<String> = self.row(y).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, CostError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(CostError::Csv {
            line: 1,
            msg: "missing class-count header".into(),
        })?;
        let classes: usize = header.trim().parse().map_err(|_| CostError::Csv {
            line: 1,
            msg: format!("bad class count {:?}", header.trim()),
        })?;
        let mut rows = Vec::with_capacity(classes);
        for (i, line) in lines {
            let row = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CostError::Csv {
                    line: i + 1,
                    msg: e.to_string(),
                })?;
            rows.push(row);
        }
        if rows.len() != classes {
            return Err(CostError::Csv {
                line: rows.len() + 1,
                msg: format!("expected {classes} rows, found {}", rows.len()),
            });
        }
        CostMatrix::from_rows(&rows)
    }
}

/// Per-example cost vector with non-negative entries and a zero minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostVector(Vec<f64>);

impl TryFrom<Vec<f64>> for CostVector {
    type Error = CostError;
    fn try_from(v: Vec<f64>) -> Result<Self, CostError> {
        CostVector::new(v)
    }
}

impl From<CostVector> for Vec<f64> {
    fn from(c: CostVector) -> Self {
        c.0
    }
}

impl CostVector {
    /// Validates an already-normalized vector: finite, non-negative, with a
    /// minimum within [`COST_TIE_TOLERANCE`] of zero.
    pub fn new(values: Vec<f64>) -> Result<Self, CostError> {
        if values.is_empty() {
            return Err(CostError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(CostError::InvalidVectorEntry { index, value });
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min > COST_TIE_TOLERANCE {
            return Err(CostError::NonzeroMinimum { min });
        }
        Ok(CostVector(values))
    }

    /// Accepts any finite vector and shifts it down by its minimum. Returns
    /// the vector together with the shift that was removed.
    pub fn from_raw(values: Vec<f64>) -> Result<(Self, f64), CostError> {
        if values.is_empty() {
            return Err(CostError::Empty);
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(CostError::InvalidVectorEntry { index, value });
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let shifted = values.into_iter().map(|v| v - min).collect();
        Ok((CostVector(shifted), min))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index of the first minimal entry.
    pub fn argmin(&self) -> usize {
        crate::eval::predict_argmin(&self.0)
    }

    pub fn z_indicator(&self) -> Vec<f64> {
        z_indicator(self)
    }
}

impl std::ops::Deref for CostVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// One cost-sensitive training example `(x, y, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostedExample {
    pub x: Vector,
    pub y: usize,
    pub c: CostVector,
}

impl CostedExample {
    pub fn new(x: Vector, y: usize, c: CostVector) -> Result<Self, CostError> {
        if y >= c.len() {
            return Err(CostError::LabelOutOfRange {
                label: y,
                classes: c.len(),
            });
        }
        if c[y] - c.min() > COST_TIE_TOLERANCE {
            return Err(CostError::LabelNotMinimal {
                label: y,
                value: c[y],
            });
        }
        Ok(CostedExample { x, y, c })
    }
}

/// Per-class example counts; every label must be `< classes`.
pub fn class_counts(labels: &[usize], classes: usize) -> Result<Vec<usize>, CostError> {
    let mut counts = vec![0usize; classes];
    for &label in labels {
        if label >= classes {
            return Err(CostError::LabelOutOfRange { label, classes });
        }
        counts[label] += 1;
    }
    Ok(counts)
}

/// Randomized proportional cost matrix: zero diagonal, and each off-diagonal
/// `C(y, k)` drawn uniformly from `[0, 10 · n_k / n_y]` where `n_j` counts the
/// class-`j` labels. Entries are drawn in row-major order.
pub fn gen_randomized_proportional(
    labels: &[usize],
    classes: usize,
    rng: &mut CsRng,
) -> Result<CostMatrix, CostError> {
    let counts = class_counts(labels, classes)?;
    if let Some(class) = counts.iter().position(|&n| n == 0) {
        return Err(CostError::AbsentClass { class });
    }
    let mut entries = vec![0.0; classes * classes];
    for y in 0..classes {
        for k in 0..classes {
            if y != k {
                let bound = PROPORTIONAL_COST_SCALE * counts[k] as f64 / counts[y] as f64;
                entries[y * classes + k] = rng.uniform(0.0, bound);
            }
        }
    }
    Ok(CostMatrix { classes, entries })
}

/// Divides by the maximum entry. Returns the scaled matrix and the divisor.
pub fn scale_by_max(c: &CostMatrix) -> Result<(CostMatrix, f64), CostError> {
    let max = c.max_entry();
    if max <= 0.0 {
        return Err(CostError::AllZero);
    }
    let entries = c.entries.iter().map(|v| v / max).collect();
    Ok((
        CostMatrix {
            classes: c.classes,
            entries,
        },
        max,
    ))
}

/// Row `y` of `c` as the cost vector of a class-`y` example.
pub fn row_as_cost_vector(c: &CostMatrix, y: usize) -> Result<CostVector, CostError> {
    if y >= c.classes {
        return Err(CostError::LabelOutOfRange {
            label: y,
            classes: c.classes,
        });
    }
    Ok(CostVector(c.row(y).to_vec()))
}

/// The error-aware vector `ĉ[k] = [k != y]`.
pub fn error_cost_vector(y: usize, classes: usize) -> Result<CostVector, CostError> {
    if y >= classes {
        return Err(CostError::LabelOutOfRange { label: y, classes });
    }
    Ok(CostVector(
        (0..classes).map(|k| if k == y { 0.0 } else { 1.0 }).collect(),
    ))
}

/// `+1` where `c[k]` ties the minimum of `c`, `-1` elsewhere.
pub fn z_indicator(c: &CostVector) -> Vec<f64> {
    let min = c.min();
    c.iter()
        .map(|&v| if v - min <= COST_TIE_TOLERANCE { 1.0 } else { -1.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_with_counts(counts: &[usize]) -> Vec<usize> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat(c).take(n))
            .collect()
    }

    #[test]
    fn proportional_balanced_bounds() {
        let labels = labels_with_counts(&[50, 50]);
        let mut rng = CsRng::seed_from(11);
        let c = gen_randomized_proportional(&labels, 2, &mut rng).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        assert_eq!(c.get(1, 1), 0.0);
        assert!((0.0..=10.0).contains(&c.get(0, 1)));
        assert!((0.0..=10.0).contains(&c.get(1, 0)));
    }

    #[test]
    fn proportional_imbalanced_bounds() {
        // class 0 is the majority (90), class 1 the minority (10)
        let labels = labels_with_counts(&[90, 10]);
        for seed in 0..50 {
            let c = gen_randomized_proportional(&labels, 2, &mut CsRng::seed_from(seed)).unwrap();
            assert!((0.0..=90.0).contains(&c.get(1, 0)));
            assert!((0.0..=10.0 / 9.0).contains(&c.get(0, 1)));
        }
    }

    #[test]
    fn proportional_is_seeded() {
        let labels = labels_with_counts(&[3, 4, 5]);
        let a = gen_randomized_proportional(&labels, 3, &mut CsRng::seed_from(5)).unwrap();
        let b = gen_randomized_proportional(&labels, 3, &mut CsRng::seed_from(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn proportional_absent_class() {
        let labels = labels_with_counts(&[3, 0, 5]);
        assert_eq!(
            gen_randomized_proportional(&labels, 3, &mut CsRng::seed_from(0)),
            Err(CostError::AbsentClass { class: 1 })
        );
    }

    #[test]
    fn scale_examples() {
        let c = CostMatrix::from_rows(&[[0.0, 2.0], [4.0, 0.0]]).unwrap();
        let (s, f) = scale_by_max(&c).unwrap();
        assert_eq!(f, 4.0);
        assert_eq!(s, CostMatrix::from_rows(&[[0.0, 0.5], [1.0, 0.0]]).unwrap());
        let (again, f2) = scale_by_max(&s).unwrap();
        assert_eq!(again, s);
        assert_eq!(f2, 1.0);
        assert_eq!(
            scale_by_max(&CostMatrix::from_rows(&[[0.0, 0.0], [0.0, 0.0]]).unwrap()),
            Err(CostError::AllZero)
        );
    }

    #[test]
    fn scale_random_max_is_one() {
        let labels = labels_with_counts(&[7, 3, 12, 5]);
        for seed in 0..100 {
            let c = gen_randomized_proportional(&labels, 4, &mut CsRng::seed_from(seed)).unwrap();
            let (s, _) = scale_by_max(&c).unwrap();
            assert_eq!(s.max_entry(), 1.0);
        }
    }

    #[test]
    fn row_vectors() {
        let c = CostMatrix::from_rows(&[[0.0, 1.0], [3.0, 0.0]]).unwrap();
        assert_eq!(row_as_cost_vector(&c, 0).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(row_as_cost_vector(&c, 1).unwrap().as_slice(), &[3.0, 0.0]);
        assert!(row_as_cost_vector(&c, 2).is_err());
    }

    #[test]
    fn error_vectors() {
        assert_eq!(error_cost_vector(1, 3).unwrap().as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(error_cost_vector(0, 2).unwrap().as_slice(), &[0.0, 1.0]);
        for y in 0..5 {
            let v = error_cost_vector(y, 5).unwrap();
            assert_eq!(v.iter().sum::<f64>(), 4.0);
            let z = z_indicator(&v);
            for (k, zk) in z.iter().enumerate() {
                assert_eq!(*zk, if k == y { 1.0 } else { -1.0 });
            }
        }
        assert!(error_cost_vector(3, 3).is_err());
    }

    #[test]
    fn z_examples() {
        let z = z_indicator(&CostVector::new(vec![0.0, 1.0, 2.0]).unwrap());
        assert_eq!(z, vec![1.0, -1.0, -1.0]);
        let z = z_indicator(&CostVector::new(vec![0.0, 0.0, 3.0]).unwrap());
        assert_eq!(z, vec![1.0, 1.0, -1.0]);
        let z = z_indicator(&CostVector::new(vec![1e-13, 0.0]).unwrap());
        assert_eq!(z, vec![1.0, 1.0]);
    }

    #[test]
    fn cost_vector_validation() {
        assert_eq!(
            CostVector::new(vec![1.0, 2.0]),
            Err(CostError::NonzeroMinimum { min: 1.0 })
        );
        assert!(CostVector::new(vec![0.0, -1.0]).is_err());
        assert!(CostVector::new(vec![]).is_err());
        let (v, shift) = CostVector::from_raw(vec![2.0, 5.0, 2.5]).unwrap();
        assert_eq!(shift, 2.0);
        assert_eq!(v.as_slice(), &[0.0, 3.0, 0.5]);
    }

    #[test]
    fn costed_example_requires_minimal_label_cost() {
        let c = CostVector::new(vec![0.0, 2.0]).unwrap();
        assert!(CostedExample::new(Vector::new(vec![0.5]), 0, c.clone()).is_ok());
        assert!(matches!(
            CostedExample::new(Vector::new(vec![0.5]), 1, c),
            Err(CostError::LabelNotMinimal { .. })
        ));
    }

    #[test]
    fn csv_and_json_forms() {
        let c = CostMatrix::from_rows(&[[0.0, 0.1, 2.5], [1.0 / 3.0, 0.0, 7.0], [4.0, 1e-9, 0.0]]).unwrap();
        let csv = c.to_csv();
        assert!(csv.starts_with("3\n0,0.1,2.5\n"));
        assert_eq!(CostMatrix::from_csv(&csv).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<CostMatrix>(&json).unwrap(), c);
        assert!(CostMatrix::from_csv("2\n0,1\n").is_err());
        assert!(matches!(
            CostMatrix::from_csv("2\n1,1\n1,0\n"),
            Err(CostError::NonzeroDiagonal { class: 0, .. })
        ));
        assert!(serde_json::from_str::<CostMatrix>(r#"{"classes":2,"entries":[[0,1],[1,1]]}"#).is_err());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn generated_rows_have_zero_min(
            counts in prop::collection::vec(1usize..30, 2..7),
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = counts.iter().enumerate()
                .flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
            let k = counts.len();
            let c = gen_randomized_proportional(&labels, k, &mut CsRng::seed_from(seed)).unwrap();
            let (scaled, _) = scale_by_max(&c).unwrap();
            for y in 0..k {
                let v = row_as_cost_vector(&c, y).unwrap();
                prop_assert_eq!(v.min(), 0.0);
                prop_assert_eq!(v[y], 0.0);
                prop_assert!(z_indicator(&v).contains(&1.0));
                // positive scaling keeps the cheapest class
                prop_assert_eq!(
                    crate::eval::predict_argmin(c.row(y)),
                    crate::eval::predict_argmin(scaled.row(y))
                );
                for kk in 0..k {
                    if kk != y {
                        let bound = 10.0 * counts[kk] as f64 / counts[y] as f64;
                        prop_assert!(c.get(y, kk) >= 0.0 && c.get(y, kk) <= bound);
                    }
                }
            }
        }
    }
}
