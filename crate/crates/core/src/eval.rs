//! Prediction rules and cost evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostMatrix, CostVector};
use crate::linalg::{softplus, Matrix};
use crate::nn::{FeedForwardNet, HeadKind, NnError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("probability vector has {got} entries, cost matrix has {expected} classes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot evaluate on an empty test set")]
    EmptyTestSet,
    #[error("{predictions} predictions for {labels} labels")]
    CountMismatch { predictions: usize, labels: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("bound audit needs a regression head")]
    NeedsRegressionHead,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Index of the largest entry; ties go to the lowest index.
pub fn predict_argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = k;
        }
    }
    best
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn predict_argmin(r: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in r.iter().enumerate().skip(1) {
        if v < r[best] {
            best = k;
        }
    }
    best
}

/// Expected cost of each prediction, `Σ_y p[y]·C(y, k)`.
pub fn expected_costs(p: &[f64], c: &CostMatrix) -> Result<Vec<f64>, EvalError> {
    let k = c.classes();
    if p.len() != k {
        return Err(EvalError::DimensionMismatch {
            expected: k,
            got: p.len(),
        });
    }
    let mut out = vec![0.0; k];
    for (y, &py) in p.iter().enumerate() {
        for (o, &cost) in out.iter_mut().zip(c.row(y)) {
            *o += py * cost;
        }
    }
    Ok(out)
}

/// Bayes-optimal decision: the class with the lowest expected cost.
pub fn predict_bayes(p: &[f64], c: &CostMatrix) -> Result<usize, EvalError> {
    Ok(predict_argmin(&expected_costs(p, c)?))
}

/// How a trained network's outputs become a class decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictRule {
    Argmax,
    Bayes,
    Argmin,
}

/// Applies `rule` to every row of `outputs`. `costs` is only read by Bayes.
pub fn predict_rows(
    outputs: &Matrix,
    rule: PredictRule,
    costs: &CostMatrix,
) -> Result<Vec<usize>, EvalError> {
    outputs
        .iter_rows()
        .map(|row| match rule {
            PredictRule::Argmax => Ok(predict_argmax(row)),
            PredictRule::Argmin => Ok(predict_argmin(row)),
            PredictRule::Bayes => predict_bayes(row, costs),
        })
        .collect()
}

/// Test-set cost summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_cost: f64,
    /// Sample standard deviation (N − 1 denominator) over √N.
    pub std_error: f64,
    pub error_rate: f64,
    pub n: usize,
    /// `confusion[y][k]` counts true class `y` predicted as `k`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "mean_cost,std_error,error_rate,n";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.mean_cost, self.std_error, self.error_rate, self.n
        )
    }
}

/// Scores predictions against unscaled costs. All statistics are computed
/// from the confusion counts, so they do not depend on example order.
pub fn evaluate_predictions(
    labels: &[usize],
    predictions: &[usize],
    c: &CostMatrix,
) -> Result<EvalReport, EvalError> {
    if labels.len() != predictions.len() {
        return Err(EvalError::CountMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let k = c.classes();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&y, &g) in labels.iter().zip(predictions) {
        for class in [y, g] {
            if class >= k {
                return Err(EvalError::ClassOutOfRange { class, classes: k });
            }
        }
        confusion[y][g] += 1;
    }
    let n = labels.len();
    let nf = n as f64;
    let mut total = 0.0;
    let mut wrong = 0;
    for (y, row) in confusion.iter().enumerate() {
        for (g, &count) in row.iter().enumerate() {
            total += count as f64 * c.get(y, g);
            if y != g {
                wrong += count;
            }
        }
    }
    let mean_cost = total / nf;
    let std_error = if n > 1 {
        let mut ss = 0.0;
        for (y, row) in confusion.iter().enumerate() {
            for (g, &count) in row.iter().enumerate() {
                let d = c.get(y, g) - mean_cost;
                ss += count as f64 * d * d;
            }
        }
        (ss / (nf - 1.0)).sqrt() / nf.sqrt()
    } else {
        0.0
    };
    Ok(EvalReport {
        mean_cost,
        std_error,
        error_rate: wrong as f64 / nf,
        n,
        confusion,
    })
}

/// Predicts with `rule` and scores the result.
pub fn evaluate(
    net: &FeedForwardNet,
    rule: PredictRule,
    x: &Matrix,
    labels: &[usize],
    c: &CostMatrix,
) -> Result<EvalReport, EvalError> {
    if x.rows() == 0 {
        return Err(EvalError::EmptyTestSet);
    }
    let outputs = net.predict_batch(x)?;
    evaluate_predictions(labels, &predict_rows(&outputs, rule, c)?, c)
}

/// One example of a bound audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub realized: f64,
    pub xi_sum: f64,
    pub delta_sum: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub violations: usize,
}

impl AuditReport {
    pub const CSV_HEADER: &'static str = "index,realized,xi_sum,delta_sum,violation";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                r.realized, r.xi_sum, r.delta_sum, r.violation
            ));
        }
        out
    }
}

/// Checks `c[argmin r] ≤ Σξ ≤ Σδ` for one regression output. The first
/// comparison allows rounding slack relative to the magnitudes involved.
pub fn audit_one(r: &[f64], c: &CostVector) -> AuditRow {
    let z = c.z_indicator();
    let (mut xi_sum, mut delta_sum, mut scale) = (0.0, 0.0, 1.0);
    for ((&rk, &ck), &zk) in r.iter().zip(c.iter()).zip(&z) {
        let u = zk * (rk - ck);
        xi_sum += u.max(0.0);
        delta_sum += softplus(u);
        scale += rk.abs() + ck;
    }
    let realized = c[predict_argmin(r)];
    let slack = 1e-12 * scale;
    let violation = !(realized <= xi_sum + slack && xi_sum <= delta_sum);
    AuditRow {
        realized,
        xi_sum,
        delta_sum,
        violation,
    }
}

/// Runs [`audit_one`] over every example. Violations are counted, not raised.
pub fn bound_audit(net: &FeedForwardNet, x: &Matrix, costs: &[CostVector]) -> Result<AuditReport, EvalError> {
    if net.head.kind != HeadKind::Regression {
        return Err(EvalError::NeedsRegressionHead);
    }
    if costs.len() != x.rows() {
        return Err(EvalError::CountMismatch {
            predictions: x.rows(),
            labels: costs.len(),
        });
    }
    let outputs = net.predict_batch(x)?;
    Ok(audit_outputs(&outputs, costs))
}

pub fn audit_outputs(outputs: &Matrix, costs: &[CostVector]) -> AuditReport {
    let rows: Vec<AuditRow> = outputs
        .iter_rows()
        .zip(costs)
        .map(|(r, c)| audit_one(r, c))
        .collect();
    let violations = rows.iter().filter(|r| r.violation).count();
    AuditReport { rows, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CsRng;
    use proptest::prelude::*;

    fn scan_max(v: &[f64]) -> usize {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v.iter().position(|&x| x == m).unwrap()
    }

    fn scan_min(v: &[f64]) -> usize {
        let m = v.iter().cloned().fold(f64::INFINITY, f64::min);
        v.iter().position(|&x| x == m).unwrap()
    }

    #[test]
    fn argmax_and_argmin_examples() {
        assert_eq!(predict_argmax(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(predict_argmax(&[0.25; 4]), 0);
        assert_eq!(predict_argmin(&[0.2, 0.1, 0.9]), 1);
        assert_eq!(predict_argmin(&[3.0; 5]), 0);
    }

    #[test]
    fn bayes_examples() {
        let c = CostMatrix::from_rows(&[[0.0, 1.0], [10.0, 0.0]]).unwrap();
        assert_eq!(expected_costs(&[0.5, 0.5], &c).unwrap(), vec![5.0, 0.5]);
        assert_eq!(predict_bayes(&[0.5, 0.5], &c).unwrap(), 1);
        let c3 = CostMatrix::from_rows(&[[0.0, 2.0, 3.0], [1.0, 0.0, 4.0], [5.0, 6.0, 0.0]]).unwrap();
        for y in 0..3 {
            let mut p = vec![0.0; 3];
            p[y] = 1.0;
            assert_eq!(predict_bayes(&p, &c3).unwrap(), y);
        }
        assert!(matches!(
            predict_bayes(&[0.5, 0.5], &c3),
            Err(EvalError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn evaluate_examples() {
        let c = CostMatrix::from_rows(&[[0.0, 2.0, 4.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]]).unwrap();
        let perfect = evaluate_predictions(&[0, 1, 2, 2], &[0, 1, 2, 2], &c).unwrap();
        assert_eq!(
            (perfect.mean_cost, perfect.error_rate, perfect.std_error),
            (0.0, 0.0, 0.0)
        );

        // costs {0, 2, 4}: mean 2, sample sd 2, standard error 2/√3
        let r = evaluate_predictions(&[0, 0, 0], &[0, 1, 2], &c).unwrap();
        assert_eq!(r.mean_cost, 2.0);
        assert!((r.std_error - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((r.std_error - 1.1547).abs() < 1e-4);
        assert!((r.error_rate - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.confusion[0], vec![1, 1, 1]);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), r.n);

        assert!(matches!(
            evaluate_predictions(&[], &[], &c),
            Err(EvalError::EmptyTestSet)
        ));
        assert!(evaluate_predictions(&[0, 3], &[0, 0], &c).is_err());
    }

    #[test]
    fn audit_hand_cases() {
        let c = CostVector::new(vec![0.0, 5.0]).unwrap();
        let row = audit_one(&[2.0, 3.0], &c);
        assert_eq!((row.realized, row.xi_sum), (0.0, 4.0));
        assert!(!row.violation);

        let c = CostVector::new(vec![1.0, 0.0, 3.5]).unwrap();
        let perfect = audit_one(&[1.0, 0.0, 3.5], &c);
        assert_eq!((perfect.realized, perfect.xi_sum), (0.0, 0.0));
        assert!((perfect.delta_sum - 3.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn rules_match_linear_scans(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            prop_assert_eq!(predict_argmax(&v), scan_max(&v));
            prop_assert_eq!(predict_argmin(&v), scan_min(&v));
        }

        #[test]
        fn bayes_under_zero_one_is_argmax(p in probs(6)) {
            prop_assert_eq!(predict_bayes(&p, &CostMatrix::zero_one(6)).unwrap(), predict_argmax(&p));
        }

        #[test]
        fn evaluate_is_permutation_invariant(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
            seed in any::<u64>(),
        ) {
            let mut rng = CsRng::seed_from(seed);
            let labels: Vec<usize> = (0..4).flat_map(|k| std::iter::repeat(k).take(3)).collect();
            let c = crate::cost::gen_randomized_proportional(&labels, 4, &mut rng).unwrap();
            let (y, g): (Vec<usize>, Vec<usize>) = pairs.iter().cloned().unzip();
            let base = evaluate_predictions(&y, &g, &c).unwrap();
            let mut shuffled = pairs.clone();
            rng.shuffle(&mut shuffled);
            let (y2, g2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
            prop_assert_eq!(&base, &evaluate_predictions(&y2, &g2, &c).unwrap());
            let direct: f64 = y.iter().zip(&g).map(|(&a, &b)| c.get(a, b)).sum::<f64>() / y.len() as f64;
            prop_assert!((base.mean_cost - direct).abs() <= 1e-12 * (1.0 + direct));
        }
    }
}
