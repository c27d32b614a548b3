//! Scalar losses and their output-side derivatives.
//!
//! The one-sided losses compare regression outputs `r` against a cost vector
//! `c` through the margin `u_k = z_k · (r_k − c_k)`, where `z_k` is `+1` on the
//! minimal-cost entries and `−1` elsewhere. `ξ_k = max(u_k, 0)` is the hard
//! one-sided loss and `δ_k = ln(1 + e^{u_k})` its smooth upper bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{z_indicator, CostVector};
use crate::linalg::{sigmoid, softplus};

/// Smoothing constant of the softplus bound; fixed at one.
pub const SMOOTHING_ALPHA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("probability of class {class} is zero")]
    ZeroProbability { class: usize },
    #[error("class {class} out of range for {classes} outputs")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("reconstruction entry {index} = {value} must lie strictly inside (0, 1)")]
    ReconstructionAtBoundary { index: usize, value: f64 },
    #[error("mixture weight beta = {0} must lie in [0, 1]")]
    BetaOutOfRange(f64),
}

/// Mixture weight `β ∈ [0, 1]` between reconstruction and cost fitting.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub const ZERO: Beta = Beta(0.0);
    pub const ONE: Beta = Beta(1.0);

    pub fn new(value: f64) -> Result<Self, LossError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Beta(value))
        } else {
            Err(LossError::BetaOutOfRange(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Beta {
    type Error = LossError;
    fn try_from(v: f64) -> Result<Self, LossError> {
        Beta::new(v)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Nll,
    CrossEntropy,
    OneSided,
    Sosr,
    CaeMixture(Beta),
}

fn check_len(left: usize, right: usize) -> Result<(), LossError> {
    if left == right {
        Ok(())
    } else {
        Err(LossError::LengthMismatch { left, right })
    }
}

/// `−ln p[y]`.
pub fn nll(p: &[f64], y: usize) -> Result<f64, LossError> {
    let py = *p.get(y).ok_or(LossError::ClassOutOfRange {
        class: y,
        classes: p.len(),
    })?;
    if py <= 0.0 {
        return Err(LossError::ZeroProbability { class: y });
    }
    Ok(-py.ln())
}

/// `−Σ_j x_j ln x̃_j + (1 − x_j) ln(1 − x̃_j)`.
pub fn cross_entropy(x: &[f64], recon: &[f64]) -> Result<f64, LossError> {
    check_len(x.len(), recon.len())?;
    let mut total = 0.0;
    for (index, (&xj, &rj)) in x.iter().zip(recon).enumerate() {
        if rj <= 0.0 || rj >= 1.0 {
            return Err(LossError::ReconstructionAtBoundary { index, value: rj });
        }
        total -= xj * rj.ln() + (1.0 - xj) * (1.0 - rj).ln();
    }
    Ok(total)
}

/// Cross-entropy against `x̃ = s(a)` evaluated from the pre-activation `a`:
/// `Σ_j x_j·softplus(−a_j) + (1 − x_j)·softplus(a_j)`. Finite for every finite
/// `a`, including those where `s(a)` rounds to 0 or 1.
pub fn cross_entropy_from_logits(x: &[f64], logits: &[f64]) -> Result<f64, LossError> {
    check_len(x.len(), logits.len())?;
    Ok(x.iter()
        .zip(logits)
        .map(|(&xj, &a)| xj * softplus(-a) + (1.0 - xj) * softplus(a))
        .sum())
}

/// Margins `u_k = z_k · (r_k − c_k)`.
pub fn one_sided_margins(r: &[f64], c: &CostVector) -> Result<Vec<f64>, LossError> {
    check_len(r.len(), c.len())?;
    Ok(z_indicator(c)
        .iter()
        .zip(r.iter().zip(c.iter()))
        .map(|(z, (rk, ck))| z * (rk - ck))
        .collect())
}

/// `ξ_k = max(z_k · (r_k − c_k), 0)`.
pub fn one_sided(r: &[f64], c: &CostVector) -> Result<Vec<f64>, LossError> {
    Ok(one_sided_margins(r, c)?.into_iter().map(|u| u.max(0.0)).collect())
}

/// `δ_k = ln(1 + exp(z_k · (r_k − c_k)))`.
pub fn smooth_one_sided(r: &[f64], c: &CostVector) -> Result<Vec<f64>, LossError> {
    Ok(one_sided_margins(r, c)?.into_iter().map(softplus).collect())
}

/// `Σ_n Σ_k δ_{n,k}` over a batch of `(r, c)` pairs.
pub fn sosr_loss<'a, I>(batch: I) -> Result<f64, LossError>
where
    I: IntoIterator<Item = (&'a [f64], &'a CostVector)>,
{
    let mut total = 0.0;
    for (r, c) in batch {
        total += smooth_one_sided(r, c)?.iter().sum::<f64>();
    }
    Ok(total)
}

/// `(1 − β)·L_CE + β·L_SOSR`.
pub fn cae_mixture_loss(recon_term: f64, sosr_term: f64, beta: f64) -> Result<f64, LossError> {
    let beta = Beta::new(beta)?.get();
    Ok((1.0 - beta) * recon_term + beta * sosr_term)
}

/// `∂δ_k/∂r_k = z_k · s(z_k · (r_k − c_k))`.
pub fn sosr_output_grad(r: &[f64], c: &CostVector) -> Result<Vec<f64>, LossError> {
    check_len(r.len(), c.len())?;
    Ok(z_indicator(c)
        .iter()
        .zip(r.iter().zip(c.iter()))
        .map(|(&z, (rk, ck))| z * sigmoid(z * (rk - ck)))
        .collect())
}
