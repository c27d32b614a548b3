//! Denoising and cost-aware auto-encoders, and greedy layer-wise stacking.
//!
//! A cost-aware auto-encoder (CAE) is a denoising auto-encoder with an extra
//! linear head `r = W''·h + b''` that regresses the example's cost vector. It
//! minimizes `(1 − β)·CE(x, x̃) + β·Σ_k δ_k(r, c)` over corrupted inputs. At
//! `β = 0` the cost head receives no updates and training follows the DAE
//! path exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{error_cost_vector, CostError, CostVector};
use crate::linalg::{affine, logistic, softplus, LinalgError, Matrix, Vector};
use crate::losses::{Beta, LossError};
use crate::nn::{
    apply_logistic_derivative, init_hidden_layers, output_deltas, InitScheme, LayerParams, NetShape, NnError,
    Supervision,
};
use crate::rng::CsRng;

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("pre-training diverged at layer {layer}, epoch {epoch} (loss {loss})")]
    Diverged { layer: usize, epoch: usize, loss: f64 },
    #[error("{0:?} pre-training needs per-example cost vectors")]
    MissingCosts(PretrainMode),
    #[error("{got} cost vectors for {expected} inputs")]
    CostCount { expected: usize, got: usize },
    #[error("invalid pre-training config: {0}")]
    InvalidConfig(String),
}

impl From<LinalgError> for PretrainError {
    fn from(e: LinalgError) -> Self {
        PretrainError::Nn(e.into())
    }
}

/// Masking noise: each input component is zeroed with probability `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct CorruptionSpec {
    level: f64,
}

impl CorruptionSpec {
    pub fn new(level: f64) -> Result<Self, PretrainError> {
        if !(0.0..=1.0).contains(&level) {
            return Err(PretrainError::InvalidConfig(format!(
                "corruption level {level} outside [0, 1]"
            )));
        }
        Ok(CorruptionSpec { level })
    }

    pub fn level(self) -> f64 {
        self.level
    }
}

impl TryFrom<f64> for CorruptionSpec {
    type Error = PretrainError;
    fn try_from(v: f64) -> Result<Self, PretrainError> {
        CorruptionSpec::new(v)
    }
}

impl From<CorruptionSpec> for f64 {
    fn from(c: CorruptionSpec) -> f64 {
        c.level
    }
}

/// Zeroes each component independently with probability `spec.level()`.
pub fn corrupt(x: &[f64], spec: CorruptionSpec, rng: &mut CsRng) -> Vector {
    x.iter()
        .map(|&v| if rng.unit() < spec.level { 0.0 } else { v })
        .collect::<Vec<_>>()
        .into()
}

/// Row-major [`corrupt`] over a batch.
pub fn corrupt_batch(x: &Matrix, spec: CorruptionSpec, rng: &mut CsRng) -> Matrix {
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        if rng.unit() < spec.level {
            *v = 0.0;
        }
    }
    out
}

/// `{W, b}` encodes `d → d'`, `{W', b'}` reconstructs `d' → d`. Untied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaeParams {
    pub encoder: LayerParams,
    pub decoder: LayerParams,
}

/// A [`DaeParams`] plus the cost-regression head `{W'', b''}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeParams {
    pub dae: DaeParams,
    pub cost_head: LayerParams,
}

/// `h = s(W·x̂ + b)`, `x̃ = s(W'·h + b')`.
pub fn dae_forward(p: &DaeParams, x_hat: &[f64]) -> Result<(Vector, Vector), PretrainError> {
    let h = logistic(&affine(&p.encoder.weights, x_hat, &p.encoder.bias)?);
    let recon = logistic(&affine(&p.decoder.weights, &h, &p.decoder.bias)?);
    Ok((h, recon))
}

/// [`dae_forward`] plus `r = W''·h + b''`.
pub fn cae_forward(p: &CaeParams, x_hat: &[f64]) -> Result<(Vector, Vector, Vector), PretrainError> {
    let (h, recon) = dae_forward(&p.dae, x_hat)?;
    let r = affine(&p.cost_head.weights, &h, &p.cost_head.bias)?;
    Ok((h, recon, r))
}

/// Mixture loss `(1 − β)·CE + β·SOSR` summed over the rows of `x_hat`, with
/// `x_clean` as the reconstruction target.
pub fn cae_loss(
    p: &CaeParams,
    x_clean: &Matrix,
    x_hat: &Matrix,
    costs: &[CostVector],
    beta: Beta,
) -> Result<f64, PretrainError> {
    let beta = beta.get();
    let h = p.dae.encoder.encode(x_hat)?;
    let ce = recon_loss(&p.dae.decoder.pre_activation(&h)?, x_clean);
    let r = p.cost_head.pre_activation(&h)?;
    let (sosr, _) = output_deltas(&r, Supervision::Costs(costs))?;
    Ok((1.0 - beta) * ce + beta * sosr)
}

/// Gradients of [`cae_loss`] with respect to every CAE parameter.
pub fn cae_gradients(
    p: &CaeParams,
    x_clean: &Matrix,
    x_hat: &Matrix,
    costs: &[CostVector],
    beta: Beta,
) -> Result<CaeParams, PretrainError> {
    let step = autoencoder_step(p, x_clean, x_hat, Some(costs), beta)?;
    Ok(CaeParams {
        dae: DaeParams {
            encoder: step.encoder,
            decoder: step
                .decoder
                .unwrap_or_else(|| LayerParams::zeros(p.dae.decoder.in_dim(), p.dae.decoder.out_dim())),
        },
        cost_head: step
            .cost_head
            .unwrap_or_else(|| LayerParams::zeros(p.cost_head.in_dim(), p.cost_head.out_dim())),
    })
}

fn recon_loss(logits: &Matrix, target: &Matrix) -> f64 {
    logits
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&a, &x)| x * softplus(-a) + (1.0 - x) * softplus(a))
        .sum()
}

/// SGD settings for one auto-encoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub corruption: CorruptionSpec,
    #[serde(default)]
    pub init: InitScheme,
    /// Also record the clean-input loss after every epoch.
    #[serde(default)]
    pub monitor_clean: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 15,
            corruption: CorruptionSpec { level: 0.25 },
            init: InitScheme::GlorotUniform,
            monitor_clean: false,
        }
    }
}

impl PretrainConfig {
    fn validate(&self) -> Result<(), PretrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 {
            return Err(PretrainError::InvalidConfig(format!(
                "learning rate {} / batch size {}",
                self.learning_rate, self.batch_size
            )));
        }
        Ok(())
    }
}

/// Per-layer training trace. Losses are per-example means.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainHistory {
    /// Mean minibatch loss (corrupted inputs) of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Clean-input loss after each epoch, when monitored.
    pub clean_losses: Vec<f64>,
    pub initial_clean_loss: f64,
    pub final_clean_loss: f64,
}

struct StepGrads {
    loss: f64,
    encoder: LayerParams,
    decoder: Option<LayerParams>,
    cost_head: Option<LayerParams>,
}

/// One forward/backward pass over a minibatch. Terms with zero mixture
/// weight are skipped entirely.
fn autoencoder_step(
    p: &CaeParams,
    x_clean: &Matrix,
    x_hat: &Matrix,
    costs: Option<&[CostVector]>,
    beta: Beta,
) -> Result<StepGrads, PretrainError> {
    let beta = beta.get();
    let recon_weight = 1.0 - beta;
    let h = p.dae.encoder.encode(x_hat)?;
    let mut loss = 0.0;
    let mut dh: Option<Matrix> = None;

    let decoder = if recon_weight > 0.0 {
        let logits = p.dae.decoder.pre_activation(&h)?;
        loss += recon_weight * recon_loss(&logits, x_clean);
        let mut d = logits;
        for (dv, &x) in d.as_mut_slice().iter_mut().zip(x_clean.as_slice()) {
            *dv = recon_weight * (crate::linalg::sigmoid(*dv) - x);
        }
        let g = LayerParams::gradient(&h, &d)?;
        dh = Some(d.matmul(&p.dae.decoder.weights)?);
        Some(g)
    } else {
        None
    };

    let cost_head = match costs {
        Some(costs) if beta > 0.0 => {
            let r = p.cost_head.pre_activation(&h)?;
            let (sosr, mut d) = output_deltas(&r, Supervision::Costs(costs))?;
            loss += beta * sosr;
            for v in d.as_mut_slice() {
                *v *= beta;
            }
            let g = LayerParams::gradient(&h, &d)?;
            let back = d.matmul(&p.cost_head.weights)?;
            dh = Some(match dh {
                Some(mut acc) => {
                    acc.axpy(1.0, &back)?;
                    acc
                }
                None => back,
            });
            Some(g)
        }
        _ => None,
    };

    let mut dz = dh.unwrap_or_else(|| Matrix::zeros(h.rows(), h.cols()));
    apply_logistic_derivative(&mut dz, &h);
    let encoder = LayerParams::gradient(x_hat, &dz)?;
    Ok(StepGrads {
        loss,
        encoder,
        decoder,
        cost_head,
    })
}

fn clean_loss(
    p: &CaeParams,
    inputs: &Matrix,
    costs: Option<&[CostVector]>,
    beta: Beta,
) -> Result<f64, PretrainError> {
    let n = inputs.rows().max(1) as f64;
    let total = match costs {
        Some(c) => cae_loss(p, inputs, inputs, c, beta)?,
        None => {
            let h = p.dae.encoder.encode(inputs)?;
            recon_loss(&p.dae.decoder.pre_activation(&h)?, inputs)
        }
    };
    Ok(total / n)
}

/// Shared DAE/CAE trainer. Randomness is split into fixed streams (weights,
/// noise, batch order, cost head) so a CAE at `β = 0` replays the DAE run.
fn train_autoencoder(
    inputs: &Matrix,
    costs: Option<&[CostVector]>,
    width: usize,
    beta: Beta,
    config: &PretrainConfig,
    layer: usize,
    rng: &mut CsRng,
) -> Result<(CaeParams, PretrainHistory), PretrainError> {
    config.validate()?;
    if width == 0 || inputs.cols() == 0 {
        return Err(PretrainError::InvalidConfig(format!(
            "auto-encoder {} -> {width}",
            inputs.cols()
        )));
    }
    if let Some(c) = costs {
        if c.len() != inputs.rows() {
            return Err(PretrainError::CostCount {
                expected: inputs.rows(),
                got: c.len(),
            });
        }
    }
    let mut init_rng = rng.fork();
    let mut noise_rng = rng.fork();
    let mut order_rng = rng.fork();
    let mut head_rng = rng.fork();

    let d = inputs.cols();
    let encoder = LayerParams::init(d, width, config.init, &mut init_rng);
    let decoder = LayerParams::init(width, d, config.init, &mut init_rng);
    let classes = costs.and_then(|c| c.first()).map_or(0, |c| c.len());
    let cost_head = LayerParams::init(width, classes, config.init, &mut head_rng);
    let mut params = CaeParams {
        dae: DaeParams { encoder, decoder },
        cost_head,
    };

    let mut history = PretrainHistory {
        initial_clean_loss: clean_loss(&params, inputs, costs, beta)?,
        ..Default::default()
    };
    let n = inputs.rows();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        order_rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            let x_hat = corrupt_batch(&x, config.corruption, &mut noise_rng);
            let batch_costs: Option<Vec<CostVector>> =
                costs.map(|c| batch.iter().map(|&i| c[i].clone()).collect());
            let step = autoencoder_step(&params, &x, &x_hat, batch_costs.as_deref(), beta)?;
            if !step.loss.is_finite() {
                return Err(PretrainError::Diverged {
                    layer,
                    epoch,
                    loss: step.loss,
                });
            }
            epoch_loss += step.loss;
            let lr = config.learning_rate;
            params.dae.encoder.axpy(-lr, &step.encoder)?;
            if let Some(g) = &step.decoder {
                params.dae.decoder.axpy(-lr, g)?;
            }
            if let Some(g) = &step.cost_head {
                params.cost_head.axpy(-lr, g)?;
            }
        }
        let mean = epoch_loss / n.max(1) as f64;
        if !mean.is_finite() {
            return Err(PretrainError::Diverged {
                layer,
                epoch,
                loss: mean,
            });
        }
        history.epoch_losses.push(mean);
        if config.monitor_clean {
            history
                .clean_losses
                .push(clean_loss(&params, inputs, costs, beta)?);
        }
    }
    history.final_clean_loss = clean_loss(&params, inputs, costs, beta)?;
    Ok((params, history))
}

/// Trains a denoising auto-encoder on the cross-entropy reconstruction loss.
pub fn train_dae(
    inputs: &Matrix,
    width: usize,
    config: &PretrainConfig,
    rng: &mut CsRng,
) -> Result<(DaeParams, PretrainHistory), PretrainError> {
    let (p, h) = train_autoencoder(inputs, None, width, Beta::ZERO, config, 0, rng)?;
    Ok((p.dae, h))
}

/// Trains a cost-aware auto-encoder on the β-mixture loss.
pub fn train_cae(
    inputs: &Matrix,
    costs: &[CostVector],
    width: usize,
    beta: Beta,
    config: &PretrainConfig,
    rng: &mut CsRng,
) -> Result<(CaeParams, PretrainHistory), PretrainError> {
    train_autoencoder(inputs, Some(costs), width, beta, config, 0, rng)
}

/// How hidden layers are initialized before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainMode {
    /// Random initialization.
    None,
    /// Stacked denoising auto-encoders.
    Dae,
    /// Stacked CAEs fitting the 0/1 error vectors `[k != y]`.
    Eae,
    /// Stacked CAEs fitting the example cost vectors.
    Cae,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackOutput {
    pub layers: Vec<LayerParams>,
    pub histories: Vec<PretrainHistory>,
}

/// Greedy layer-wise pre-training. Layer `i` is trained on the clean
/// encodings produced by the already trained layers `1..i`; each layer draws
/// from its own fork of `rng`. Mode [`PretrainMode::None`] returns the hidden
/// layers of a fresh [`crate::nn::init_net`] drawn from the same generator.
#[allow(clippy::too_many_arguments)]
pub fn stack_pretrain(
    shape: &NetShape,
    inputs: &Matrix,
    labels: &[usize],
    costs: Option<&[CostVector]>,
    mode: PretrainMode,
    beta: Beta,
    config: &PretrainConfig,
    rng: &mut CsRng,
) -> Result<StackOutput, PretrainError> {
    shape.validate()?;
    if inputs.cols() != shape.input {
        return Err(NnError::InvalidShape(format!(
            "inputs have {} features, shape expects {}",
            inputs.cols(),
            shape.input
        ))
        .into());
    }
    let targets: Option<Vec<CostVector>> = match mode {
        PretrainMode::None => {
            return Ok(StackOutput {
                layers: init_hidden_layers(shape, config.init, rng)?,
                histories: Vec::new(),
            })
        }
        PretrainMode::Dae => None,
        PretrainMode::Eae => Some(
            labels
                .iter()
                .map(|&y| error_cost_vector(y, shape.classes))
                .collect::<Result<_, _>>()?,
        ),
        PretrainMode::Cae => Some(costs.ok_or(PretrainError::MissingCosts(mode))?.to_vec()),
    };
    let beta = if mode == PretrainMode::Dae {
        Beta::ZERO
    } else {
        beta
    };

    let mut layers = Vec::with_capacity(shape.hidden.len());
    let mut histories = Vec::with_capacity(shape.hidden.len());
    let mut rep = inputs.clone();
    for (i, &width) in shape.hidden.iter().enumerate() {
        let mut layer_rng = rng.fork();
        let (p, h) = train_autoencoder(&rep, targets.as_deref(), width, beta, config, i, &mut layer_rng)?;
        if i + 1 < shape.hidden.len() {
            rep = p.dae.encoder.encode(&rep)?;
        }
        layers.push(p.dae.encoder);
        histories.push(h);
    }
    Ok(StackOutput { layers, histories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_net, HeadKind};

    #[test]
    fn corruption_endpoints_and_rate() {
        let x: Vec<f64> = (0..10_000).map(|i| 0.1 + (i % 9) as f64 * 0.1).collect();
        let mut rng = CsRng::seed_from(2);
        assert_eq!(
            corrupt(&x, CorruptionSpec::new(0.0).unwrap(), &mut rng).as_slice(),
            &x[..]
        );
        assert!(corrupt(&x, CorruptionSpec::new(1.0).unwrap(), &mut rng)
            .iter()
            .all(|&v| v == 0.0));
        let c = corrupt(&x, CorruptionSpec::new(0.3).unwrap(), &mut rng);
        let zeroed = c.iter().filter(|&&v| v == 0.0).count() as f64 / x.len() as f64;
        // binomial sd is sqrt(0.21 / 10^4) ≈ 0.0046, so ±0.015 is > 3 sd
        assert!((zeroed - 0.3).abs() <= 0.015, "{zeroed}");
        assert!(CorruptionSpec::new(1.2).is_err());
        let again = corrupt(&x, CorruptionSpec::new(0.3).unwrap(), &mut CsRng::seed_from(5));
        let same = corrupt(&x, CorruptionSpec::new(0.3).unwrap(), &mut CsRng::seed_from(5));
        assert_eq!(again, same);
    }

    fn fixed_cae() -> CaeParams {
        CaeParams {
            dae: DaeParams {
                encoder: LayerParams::new(Matrix::from_rows(&[[1.0, -2.0]]).unwrap(), vec![0.5]).unwrap(),
                decoder: LayerParams::new(Matrix::from_rows(&[[3.0], [-1.0]]).unwrap(), vec![0.0, 0.2])
                    .unwrap(),
            },
            cost_head: LayerParams::new(
                Matrix::from_rows(&[[2.0], [0.5], [-1.0]]).unwrap(),
                vec![0.1, 0.0, 1.0],
            )
            .unwrap(),
        }
    }

    #[test]
    fn forward_examples() {
        let zero = DaeParams {
            encoder: LayerParams::zeros(3, 2),
            decoder: LayerParams::zeros(2, 3),
        };
        let (h, recon) = dae_forward(&zero, &[1.0, 0.0, 0.4]).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 0.5]);
        assert_eq!(recon.as_slice(), &[0.5, 0.5, 0.5]);

        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let p = fixed_cae();
        let x = [0.3, 0.8];
        let h = s(0.3 - 1.6 + 0.5);
        let (hv, rv, r) = cae_forward(&p, &x).unwrap();
        assert!((hv[0] - h).abs() < 1e-15);
        assert!((rv[0] - s(3.0 * h)).abs() < 1e-15);
        assert!((rv[1] - s(-h + 0.2)).abs() < 1e-15);
        assert!((r[0] - (2.0 * h + 0.1)).abs() < 1e-15);
        assert!((r[2] - (1.0 - h)).abs() < 1e-15);
        let (dh, drecon) = dae_forward(&p.dae, &x).unwrap();
        assert_eq!((dh, drecon), (hv, rv));
        assert!(dae_forward(&p.dae, &[0.1]).is_err());
    }

    #[test]
    fn cost_head_bias_passthrough() {
        let mut p = fixed_cae();
        p.cost_head = LayerParams::new(Matrix::zeros(3, 1), vec![0.0, 4.0, 2.0]).unwrap();
        for x in [[0.0, 0.0], [1.0, 0.3], [0.2, 0.9]] {
            assert_eq!(cae_forward(&p, &x).unwrap().2.as_slice(), &[0.0, 4.0, 2.0]);
        }
    }

    fn one_hot_data() -> Matrix {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| (0..8).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let cfg = PretrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let (a, h) = train_dae(&one_hot_data(), 3, &cfg, &mut CsRng::seed_from(1)).unwrap();
        let mut rng = CsRng::seed_from(1);
        let mut init_rng = rng.fork();
        let enc = LayerParams::init(8, 3, cfg.init, &mut init_rng);
        assert_eq!(a.encoder, enc);
        assert!(h.epoch_losses.is_empty());
        assert_eq!(h.initial_clean_loss, h.final_clean_loss);
    }

    #[test]
    fn dae_learns_one_hot_codes() {
        let data = one_hot_data();
        let cfg = PretrainConfig {
            learning_rate: 0.5,
            batch_size: 4,
            epochs: 500,
            corruption: CorruptionSpec::new(0.0).unwrap(),
            ..Default::default()
        };
        let (p, h) = train_dae(&data, 3, &cfg, &mut CsRng::seed_from(3)).unwrap();
        assert!(h.final_clean_loss < h.initial_clean_loss);
        let recovered = (0..8)
            .filter(|&i| {
                let (_, recon) = dae_forward(&p, data.row(i)).unwrap();
                crate::eval::predict_argmax(&recon) == i
            })
            .count();
        assert!(recovered >= 7, "recovered {recovered}/8");
    }

    #[test]
    fn cae_at_beta_zero_replays_dae() {
        let data = one_hot_data();
        let costs: Vec<CostVector> = (0..8).map(|i| error_cost_vector(i % 3, 3).unwrap()).collect();
        let cfg = PretrainConfig {
            epochs: 20,
            learning_rate: 0.3,
            ..Default::default()
        };
        let (dae, hd) = train_dae(&data, 4, &cfg, &mut CsRng::seed_from(9)).unwrap();
        let (cae, hc) = train_cae(&data, &costs, 4, Beta::ZERO, &cfg, &mut CsRng::seed_from(9)).unwrap();
        assert_eq!(cae.dae, dae);
        assert_eq!(hd.epoch_losses, hc.epoch_losses);
    }

    #[test]
    fn cae_fits_linear_costs_at_beta_one() {
        // c = [0, 2·x0, 2·x1]: class 0 is always cheapest
        let mut rng = CsRng::seed_from(17);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.unit(), rng.unit()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let costs: Vec<CostVector> = rows
            .iter()
            .map(|r| CostVector::new(vec![0.0, 2.0 * r[0], 2.0 * r[1]]).unwrap())
            .collect();
        let cfg = PretrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            epochs: 200,
            corruption: CorruptionSpec::new(0.0).unwrap(),
            ..Default::default()
        };
        let (_, h) = train_cae(&x, &costs, 6, Beta::ONE, &cfg, &mut CsRng::seed_from(1)).unwrap();
        let per_entry = h.final_clean_loss / 3.0;
        assert!(per_entry < std::f64::consts::LN_2, "{per_entry}");
        assert!(h.final_clean_loss < h.initial_clean_loss);
    }

    fn random_costs(n: usize, k: usize, rng: &mut CsRng) -> (Vec<usize>, Vec<CostVector>) {
        let mut labels = Vec::new();
        let mut costs = Vec::new();
        for i in 0..n {
            let y = i % k;
            let v = (0..k)
                .map(|j| if j == y { 0.0 } else { rng.uniform(0.0, 3.0) })
                .collect();
            labels.push(y);
            costs.push(CostVector::new(v).unwrap());
        }
        (labels, costs)
    }

    #[test]
    fn mixture_gradients_match_finite_differences() {
        let mut rng = CsRng::seed_from(23);
        let x = Matrix::new(5, 4, (0..20).map(|_| rng.unit()).collect()).unwrap();
        let x_hat = corrupt_batch(&x, CorruptionSpec::new(0.25).unwrap(), &mut rng);
        let (_, costs) = random_costs(5, 3, &mut rng);
        let scheme = InitScheme::Uniform { limit: 1.0 };
        let p = CaeParams {
            dae: DaeParams {
                encoder: LayerParams::init(4, 3, scheme, &mut rng),
                decoder: LayerParams::init(3, 4, scheme, &mut rng),
            },
            cost_head: LayerParams::init(3, 3, scheme, &mut rng),
        };
        for beta in [0.0, 0.3, 1.0] {
            let beta = Beta::new(beta).unwrap();
            let g = cae_gradients(&p, &x, &x_hat, &costs, beta).unwrap();
            let analytic =
                crate::nn::flatten_layers([&g.dae.encoder, &g.dae.decoder, &g.cost_head].into_iter());
            let base = crate::nn::flatten_layers([&p.dae.encoder, &p.dae.decoder, &p.cost_head].into_iter());
            for (i, &a) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut flat = base.clone();
                    flat[i] += delta;
                    cae_loss(&unflatten(&p, &flat), &x, &x_hat, &costs, beta).unwrap()
                };
                let eps = 1e-5;
                let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
                assert!(rel < 1e-5, "beta {beta:?} param {i}: {a} vs {fd}");
            }
        }
    }

    fn unflatten(template: &CaeParams, flat: &[f64]) -> CaeParams {
        let mut out = template.clone();
        let mut it = flat.iter().copied();
        for l in [&mut out.dae.encoder, &mut out.dae.decoder, &mut out.cost_head] {
            for w in l.weights.as_mut_slice() {
                *w = it.next().unwrap();
            }
            for b in &mut l.bias {
                *b = it.next().unwrap();
            }
        }
        out
    }

    #[test]
    fn stack_modes() {
        let shape = NetShape::new(8, vec![5, 3], 3).unwrap();
        let mut rng = CsRng::seed_from(31);
        let x = Matrix::new(30, 8, (0..240).map(|_| rng.unit()).collect()).unwrap();
        let (labels, costs) = random_costs(30, 3, &mut rng);
        let cfg = PretrainConfig {
            epochs: 3,
            learning_rate: 0.05,
            ..Default::default()
        };
        let beta = Beta::new(0.4).unwrap();

        let none = stack_pretrain(
            &shape,
            &x,
            &labels,
            None,
            PretrainMode::None,
            beta,
            &cfg,
            &mut CsRng::seed_from(1),
        )
        .unwrap();
        let fresh = init_net(&shape, HeadKind::Regression, cfg.init, &mut CsRng::seed_from(1)).unwrap();
        assert_eq!(none.layers, fresh.hidden);

        let dae = stack_pretrain(
            &shape,
            &x,
            &labels,
            None,
            PretrainMode::Dae,
            beta,
            &cfg,
            &mut CsRng::seed_from(2),
        )
        .unwrap();
        assert_eq!(dae.layers.len(), 2);
        assert_eq!(dae.layers[0].weights.shape(), (5, 8));
        assert_eq!(dae.layers[1].weights.shape(), (3, 5));

        // layer 2 trains on clean layer-1 encodings, from the second fork
        let mut rng = CsRng::seed_from(2);
        let (l1, _) = train_dae(&x, 5, &cfg, &mut rng.fork()).unwrap();
        let rep = l1.encoder.encode(&x).unwrap();
        let (l2, _) = train_dae(&rep, 3, &cfg, &mut rng.fork()).unwrap();
        assert_eq!(dae.layers, vec![l1.encoder, l2.encoder]);

        let cae0 = stack_pretrain(
            &shape,
            &x,
            &labels,
            Some(&costs),
            PretrainMode::Cae,
            Beta::ZERO,
            &cfg,
            &mut CsRng::seed_from(2),
        )
        .unwrap();
        assert_eq!(cae0.layers, dae.layers);

        let cae = stack_pretrain(
            &shape,
            &x,
            &labels,
            Some(&costs),
            PretrainMode::Cae,
            beta,
            &cfg,
            &mut CsRng::seed_from(2),
        )
        .unwrap();
        assert_ne!(cae.layers, dae.layers);
        let again = stack_pretrain(
            &shape,
            &x,
            &labels,
            Some(&costs),
            PretrainMode::Cae,
            beta,
            &cfg,
            &mut CsRng::seed_from(2),
        )
        .unwrap();
        assert_eq!(cae, again);

        let eae = stack_pretrain(
            &shape,
            &x,
            &labels,
            None,
            PretrainMode::Eae,
            beta,
            &cfg,
            &mut CsRng::seed_from(2),
        )
        .unwrap();
        assert_eq!(eae.layers.len(), 2);
        assert!(matches!(
            stack_pretrain(
                &shape,
                &x,
                &labels,
                None,
                PretrainMode::Cae,
                beta,
                &cfg,
                &mut CsRng::seed_from(2)
            ),
            Err(PretrainError::MissingCosts(PretrainMode::Cae))
        ));
    }

    #[test]
    fn cae_loss_improves_on_toy_data() {
        let mut rng = CsRng::seed_from(41);
        let x = Matrix::new(64, 6, (0..384).map(|_| rng.unit()).collect()).unwrap();
        let (_, costs) = random_costs(64, 3, &mut rng);
        let cfg = PretrainConfig {
            epochs: 40,
            learning_rate: 0.05,
            batch_size: 8,
            ..Default::default()
        };
        let (_, h) = train_cae(&x, &costs, 5, Beta::new(0.5).unwrap(), &cfg, &mut rng).unwrap();
        assert!(h.epoch_losses.iter().all(|l| l.is_finite()));
        let tenth = cfg.epochs / 10;
        let first: f64 = h.epoch_losses[..tenth].iter().sum::<f64>() / tenth as f64;
        let last: f64 = h.epoch_losses[cfg.epochs - tenth..].iter().sum::<f64>() / tenth as f64;
        assert!(last < first, "{first} -> {last}");
    }
}
