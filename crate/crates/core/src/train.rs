//! Supervised fine-tuning and the algorithm grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{scale_by_max, CostError, CostMatrix, CostVector};
use crate::eval::{evaluate, EvalError, PredictRule};
use crate::linalg::Matrix;
use crate::losses::Beta;
use crate::nn::{
    FeedForwardNet, HeadKind, InitScheme, LayerParams, NetShape, NnError, OutputHead, Supervision,
};
use crate::pretrain::{stack_pretrain, PretrainConfig, PretrainError, PretrainHistory, PretrainMode};
use crate::rng::CsRng;

/// Default step size for the negative log-likelihood.
pub const DEFAULT_NLL_LEARNING_RATE: f64 = 0.1;
/// Default step size for SOSR; the regression outputs are unbounded.
pub const DEFAULT_SOSR_LEARNING_RATE: f64 = 0.01;

const INIT_STREAM: u64 = 0;
const PRETRAIN_STREAM: u64 = 1;
const FINETUNE_STREAM: u64 = 2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("fine-tuning diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("inconsistent algorithm: {0}")]
    InconsistentSpec(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
}

impl TrainError {
    /// True for numeric blow-ups in either training phase.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            TrainError::Diverged { .. } | TrainError::Pretrain(PretrainError::Diverged { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLoss {
    Nll,
    Sosr,
}

impl TrainLoss {
    pub fn head(self) -> HeadKind {
        match self {
            TrainLoss::Nll => HeadKind::Softmax,
            TrainLoss::Sosr => HeadKind::Regression,
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            TrainLoss::Nll => DEFAULT_NLL_LEARNING_RATE,
            TrainLoss::Sosr => DEFAULT_SOSR_LEARNING_RATE,
        }
    }
}

/// Where costs enter an algorithm: pre-training, training loss, prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub pretrain: PretrainMode,
    pub loss: TrainLoss,
    pub rule: PredictRule,
}

const NAMED: [(&str, PretrainMode, TrainLoss, PredictRule); 10] = [
    (
        "DNN_blind",
        PretrainMode::None,
        TrainLoss::Nll,
        PredictRule::Argmax,
    ),
    (
        "SDAE_blind",
        PretrainMode::Dae,
        TrainLoss::Nll,
        PredictRule::Argmax,
    ),
    (
        "DNN_Bayes",
        PretrainMode::None,
        TrainLoss::Nll,
        PredictRule::Bayes,
    ),
    (
        "SDAE_Bayes",
        PretrainMode::Dae,
        TrainLoss::Nll,
        PredictRule::Bayes,
    ),
    (
        "SEAE_Bayes",
        PretrainMode::Eae,
        TrainLoss::Nll,
        PredictRule::Bayes,
    ),
    (
        "SCAE_Bayes",
        PretrainMode::Cae,
        TrainLoss::Nll,
        PredictRule::Bayes,
    ),
    (
        "DNN_SOSR",
        PretrainMode::None,
        TrainLoss::Sosr,
        PredictRule::Argmin,
    ),
    (
        "SDAE_SOSR",
        PretrainMode::Dae,
        TrainLoss::Sosr,
        PredictRule::Argmin,
    ),
    (
        "SEAE_SOSR",
        PretrainMode::Eae,
        TrainLoss::Sosr,
        PredictRule::Argmin,
    ),
    ("CSDNN", PretrainMode::Cae, TrainLoss::Sosr, PredictRule::Argmin),
];

impl AlgorithmSpec {
    pub const CSDNN: AlgorithmSpec = AlgorithmSpec {
        pretrain: PretrainMode::Cae,
        loss: TrainLoss::Sosr,
        rule: PredictRule::Argmin,
    };

    pub fn new(pretrain: PretrainMode, loss: TrainLoss, rule: PredictRule) -> Result<Self, TrainError> {
        let spec = AlgorithmSpec { pretrain, loss, rule };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = matches!(
            (self.loss, self.rule),
            (TrainLoss::Nll, PredictRule::Argmax | PredictRule::Bayes)
                | (TrainLoss::Sosr, PredictRule::Argmin)
        );
        if ok {
            Ok(())
        } else {
            Err(TrainError::InconsistentSpec(format!(
                "{:?} prediction needs a different head than {:?} training",
                self.rule, self.loss
            )))
        }
    }

    /// Every named algorithm, in table order.
    pub fn all() -> Vec<AlgorithmSpec> {
        NAMED
            .iter()
            .map(|&(_, pretrain, loss, rule)| AlgorithmSpec { pretrain, loss, rule })
            .collect()
    }

    /// Whether pre-training depends on β.
    pub fn uses_beta(&self) -> bool {
        matches!(self.pretrain, PretrainMode::Eae | PretrainMode::Cae)
    }

    pub fn name(&self) -> String {
        NAMED
            .iter()
            .find(|&&(_, p, l, r)| (p, l, r) == (self.pretrain, self.loss, self.rule))
            .map(|&(n, ..)| n.to_string())
            .unwrap_or_else(|| format!("{:?}_{:?}_{:?}", self.pretrain, self.loss, self.rule))
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for AlgorithmSpec {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        let key = s.trim();
        if key.eq_ignore_ascii_case("SCAE_SOSR") {
            return Ok(AlgorithmSpec::CSDNN);
        }
        NAMED
            .iter()
            .find(|(n, ..)| n.eq_ignore_ascii_case(key))
            .map(|&(_, pretrain, loss, rule)| AlgorithmSpec { pretrain, loss, rule })
            .ok_or_else(|| TrainError::UnknownAlgorithm(s.to_string()))
    }
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    /// `None` picks the per-loss default.
    pub learning_rate: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta: Beta,
    pub pretrain: PretrainConfig,
    pub init: InitScheme,
    pub seed: u64,
    /// Early-stop NLL models on validation error rate instead of Bayes cost.
    pub error_rate_stopping: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64],
            learning_rate: None,
            batch_size: 32,
            max_epochs: 50,
            patience: 10,
            beta: Beta::ZERO,
            pretrain: PretrainConfig::default(),
            init: InitScheme::GlorotUniform,
            seed: 0,
            error_rate_stopping: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths {:?}", self.hidden));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("learning rate {lr}"));
            }
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch size and patience must be positive".into());
        }
        if !(self.pretrain.learning_rate > 0.0 && self.pretrain.learning_rate.is_finite())
            || self.pretrain.batch_size == 0
        {
            return bad("pre-training learning rate and batch size must be positive".into());
        }
        Ok(())
    }

    pub fn learning_rate_for(&self, loss: TrainLoss) -> f64 {
        self.learning_rate.unwrap_or_else(|| loss.default_learning_rate())
    }
}

/// Per-epoch fine-tuning record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's minibatches.
    pub train_loss: f64,
    /// The early-stopping metric (lower is better).
    pub validation_metric: f64,
    pub validation_error_rate: f64,
}

/// Held-out data for early stopping; costs are unscaled.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub x: &'a Matrix,
    pub labels: &'a [usize],
    pub costs: Option<&'a CostMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuned {
    pub net: FeedForwardNet,
    pub history: Vec<EpochRecord>,
    /// Index into `history` of the returned parameters.
    pub best_epoch: Option<usize>,
}

/// Serializes a history as JSON lines.
pub fn history_json_lines(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("plain record") + "\n")
        .collect()
}

fn validation_metric(
    net: &FeedForwardNet,
    loss: TrainLoss,
    val: &Validation<'_>,
    error_rate_stopping: bool,
) -> Result<(f64, f64), TrainError> {
    let classes = net.classes();
    let zero_one = CostMatrix::zero_one(classes);
    let (rule, costs) = match (loss, val.costs) {
        (TrainLoss::Sosr, Some(c)) => (PredictRule::Argmin, c),
        (TrainLoss::Sosr, None) => (PredictRule::Argmin, &zero_one),
        (TrainLoss::Nll, Some(c)) if !error_rate_stopping => (PredictRule::Bayes, c),
        (TrainLoss::Nll, _) => (PredictRule::Argmax, &zero_one),
    };
    let report = evaluate(net, rule, val.x, val.labels, costs)?;
    Ok((report.mean_cost, report.error_rate))
}

/// Minibatch SGD on the summed minibatch loss. The validation metric is checked
/// after every epoch and the best epoch's parameters are returned (earliest
/// on ties). Training stops after `patience` epochs without improvement.
pub fn fine_tune(
    mut net: FeedForwardNet,
    x: &Matrix,
    targets: Supervision<'_>,
    val: Validation<'_>,
    config: &TrainConfig,
    rng: &mut CsRng,
) -> Result<FineTuned, TrainError> {
    config.validate()?;
    let loss = match targets {
        Supervision::Labels(_) => TrainLoss::Nll,
        Supervision::Costs(_) => TrainLoss::Sosr,
    };
    if net.head.kind != loss.head() {
        return Err(NnError::TargetMismatch {
            head: net.head.kind,
            supervision: match loss {
                TrainLoss::Nll => "label",
                TrainLoss::Sosr => "cost-vector",
            },
        }
        .into());
    }
    if val.x.rows() == 0 {
        return Err(TrainError::EmptyValidation);
    }
    let lr = config.learning_rate_for(loss);
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, FeedForwardNet)> = None;

    for epoch in 0..config.max_epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_rows(batch);
            let out = match targets {
                Supervision::Labels(y) => {
                    let yb: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
                    net.backprop(&xb, Supervision::Labels(&yb))?
                }
                Supervision::Costs(c) => {
                    let cb: Vec<CostVector> = batch.iter().map(|&i| c[i].clone()).collect();
                    net.backprop(&xb, Supervision::Costs(&cb))?
                }
            };
            if !out.loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: out.loss,
                });
            }
            total += out.loss;
            net.apply_gradients(&out.grads, lr)?;
        }
        if !net.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let (metric, error_rate) = validation_metric(&net, loss, &val, config.error_rate_stopping)?;
        history.push(EpochRecord {
            epoch,
            train_loss: total / n.max(1) as f64,
            validation_metric: metric,
            validation_error_rate: error_rate,
        });
        match &best {
            Some((_, m, _)) if metric >= *m => {}
            _ => best = Some((epoch, metric, net.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= config.patience {
            break;
        }
    }
    Ok(match best {
        Some((epoch, _, best_net)) => FineTuned {
            net: best_net,
            history,
            best_epoch: Some(epoch),
        },
        None => FineTuned {
            net,
            history,
            best_epoch: None,
        },
    })
}

/// Training, validation, and unscaled costs for one run.
#[derive(Debug, Clone, Copy)]
pub struct TaskData<'a> {
    pub train_x: &'a Matrix,
    pub train_labels: &'a [usize],
    pub val_x: &'a Matrix,
    pub val_labels: &'a [usize],
    pub costs: &'a CostMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub net: FeedForwardNet,
    pub spec: AlgorithmSpec,
    pub beta: Beta,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub pretrain_history: Vec<PretrainHistory>,
}

impl TrainedModel {
    /// Test-set report under the model's prediction rule.
    pub fn evaluate(
        &self,
        x: &Matrix,
        labels: &[usize],
        costs: &CostMatrix,
    ) -> Result<crate::eval::EvalReport, EvalError> {
        evaluate(&self.net, self.spec.rule, x, labels, costs)
    }
}

/// Pre-trains according to `spec`, attaches the head, and fine-tunes. The
/// network trains on max-scaled costs; early stopping reads unscaled ones.
/// The run seed feeds three independent streams (head init, pre-training,
/// batch order) so algorithms that share a prefix share its randomness.
pub fn train_algorithm(
    spec: AlgorithmSpec,
    data: TaskData<'_>,
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    spec.validate()?;
    config.validate()?;
    let classes = data.costs.classes();
    let shape = NetShape::new(data.train_x.cols(), config.hidden.clone(), classes)?;
    let (scaled, _) = scale_by_max(data.costs)?;
    let train_costs: Vec<CostVector> = data
        .train_labels
        .iter()
        .map(|&y| crate::cost::row_as_cost_vector(&scaled, y))
        .collect::<Result<_, _>>()?;

    let mut pretrain_cfg = config.pretrain;
    pretrain_cfg.init = config.init;
    let stack = stack_pretrain(
        &shape,
        data.train_x,
        data.train_labels,
        Some(&train_costs),
        spec.pretrain,
        config.beta,
        &pretrain_cfg,
        &mut CsRng::stream(config.seed, PRETRAIN_STREAM),
    )?;
    let top = *config.hidden.last().expect("validated");
    let head = LayerParams::init(
        top,
        classes,
        config.init,
        &mut CsRng::stream(config.seed, INIT_STREAM),
    );
    let net = FeedForwardNet {
        hidden: stack.layers,
        head: OutputHead {
            kind: spec.loss.head(),
            layer: head,
        },
    };
    let targets = match spec.loss {
        TrainLoss::Nll => Supervision::Labels(data.train_labels),
        TrainLoss::Sosr => Supervision::Costs(&train_costs),
    };
    let val = Validation {
        x: data.val_x,
        labels: data.val_labels,
        costs: Some(data.costs),
    };
    let tuned = fine_tune(
        net,
        data.train_x,
        targets,
        val,
        config,
        &mut CsRng::stream(config.seed, FINETUNE_STREAM),
    )?;
    Ok(TrainedModel {
        net: tuned.net,
        spec,
        beta: if spec.uses_beta() { config.beta } else { Beta::ZERO },
        history: tuned.history,
        best_epoch: tuned.best_epoch,
        pretrain_history: stack.histories,
    })
}
