//! Feed-forward networks with logistic hidden layers and either a softmax or
//! a linear regression output head.
//!
//! Batches are matrices with one example per row. Losses are summed over the
//! batch, so gradients are sums of per-example gradients.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostVector;
use crate::linalg::{affine, log_sum_exp, logistic, sigmoid, softplus, LinalgError, Matrix, Vector};
use crate::rng::CsRng;

pub const CHECKPOINT_FORMAT: &str = "csdnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
    #[error("operation needs a {expected:?} head, network has {found:?}")]
    WrongHead { expected: HeadKind, found: HeadKind },
    #[error("{supervision} targets cannot train a {head:?} head")]
    TargetMismatch {
        head: HeadKind,
        supervision: &'static str,
    },
    #[error("batch has {inputs} inputs but {targets} targets")]
    BatchSizeMismatch { inputs: usize, targets: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("cost vector of length {found}, expected {expected}")]
    CostLength { expected: usize, found: usize },
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint decode: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint {format:?} version {version}")]
    CheckpointVersion { format: String, version: u32 },
}

/// Weight initialization for fresh layers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitScheme {
    /// Uniform on `±sqrt(6 / (fan_in + fan_out))`.
    #[default]
    GlorotUniform,
    /// Uniform on `±limit`.
    Uniform { limit: f64 },
}

impl InitScheme {
    pub fn limit(self, fan_in: usize, fan_out: usize) -> f64 {
        match self {
            InitScheme::GlorotUniform => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            InitScheme::Uniform { limit } => limit,
        }
    }
}

/// One fully connected layer `{W, b}`, `W` being `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        if weights.rows() != bias.len() {
            return Err(NnError::InvalidShape(format!(
                "weights {:?} with bias of length {}",
                weights.shape(),
                bias.len()
            )));
        }
        Ok(LayerParams { weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LayerParams {
            weights: Matrix::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Fresh layer: weights drawn row-major from the scheme, zero biases.
    pub fn init(in_dim: usize, out_dim: usize, scheme: InitScheme, rng: &mut CsRng) -> Self {
        let limit = scheme.limit(in_dim, out_dim);
        let data = (0..in_dim * out_dim)
            .map(|_| rng.uniform(-limit, limit))
            .collect();
        LayerParams {
            weights: Matrix::new(out_dim, in_dim, data).expect("sized by construction"),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Pre-activations `X·Wᵀ + b` for a batch.
    pub fn pre_activation(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let mut z = x.matmul_nt(&self.weights)?;
        z.add_row_broadcast(&self.bias)?;
        Ok(z)
    }

    /// Logistic activations `s(X·Wᵀ + b)` for a batch.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let mut z = self.pre_activation(x)?;
        z.map_inplace(sigmoid);
        Ok(z)
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &LayerParams) -> Result<(), NnError> {
        self.weights.axpy(alpha, &other.weights)?;
        for (b, g) in self.bias.iter_mut().zip(&other.bias) {
            *b += alpha * g;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }

    /// Gradient of a summed batch loss given the pre-activation deltas of this
    /// layer and the inputs it consumed.
    pub(crate) fn gradient(inputs: &Matrix, deltas: &Matrix) -> Result<LayerParams, NnError> {
        // (Xᵀ·Δ)ᵀ keeps the sparse batch on the left of the product
        let weights = inputs.matmul_tn(deltas)?.transpose();
        Ok(LayerParams {
            weights,
            bias: deltas.column_sums(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Class posteriors through a softmax.
    Softmax,
    /// Linear outputs estimating per-class costs.
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHead {
    pub kind: HeadKind,
    pub layer: LayerParams,
}

/// Layer widths: input dimension, hidden widths (at least one), class count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl NetShape {
    pub fn new(input: usize, hidden: Vec<usize>, classes: usize) -> Result<Self, NnError> {
        let shape = NetShape {
            input,
            hidden,
            classes,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input == 0 || self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NnError::InvalidShape(format!(
                "input {} hidden {:?}: need a positive input and at least one positive hidden width",
                self.input, self.hidden
            )));
        }
        if self.classes < 2 {
            return Err(NnError::InvalidShape(format!(
                "{} classes; need at least 2",
                self.classes
            )));
        }
        Ok(())
    }

    /// `(in, out)` of every hidden layer.
    pub fn hidden_layer_dims(&self) -> Vec<(usize, usize)> {
        let mut prev = self.input;
        self.hidden
            .iter()
            .map(|&w| {
                let d = (prev, w);
                prev = w;
                d
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    pub hidden: Vec<LayerParams>,
    pub head: OutputHead,
}

/// Hidden layers of a fresh network, drawn in layer order.
pub fn init_hidden_layers(
    shape: &NetShape,
    scheme: InitScheme,
    rng: &mut CsRng,
) -> Result<Vec<LayerParams>, NnError> {
    shape.validate()?;
    Ok(shape
        .hidden_layer_dims()
        .into_iter()
        .map(|(i, o)| LayerParams::init(i, o, scheme, rng))
        .collect())
}

/// Fresh network: hidden layers first, then the head, from one generator.
pub fn init_net(
    shape: &NetShape,
    head: HeadKind,
    scheme: InitScheme,
    rng: &mut CsRng,
) -> Result<FeedForwardNet, NnError> {
    let hidden = init_hidden_layers(shape, scheme, rng)?;
    let top = *shape.hidden.last().expect("validated non-empty");
    let layer = LayerParams::init(top, shape.classes, scheme, rng);
    Ok(FeedForwardNet {
        hidden,
        head: OutputHead { kind: head, layer },
    })
}

/// Per-layer activations of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenActivations {
    pub layers: Vec<Vector>,
}

/// Targets attached to a batch. Labels train a softmax head with the negative
/// log-likelihood; cost vectors train a regression head with the smooth
/// one-sided loss.
#[derive(Debug, Clone, Copy)]
pub enum Supervision<'a> {
    Labels(&'a [usize]),
    Costs(&'a [CostVector]),
}

impl Supervision<'_> {
    fn name(&self) -> &'static str {
        match self {
            Supervision::Labels(_) => "label",
            Supervision::Costs(_) => "cost-vector",
        }
    }

    fn len(&self) -> usize {
        match self {
            Supervision::Labels(l) => l.len(),
            Supervision::Costs(c) => c.len(),
        }
    }
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hidden: Vec<LayerParams>,
    pub head: LayerParams,
}

impl Gradients {
    pub fn zeros_like(net: &FeedForwardNet) -> Self {
        Gradients {
            hidden: net
                .hidden
                .iter()
                .map(|l| LayerParams::zeros(l.in_dim(), l.out_dim()))
                .collect(),
            head: LayerParams::zeros(net.head.layer.in_dim(), net.head.layer.out_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<(), NnError> {
        for (a, b) in self.hidden.iter_mut().zip(&other.hidden) {
            a.axpy(1.0, b)?;
        }
        self.head.axpy(1.0, &other.head)
    }

    /// Every parameter gradient in layer order: hidden layers then head,
    /// weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(self.hidden.iter().chain(std::iter::once(&self.head)))
    }
}

pub(crate) fn flatten_layers<'a>(layers: impl Iterator<Item = &'a LayerParams>) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(&l.bias);
    }
    out
}

#[derive(Debug, Clone)]
pub struct BackpropOutput {
    /// Summed batch loss at the current parameters.
    pub loss: f64,
    pub grads: Gradients,
}

/// Batched forward record.
#[derive(Debug, Clone)]
pub struct BatchForward {
    /// Output of each hidden layer.
    pub activations: Vec<Matrix>,
    /// Head outputs: logits for softmax heads, cost estimates for regression.
    pub outputs: Matrix,
}

impl FeedForwardNet {
    pub fn input_dim(&self) -> usize {
        self.hidden[0].in_dim()
    }

    pub fn classes(&self) -> usize {
        self.head.layer.out_dim()
    }

    pub fn shape(&self) -> NetShape {
        NetShape {
            input: self.input_dim(),
            hidden: self.hidden.iter().map(|l| l.out_dim()).collect(),
            classes: self.classes(),
        }
    }

    /// Checks that consecutive layer shapes chain.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.hidden.is_empty() {
            return Err(NnError::InvalidShape("no hidden layers".into()));
        }
        let mut prev = self.hidden[0].in_dim();
        for (i, l) in self
            .hidden
            .iter()
            .chain(std::iter::once(&self.head.layer))
            .enumerate()
        {
            if l.in_dim() != prev || l.bias.len() != l.out_dim() {
                return Err(NnError::InvalidShape(format!(
                    "layer {i} is {:?} with bias {}, expected input width {prev}",
                    l.weights.shape(),
                    l.bias.len()
                )));
            }
            prev = l.out_dim();
        }
        self.shape().validate()
    }

    fn check_input(&self, len: usize) -> Result<(), NnError> {
        if len != self.input_dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "forward",
                left: (1, len),
                right: self.hidden[0].weights.shape(),
            }
            .into());
        }
        Ok(())
    }

    fn expect_head(&self, expected: HeadKind) -> Result<(), NnError> {
        if self.head.kind != expected {
            return Err(NnError::WrongHead {
                expected,
                found: self.head.kind,
            });
        }
        Ok(())
    }

    /// `φ(x)` plus the activation of every hidden layer.
    pub fn hidden_forward(&self, x: &[f64]) -> Result<(Vector, HiddenActivations), NnError> {
        self.check_input(x.len())?;
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut a: Vector = x.into();
        for l in &self.hidden {
            a = logistic(&affine(&l.weights, &a, &l.bias)?);
            layers.push(a.clone());
        }
        Ok((a, HiddenActivations { layers }))
    }

    fn head_outputs(&self, x: &[f64]) -> Result<Vector, NnError> {
        let (phi, _) = self.hidden_forward(x)?;
        Ok(affine(&self.head.layer.weights, &phi, &self.head.layer.bias)?)
    }

    /// Class posteriors `P(y = j | x)` of a softmax head.
    pub fn softmax_probs(&self, x: &[f64]) -> Result<Vector, NnError> {
        self.expect_head(HeadKind::Softmax)?;
        Ok(softmax(&self.head_outputs(x)?)?)
    }

    /// Cost estimates `r = W·φ(x) + b` of a regression head.
    pub fn regression_outputs(&self, x: &[f64]) -> Result<Vector, NnError> {
        self.expect_head(HeadKind::Regression)?;
        self.head_outputs(x)
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<BatchForward, NnError> {
        self.check_input(x.cols())?;
        let mut activations: Vec<Matrix> = Vec::with_capacity(self.hidden.len());
        for l in &self.hidden {
            let a = l.encode(activations.last().unwrap_or(x))?;
            activations.push(a);
        }
        let outputs = self
            .head
            .layer
            .pre_activation(activations.last().expect("at least one hidden layer"))?;
        Ok(BatchForward { activations, outputs })
    }

    /// Head outputs for every row of `x`, softmax-normalized for softmax heads.
    pub fn predict_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        let mut out = self.forward_batch(x)?.outputs;
        if self.head.kind == HeadKind::Softmax {
            for r in 0..out.rows() {
                let p = softmax(out.row(r))?;
                out.row_mut(r).copy_from_slice(&p);
            }
        }
        Ok(out)
    }

    /// Loss and exact gradients of the summed batch loss.
    pub fn backprop(&self, x: &Matrix, targets: Supervision<'_>) -> Result<BackpropOutput, NnError> {
        if targets.len() != x.rows() {
            return Err(NnError::BatchSizeMismatch {
                inputs: x.rows(),
                targets: targets.len(),
            });
        }
        match (self.head.kind, targets) {
            (HeadKind::Softmax, Supervision::Labels(_)) | (HeadKind::Regression, Supervision::Costs(_)) => {}
            (head, t) => {
                return Err(NnError::TargetMismatch {
                    head,
                    supervision: t.name(),
                })
            }
        }
        let fwd = self.forward_batch(x)?;
        let (loss, out_delta) = output_deltas(&fwd.outputs, targets)?;
        let (grads, _) = self.backward(x, &fwd.activations, out_delta)?;
        Ok(BackpropOutput { loss, grads })
    }

    /// Propagates output-layer deltas down the stack. Returns the gradients
    /// and the deltas at the first hidden layer's pre-activations.
    pub(crate) fn backward(
        &self,
        x: &Matrix,
        activations: &[Matrix],
        out_delta: Matrix,
    ) -> Result<(Gradients, Matrix), NnError> {
        let top = activations.last().expect("at least one hidden layer");
        let head = LayerParams::gradient(top, &out_delta)?;
        let mut delta = out_delta.matmul(&self.head.layer.weights)?;
        let mut hidden = Vec::with_capacity(self.hidden.len());
        for i in (0..self.hidden.len()).rev() {
            apply_logistic_derivative(&mut delta, &activations[i]);
            let input = if i == 0 { x } else { &activations[i - 1] };
            hidden.push(LayerParams::gradient(input, &delta)?);
            if i > 0 {
                delta = delta.matmul(&self.hidden[i].weights)?;
            }
        }
        hidden.reverse();
        Ok((Gradients { hidden, head }, delta))
    }

    /// Plain gradient step `θ ← θ − lr·g`.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) -> Result<(), NnError> {
        for (l, g) in self.hidden.iter_mut().zip(&grads.hidden) {
            l.axpy(-learning_rate, g)?;
        }
        self.head.layer.axpy(-learning_rate, &grads.head)
    }

    pub fn is_finite(&self) -> bool {
        self.hidden.iter().all(LayerParams::is_finite) && self.head.layer.is_finite()
    }

    /// Every parameter in [`Gradients::flatten`] order.
    pub fn flatten_params(&self) -> Vec<f64> {
        flatten_layers(self.hidden.iter().chain(std::iter::once(&self.head.layer)))
    }

    /// Mutable access to parameter `index` in [`Self::flatten_params`] order.
    pub fn param_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for l in self
            .hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.head.layer))
        {
            let nw = l.weights.as_slice().len();
            if index < nw {
                return Some(&mut l.weights.as_mut_slice()[index]);
            }
            index -= nw;
            if index < l.bias.len() {
                return Some(&mut l.bias[index]);
            }
            index -= l.bias.len();
        }
        None
    }

    /// Summed batch loss without gradients.
    pub fn batch_loss(&self, x: &Matrix, targets: Supervision<'_>) -> Result<f64, NnError> {
        let fwd = self.forward_batch(x)?;
        Ok(output_deltas(&fwd.outputs, targets)?.0)
    }
}

/// `delta ⊙ a ⊙ (1 − a)` in place.
pub(crate) fn apply_logistic_derivative(delta: &mut Matrix, activations: &Matrix) {
    for (d, &a) in delta.as_mut_slice().iter_mut().zip(activations.as_slice()) {
        *d *= a * (1.0 - a);
    }
}

/// Softmax through a log-sum-exp shift.
pub fn softmax(logits: &[f64]) -> Result<Vector, LinalgError> {
    let lse = log_sum_exp(logits)?;
    Ok(logits.iter().map(|&l| (l - lse).exp()).collect::<Vec<_>>().into())
}

/// Summed loss and `∂L/∂outputs` for a batch of head outputs.
pub(crate) fn output_deltas(outputs: &Matrix, targets: Supervision<'_>) -> Result<(f64, Matrix), NnError> {
    let classes = outputs.cols();
    let mut delta = Matrix::zeros(outputs.rows(), classes);
    let mut loss = 0.0;
    match targets {
        Supervision::Labels(labels) => {
            for (n, &y) in labels.iter().enumerate() {
                if y >= classes {
                    return Err(NnError::LabelOutOfRange { label: y, classes });
                }
                let logits = outputs.row(n);
                let lse = log_sum_exp(logits)?;
                loss += lse - logits[y];
                let d = delta.row_mut(n);
                for (dk, &l) in d.iter_mut().zip(logits) {
                    *dk = (l - lse).exp();
                }
                d[y] -= 1.0;
            }
        }
        Supervision::Costs(costs) => {
            for (n, c) in costs.iter().enumerate() {
                if c.len() != classes {
                    return Err(NnError::CostLength {
                        expected: classes,
                        found: c.len(),
                    });
                }
                let r = outputs.row(n);
                let z = c.z_indicator();
                let d = delta.row_mut(n);
                for k in 0..classes {
                    let u = z[k] * (r[k] - c[k]);
                    loss += softplus(u);
                    d[k] = z[k] * sigmoid(u);
                }
            }
        }
    }
    Ok((loss, delta))
}

/// Versioned JSON checkpoint. A full network carries a head; a pre-trained
/// encoder stack does not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub input_dim: usize,
    pub hidden: Vec<LayerParams>,
    pub head: Option<OutputHead>,
}

impl Checkpoint {
    pub fn from_net(net: &FeedForwardNet) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input_dim: net.input_dim(),
            hidden: net.hidden.clone(),
            head: Some(net.head.clone()),
        }
    }

    pub fn from_stack(layers: &[LayerParams]) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            input_dim: layers.first().map_or(0, |l| l.in_dim()),
            hidden: layers.to_vec(),
            head: None,
        }
    }

    pub fn into_net(self) -> Result<FeedForwardNet, NnError> {
        let head = self
            .head
            .ok_or_else(|| NnError::InvalidShape("checkpoint has no output head".into()))?;
        let net = FeedForwardNet {
            hidden: self.hidden,
            head,
        };
        net.validate()?;
        if net.input_dim() != self.input_dim {
            return Err(NnError::InvalidShape(format!(
                "declared input {} but first layer takes {}",
                self.input_dim,
                net.input_dim()
            )));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(NnError::CheckpointVersion {
                format: ck.format,
                version: ck.version,
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Checkpoint::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_shape() -> NetShape {
        NetShape::new(4, vec![3], 2).unwrap()
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let a = init_net(
            &tiny_shape(),
            HeadKind::Softmax,
            InitScheme::default(),
            &mut CsRng::seed_from(4),
        )
        .unwrap();
        let b = init_net(
            &tiny_shape(),
            HeadKind::Softmax,
            InitScheme::default(),
            &mut CsRng::seed_from(4),
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.hidden.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        assert!(a.head.layer.bias.iter().all(|&b| b == 0.0));
        assert_eq!(a.shape(), tiny_shape());
    }

    #[test]
    fn init_respects_fan_bound() {
        let mut rng = CsRng::seed_from(1);
        let layer = LayerParams::init(100, 100, InitScheme::GlorotUniform, &mut rng);
        let limit = (6.0f64 / 200.0).sqrt();
        let max = layer
            .weights
            .as_slice()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= limit);
        // 10^4 uniform draws reach within 0.1% of the edge with overwhelming probability
        assert!(max > 0.999 * limit);
        let u = LayerParams::init(3, 2, InitScheme::Uniform { limit: 0.01 }, &mut rng);
        assert!(u.weights.as_slice().iter().all(|v| v.abs() <= 0.01));
    }

    #[test]
    fn invalid_shapes() {
        assert!(NetShape::new(4, vec![], 2).is_err());
        assert!(NetShape::new(4, vec![3], 1).is_err());
        assert!(NetShape::new(0, vec![3], 2).is_err());
    }

    fn fixed_net(kind: HeadKind) -> FeedForwardNet {
        FeedForwardNet {
            hidden: vec![
                LayerParams::new(
                    Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25]]).unwrap(),
                    vec![0.1, -0.2],
                )
                .unwrap(),
                LayerParams::new(Matrix::from_rows(&[[1.5, -0.5]]).unwrap(), vec![0.3]).unwrap(),
            ],
            head: OutputHead {
                kind,
                layer: LayerParams::new(Matrix::from_rows(&[[2.0], [-1.0]]).unwrap(), vec![0.0, 0.5])
                    .unwrap(),
            },
        }
    }

    #[test]
    fn hidden_forward_examples() {
        let zero = FeedForwardNet {
            hidden: vec![LayerParams::zeros(3, 2)],
            head: OutputHead {
                kind: HeadKind::Softmax,
                layer: LayerParams::zeros(2, 2),
            },
        };
        let (phi, _) = zero.hidden_forward(&[0.3, 0.9, 0.1]).unwrap();
        assert_eq!(phi.as_slice(), &[0.5, 0.5]);

        let ident = FeedForwardNet {
            hidden: vec![LayerParams::new(Matrix::identity(1), vec![0.0]).unwrap()],
            head: OutputHead {
                kind: HeadKind::Regression,
                layer: LayerParams::zeros(1, 2),
            },
        };
        assert_eq!(ident.hidden_forward(&[0.0]).unwrap().0.as_slice(), &[0.5]);

        // scalar re-evaluation of the two-layer net
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        let x = [0.2, 0.7];
        let h1 = [s(0.5 * 0.2 - 1.0 * 0.7 + 0.1), s(2.0 * 0.2 + 0.25 * 0.7 - 0.2)];
        let h2 = s(1.5 * h1[0] - 0.5 * h1[1] + 0.3);
        let net = fixed_net(HeadKind::Regression);
        let (phi, acts) = net.hidden_forward(&x).unwrap();
        assert!((phi[0] - h2).abs() < 1e-15);
        assert!((acts.layers[0][0] - h1[0]).abs() < 1e-15);
        assert!((acts.layers[0][1] - h1[1]).abs() < 1e-15);
        let r = net.regression_outputs(&x).unwrap();
        assert!((r[0] - 2.0 * h2).abs() < 1e-15);
        assert!((r[1] - (-h2 + 0.5)).abs() < 1e-15);
        assert!(net.hidden_forward(&[0.1]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let mut net = fixed_net(HeadKind::Softmax);
        net.head.layer = LayerParams::zeros(1, 3);
        let p = net.softmax_probs(&[0.4, 0.6]).unwrap();
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let p = softmax(&[1f64.ln(), 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let shifted = softmax(&[1f64.ln() + 123.0, 3f64.ln() + 123.0]).unwrap();
        assert!((p[0] - shifted[0]).abs() < 1e-12);
        assert!(matches!(
            net.regression_outputs(&[0.4, 0.6]),
            Err(NnError::WrongHead { .. })
        ));
    }

    #[test]
    fn regression_examples() {
        let mut net = fixed_net(HeadKind::Regression);
        net.head.layer = LayerParams::new(Matrix::zeros(2, 1), vec![1.0, 2.0]).unwrap();
        assert_eq!(
            net.regression_outputs(&[0.9, 0.1]).unwrap().as_slice(),
            &[1.0, 2.0]
        );

        let half = FeedForwardNet {
            hidden: vec![LayerParams::zeros(1, 1)],
            head: OutputHead {
                kind: HeadKind::Regression,
                layer: LayerParams::new(Matrix::from_rows(&[[2.0], [4.0]]).unwrap(), vec![0.0, 0.0]).unwrap(),
            },
        };
        assert_eq!(half.regression_outputs(&[0.3]).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(half.softmax_probs(&[0.3]).is_err());
    }

    #[test]
    fn empty_batch_has_zero_gradients() {
        let net = fixed_net(HeadKind::Softmax);
        let x = Matrix::zeros(0, 2);
        let out = net.backprop(&x, Supervision::Labels(&[])).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn saturated_nll_has_vanishing_head_gradient() {
        let mut net = fixed_net(HeadKind::Softmax);
        net.head.layer = LayerParams::new(Matrix::zeros(2, 1), vec![800.0, -800.0]).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2]]).unwrap();
        let out = net.backprop(&x, Supervision::Labels(&[0])).unwrap();
        assert!(out.grads.head.bias.iter().all(|g| g.abs() < 1e-300));
        assert!(out.loss.abs() < 1e-300);
    }

    #[test]
    fn target_mismatch_is_rejected() {
        let net = fixed_net(HeadKind::Softmax);
        let x = Matrix::from_rows(&[[0.1, 0.2]]).unwrap();
        let c = [CostVector::new(vec![0.0, 1.0]).unwrap()];
        assert!(matches!(
            net.backprop(&x, Supervision::Costs(&c)),
            Err(NnError::TargetMismatch { .. })
        ));
        assert!(matches!(
            net.backprop(&x, Supervision::Labels(&[0, 1])),
            Err(NnError::BatchSizeMismatch { .. })
        ));
        assert!(matches!(
            net.backprop(&x, Supervision::Labels(&[5])),
            Err(NnError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn batch_forward_matches_single_example_path() {
        let net = fixed_net(HeadKind::Softmax);
        let x = Matrix::from_rows(&[[0.2, 0.7], [1.0, 0.0], [0.5, 0.5]]).unwrap();
        let probs = net.predict_batch(&x).unwrap();
        for r in 0..3 {
            let p = net.softmax_probs(x.row(r)).unwrap();
            for k in 0..2 {
                assert!((probs.get(r, k) - p[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn param_indexing_matches_flatten() {
        let mut net = fixed_net(HeadKind::Regression);
        let flat = net.flatten_params();
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(*net.param_mut(i).unwrap(), *v);
        }
        assert!(net.param_mut(flat.len()).is_none());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = init_net(
            &NetShape::new(5, vec![4, 3], 3).unwrap(),
            HeadKind::Regression,
            InitScheme::default(),
            &mut CsRng::seed_from(8),
        )
        .unwrap();
        let json = Checkpoint::from_net(&net).to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap().into_net().unwrap();
        assert_eq!(back, net);

        let stack = Checkpoint::from_stack(&net.hidden);
        assert!(stack.clone().into_net().is_err());
        assert_eq!(Checkpoint::from_json(&stack.to_json().unwrap()).unwrap(), stack);

        let bad = json.replace("\"version\":1", "\"version\":9");
        assert!(matches!(
            Checkpoint::from_json(&bad),
            Err(NnError::CheckpointVersion { version: 9, .. })
        ));
    }
}
