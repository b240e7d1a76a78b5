//! Shallow regression MLP: input → h1 → h2 → 1, ReLU hidden activations,
//! trained full-batch with Adam on mean squared error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    fn grad_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: [usize; 2],
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: [128, 64],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Weights are stored input-major (`fan_in × fan_out`) so a layer is `X·W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub activation: Activation,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MlpFit {
    pub model: MlpModel,
    /// Training MSE before each epoch's update, plus the final value.
    pub loss_trace: Vec<f64>,
}

impl MlpModel {
    /// Seeded uniform fan-in initialization, U(−1/√fan_in, 1/√fan_in) for
    /// every weight and bias, drawn layer by layer (weights row-major, then
    /// biases).
    pub fn init(input: usize, hidden: [usize; 2], activation: Activation, seed: u64) -> Self {
        let sizes = [input, hidden[0], hidden[1], 1];
        let mut stream = rng::stream(seed);
        let mut weights = Vec::with_capacity(3);
        let mut biases = Vec::with_capacity(3);
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = || (2.0 * rng::unit_f64(&mut stream) - 1.0) * bound;
            let w_vals: Vec<f64> = (0..fan_in * fan_out).map(|_| draw()).collect();
            let b_vals: Vec<f64> = (0..fan_out).map(|_| draw()).collect();
            weights.push(DMatrix::from_row_slice(fan_in, fan_out, &w_vals));
            biases.push(DVector::from_vec(b_vals));
        }
        MlpModel { weights, biases, activation, seed }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].nrows()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// All parameters flattened: for each layer, weights (column-major)
    /// then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let n = w.len();
            w.as_mut_slice().copy_from_slice(&params[at..at + n]);
            at += n;
            let n = b.len();
            b.as_mut_slice().copy_from_slice(&params[at..at + n]);
            at += n;
        }
    }

    /// Activations of every layer, input first, output last (N×1).
    fn forward(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts.last().unwrap() * w;
            for mut row in z.row_iter_mut() {
                row += b.transpose();
            }
            if i < last {
                let act = self.activation;
                z.apply(|v| *v = act.apply(*v));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error on (x, y) and its gradient in [`parameters`] order.
    ///
    /// [`parameters`]: MlpModel::parameters
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &[f64]) -> (f64, Vec<f64>) {
        let n = x.nrows() as f64;
        let acts = self.forward(x);
        let out = acts.last().unwrap();
        let resid = DMatrix::from_fn(out.nrows(), 1, |i, _| out[(i, 0)] - y[i]);
        let loss = resid.norm_squared() / n;

        let layers = self.weights.len();
        let mut grads_w = vec![DMatrix::zeros(0, 0); layers];
        let mut grads_b = vec![DVector::zeros(0); layers];
        let mut delta = resid * (2.0 / n);
        for l in (0..layers).rev() {
            grads_w[l] = acts[l].tr_mul(&delta);
            grads_b[l] = delta.row_sum().transpose();
            if l > 0 {
                let mut back = &delta * self.weights[l].transpose();
                let act = self.activation;
                back.zip_apply(&acts[l], |g, a| *g *= act.grad_from_output(a));
                delta = back;
            }
        }
        let mut flat = Vec::with_capacity(self.parameter_count());
        for (w, b) in grads_w.iter().zip(&grads_b) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        (loss, flat)
    }
}

pub fn predict_mlp(m: &MlpModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != m.input_dim() {
        return Err(Error::Dimension { context: "mlp features", expected: m.input_dim(), actual: x.ncols() });
    }
    let out = m.forward(x).pop().unwrap();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mlp output"));
    }
    Ok(out.iter().copied().collect())
}

pub fn fit_mlp(x: &DMatrix<f64>, y: &[f64], seed: u64, cfg: &MlpConfig) -> Result<MlpFit> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { context: "mlp training rows", expected: x.nrows(), actual: y.len() });
    }
    if y.is_empty() {
        return Err(Error::Degenerate("mlp needs at least one training row".into()));
    }
    if cfg.hidden.contains(&0) || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("mlp hidden sizes must be ≥ 1 and learning rate > 0".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mlp training data"));
    }
    let mut model = MlpModel::init(x.ncols(), cfg.hidden, cfg.activation, seed);
    let mut params = model.parameters();
    let mut m1 = vec![0.0; params.len()];
    let mut m2 = vec![0.0; params.len()];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let (mut b1t, mut b2t) = (1.0f64, 1.0f64);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = model.loss_and_gradient(x, y);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(loss);
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for i in 0..params.len() {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mhat = m1[i] / (1.0 - b1t);
            let vhat = m2[i] / (1.0 - b2t);
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
        model.set_parameters(&params);
    }
    let (loss, _) = model.loss_and_gradient(x, y);
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    trace.push(loss);
    Ok(MlpFit { model, loss_trace: trace })
}
