//! Small dense networks: batched forward passes, a recorded tape for
//! reverse-mode gradients, cross-entropy losses and Adam.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CHECKPOINT_VERSION: u32 = 1;
/// Probability clamp used by the cross-entropy losses.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no forward pass recorded")]
    NoTape,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint digest mismatch")]
    DigestMismatch,
}

/// Row-major dense matrix; batches are stored one sample per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::ShapeMismatch(format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NnError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| x * s)
    }

    /// `self * wᵀ + b` where `w` is out × in and `self` is batch × in.
    fn affine(&self, w: &Matrix, b: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, w.rows);
        for i in 0..self.rows {
            let x = self.row(i);
            for j in 0..w.rows {
                let wr = w.row(j);
                let mut acc = b[j];
                for k in 0..self.cols {
                    acc += x[k] * wr[k];
                }
                out.data[i * w.rows + j] = acc;
            }
        }
        out
    }

    pub fn columns(&self, range: std::ops::Range<usize>) -> Matrix {
        let cols = range.len();
        let mut out = Matrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[range.clone()]);
        }
        out
    }

    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix, NnError> {
        let cols = parts.first().map_or(0, |m| m.cols);
        if parts.iter().any(|m| m.cols != cols) {
            return Err(NnError::ShapeMismatch("vstack column counts differ".into()));
        }
        let data: Vec<f64> = parts.iter().flat_map(|m| m.data.iter().copied()).collect();
        Ok(Matrix { rows: data.len() / cols.max(1), cols, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output `a`.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// out × in
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn n_params(&self) -> usize {
        self.weights.data.len() + self.bias.len()
    }
}

#[derive(Debug, Clone)]
struct Tape {
    /// Input to each layer, then the network output.
    activations: Vec<Matrix>,
}

/// Gradients of one backward pass, in the layer layout of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    /// Gradient with respect to the network input (batch × in).
    pub input: Matrix,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Dense]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.iter().map(Dense::n_params).sum());
    for l in layers {
        out.extend_from_slice(&l.weights.data);
        out.extend_from_slice(&l.bias);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
    hidden: Activation,
    output: Activation,
    tape: Option<Tape>,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.layers == other.layers && self.hidden == other.hidden && self.output == other.output
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for l in &mut net.layers {
            let limit = (6.0 / (l.weights.rows + l.weights.cols) as f64).sqrt();
            for w in &mut l.weights.data {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::ShapeMismatch(format!("layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weights: Matrix::zeros(w[1], w[0]), bias: vec![0.0; w[1]] })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), layers, hidden, output, tape: None })
    }

    pub fn from_layers(layers: Vec<Dense>, hidden: Activation, output: Activation) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::ShapeMismatch("no layers".into()));
        }
        let mut sizes = vec![layers[0].weights.cols];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.cols != sizes[i] || l.bias.len() != l.weights.rows || l.weights.data.len() != l.weights.rows * l.weights.cols {
                return Err(NnError::ShapeMismatch(format!("layer {i} does not chain")));
            }
            sizes.push(l.weights.rows);
        }
        Ok(Self { sizes, layers, hidden, output, tape: None })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::ShapeMismatch(format!("{} params for a net with {}", flat.len(), self.n_params())));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.data.len();
            l.weights.data.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.data.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    fn run(&self, input: &Matrix, keep: bool) -> Result<(Matrix, Vec<Matrix>), NnError> {
        if input.cols != self.input_dim() {
            return Err(NnError::ShapeMismatch(format!("input has {} columns, net expects {}", input.cols, self.input_dim())));
        }
        let mut kept = Vec::new();
        let mut x = input.clone();
        for (i, l) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let mut z = x.affine(&l.weights, &l.bias);
            if act != Activation::Linear {
                z.data.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            if keep {
                kept.push(std::mem::replace(&mut x, z));
            } else {
                x = z;
            }
        }
        Ok((x, kept))
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.run(input, false)?.0)
    }

    /// Forward pass that records the tape consumed by [`Mlp::backward`].
    pub fn forward_train(&mut self, input: &Matrix) -> Result<Matrix, NnError> {
        let (out, mut activations) = self.run(input, true)?;
        activations.push(out.clone());
        self.tape = Some(Tape { activations });
        Ok(out)
    }

    /// Reverse pass of the last recorded forward pass; `out_grad` is dL/d(output).
    pub fn backward(&mut self, out_grad: &Matrix) -> Result<Gradients, NnError> {
        let tape = self.tape.take().ok_or(NnError::NoTape)?;
        let (rows, cols) = tape.activations.last().map(|o| (o.rows, o.cols)).unwrap();
        if out_grad.rows != rows || out_grad.cols != cols {
            self.tape = Some(tape);
            return Err(NnError::ShapeMismatch(format!(
                "output gradient {}x{} for output {rows}x{cols}",
                out_grad.rows, out_grad.cols
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = out_grad.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation(i);
            let a_out = &tape.activations[i + 1];
            let x_in = &tape.activations[i];
            if act != Activation::Linear {
                for (d, &a) in delta.data.iter_mut().zip(&a_out.data) {
                    *d *= act.derivative_from_output(a);
                }
            }
            let w = &self.layers[i].weights;
            let mut dw = Matrix::zeros(w.rows, w.cols);
            let mut db = vec![0.0; w.rows];
            let mut dx = Matrix::zeros(x_in.rows, x_in.cols);
            for b in 0..delta.rows {
                let drow = delta.row(b);
                let xrow = x_in.row(b);
                for j in 0..w.rows {
                    let dj = drow[j];
                    if dj == 0.0 {
                        continue;
                    }
                    db[j] += dj;
                    let wr = w.row(j);
                    let dwr = &mut dw.data[j * w.cols..(j + 1) * w.cols];
                    let dxr = &mut dx.data[b * w.cols..(b + 1) * w.cols];
                    for k in 0..w.cols {
                        dwr[k] += dj * xrow[k];
                        dxr[k] += dj * wr[k];
                    }
                }
            }
            grads.push(Dense { weights: dw, bias: db });
            delta = dx;
        }
        grads.reverse();
        Ok(Gradients { layers: grads, input: delta })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            sizes: self.sizes.clone(),
            hidden: self.hidden,
            output: self.output,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer { rows: l.weights.rows, cols: l.weights.cols, weights: l.weights.data.clone(), bias: l.bias.clone() })
                .collect(),
            sha256: params_digest(&self.params()),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {}", ck.format_version)));
        }
        let layers = ck
            .layers
            .iter()
            .map(|l| Ok(Dense { weights: Matrix::from_vec(l.rows, l.cols, l.weights.clone())?, bias: l.bias.clone() }))
            .collect::<Result<Vec<_>, NnError>>()?;
        let net = Self::from_layers(layers, ck.hidden, ck.output)?;
        if net.sizes != ck.sizes {
            return Err(NnError::Checkpoint("layer sizes disagree with the stored shape chain".into()));
        }
        if params_digest(&net.params()) != ck.sha256 {
            return Err(NnError::DigestMismatch);
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, rows = outputs.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// JSON weight checkpoint; `sha256` covers the little-endian bytes of all parameters in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
    pub layers: Vec<CheckpointLayer>,
    pub sha256: String,
}

pub fn params_digest(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn for_net(net: &Mlp, lr: f64) -> Self {
        Self::new(net.n_params(), lr)
    }

    /// Bias-corrected Adam update, in place.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::ShapeMismatch(format!(
                "adam state of {} for {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn step_net(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<(), NnError> {
        let mut p = net.params();
        self.update(&mut p, &grads.flatten())?;
        net.set_params(&p)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `targets` in [0, 1],
/// with per-sample `weights`. Returns the loss and its gradient w.r.t. the logits.
pub fn bce_with_logits(logits: &[f64], targets: &[f64], weights: Option<&[f64]>) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() != targets.len() || weights.is_some_and(|w| w.len() != logits.len()) {
        return Err(NnError::ShapeMismatch("bce inputs differ in length".into()));
    }
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for i in 0..logits.len() {
        let w = weights.map_or(1.0, |w| w[i]);
        let p = sigmoid(logits[i]);
        let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        let y = targets[i];
        loss -= w * (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
        grad.push(w * (p - y) / n);
    }
    Ok((loss / n, grad))
}

/// Mean categorical cross-entropy of row-wise softmax(logits) against class indices.
pub fn cce_with_logits(logits: &Matrix, classes: &[usize], weights: Option<&[f64]>) -> Result<(f64, Matrix), NnError> {
    if logits.rows != classes.len() || weights.is_some_and(|w| w.len() != classes.len()) {
        return Err(NnError::ShapeMismatch("cce inputs differ in length".into()));
    }
    if classes.iter().any(|&c| c >= logits.cols) {
        return Err(NnError::ShapeMismatch("class index out of range".into()));
    }
    let n = logits.rows.max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    for i in 0..logits.rows {
        let w = weights.map_or(1.0, |w| w[i]);
        let p = softmax(logits.row(i));
        loss -= w * p[classes[i]].clamp(PROB_EPS, 1.0 - PROB_EPS).ln();
        let g = grad.row_mut(i);
        for (k, pk) in p.iter().enumerate() {
            g[k] = w * (pk - if k == classes[i] { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], Activation::Tanh, Activation::Linear).unwrap();
        let y = net.forward(&Matrix::from_rows(&[vec![1.0, -2.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(y.data, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let layer = Dense { weights: Matrix::identity(3), bias: vec![0.0; 3] };
        let net = Mlp::from_layers(vec![layer], Activation::Tanh, Activation::Linear).unwrap();
        let x = Matrix::from_rows(&[vec![0.5, -1.5, 2.0], vec![7.0, 0.0, -3.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap(), x);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = Mlp::zeros(&[3, 2], Activation::Tanh, Activation::Linear).unwrap();
        assert!(matches!(net.forward(&Matrix::zeros(1, 4)), Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn backward_needs_a_tape_and_consumes_it() {
        let mut net = Mlp::zeros(&[2, 2], Activation::Tanh, Activation::Linear).unwrap();
        assert_eq!(net.backward(&Matrix::zeros(1, 2)).unwrap_err(), NnError::NoTape);
        net.forward_train(&Matrix::zeros(1, 2)).unwrap();
        net.backward(&Matrix::zeros(1, 2)).unwrap();
        assert_eq!(net.backward(&Matrix::zeros(1, 2)).unwrap_err(), NnError::NoTape);
    }

    #[test]
    fn uniform_softmax_loss_is_log_k() {
        let logits = Matrix::from_rows(&[vec![0.3; 5]]).unwrap();
        let (loss, _) = cce_with_logits(&logits, &[2], None).unwrap();
        assert!((loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_have_tiny_loss() {
        let (l, _) = bce_with_logits(&[40.0, -40.0], &[1.0, 0.0], None).unwrap();
        assert!(l <= 1e-6);
        let (l, _) = cce_with_logits(&Matrix::from_rows(&[vec![-30.0, 30.0]]).unwrap(), &[1], None).unwrap();
        assert!(l <= 1e-6);
    }

    #[test]
    fn adam_with_zero_gradients_leaves_params() {
        let mut adam = AdamState::new(3, 1e-3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..5 {
            adam.update(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(matches!(adam.update(&mut p, &[0.0; 2]), Err(NnError::ShapeMismatch(_))));
    }
}
