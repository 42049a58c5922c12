use serde::{Deserialize, Serialize};

use super::SeededRng;
use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Parameters of a fully connected network.
///
/// All weights and biases live in one flat buffer, layer after layer: the
/// weight matrix of layer `l` (shape `layer_sizes[l+1] × layer_sizes[l]`,
/// row-major) followed by its bias vector. Gradients and optimizer moments
/// use the same flat layout, so they can be handled as plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Reusable activation buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(layer_sizes: &[usize]) -> Self {
        let widest = layer_sizes.iter().copied().max().unwrap_or(0);
        Self {
            acts: layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; widest],
            delta_prev: vec![0.0; widest],
        }
    }
}

fn layout(layer_sizes: &[usize]) -> Result<(Vec<usize>, usize)> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidArgument(
            "an MLP needs at least an input and an output size".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    let mut offsets = Vec::with_capacity(layer_sizes.len() - 1);
    let mut total = 0;
    for w in layer_sizes.windows(2) {
        offsets.push(total);
        total += w[1] * w[0] + w[1];
    }
    Ok((offsets, total))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl MlpParams {
    /// Network with every weight and bias set to zero. Hidden layers use tanh,
    /// the output layer is linear.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        let (offsets, total) = layout(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![0.0; total],
            offsets,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        })
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for the
    /// weights and biases of every layer.
    pub fn init(layer_sizes: &[usize], rng: &mut SeededRng) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.layer_sizes[l] as f64).sqrt();
            let (start, end) = net.layer_range(l);
            for p in &mut net.params[start..end] {
                *p = rng.uniform(-bound, bound);
            }
        }
        Ok(net)
    }

    /// Build from explicit per-layer row-major weights and biases.
    pub fn from_layers(
        layer_sizes: &[usize],
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        let mut net = Self::zeros(layer_sizes)?;
        check_dim("weight layers", net.num_layers(), weights.len())?;
        check_dim("bias layers", net.num_layers(), biases.len())?;
        for l in 0..net.num_layers() {
            let (n_in, n_out) = (layer_sizes[l], layer_sizes[l + 1]);
            check_dim("weight matrix entries", n_in * n_out, weights[l].len())?;
            check_dim("bias entries", n_out, biases[l].len())?;
            let off = net.offsets[l];
            net.params[off..off + n_in * n_out].copy_from_slice(&weights[l]);
            net.params[off + n_in * n_out..off + n_in * n_out + n_out].copy_from_slice(&biases[l]);
        }
        if !net.is_finite() {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    fn layer_range(&self, l: usize) -> (usize, usize) {
        let n = self.layer_sizes[l + 1] * self.layer_sizes[l] + self.layer_sizes[l + 1];
        (self.offsets[l], self.offsets[l] + n)
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Row-major weight matrix of layer `l`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let off = self.offsets[l];
        &self.params[off..off + self.layer_sizes[l] * self.layer_sizes[l + 1]]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        let (start, end) = self.layer_range(l);
        &self.params[start + self.layer_sizes[l] * self.layer_sizes[l + 1]..end]
    }

    /// Flat view of all parameters in layout order.
    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    /// Mutable flat view. Callers are responsible for keeping entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(&self.layer_sizes)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        Ok(self.forward_with(input, &mut ws)?.to_vec())
    }

    /// Forward pass reusing `ws`; the returned slice borrows the workspace.
    pub fn forward_with<'w>(&self, input: &[f64], ws: &'w mut Workspace) -> Result<&'w [f64]> {
        check_dim("network input", self.input_dim(), input.len())?;
        check_dim("workspace layers", self.layer_sizes.len(), ws.acts.len())?;
        self.propagate(input, ws);
        Ok(ws.acts.last().expect("output layer"))
    }

    fn propagate(&self, input: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(input);
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = self.weights(l);
            let b = self.biases(l);
            let act = self.activation(l);
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut next[0];
            for j in 0..n_out {
                y[j] = act.apply(b[j] + dot(&w[j * n_in..(j + 1) * n_in], x));
            }
        }
    }

    /// Gradient of the batch mean squared error
    /// `(1/N) Σ_i ‖f(x_i) - y_i‖²` with respect to every parameter, together
    /// with the loss itself. The gradient uses the flat parameter layout.
    pub fn grad<I, T>(&self, inputs: &[I], targets: &[T]) -> Result<(Vec<f64>, f64)>
    where
        I: AsRef<[f64]>,
        T: AsRef<[f64]>,
    {
        let mut grads = vec![0.0; self.num_params()];
        let mut ws = self.workspace();
        let loss = self.accumulate_grad(inputs, targets, &mut grads, &mut ws)?;
        Ok((grads, loss))
    }

    /// Like [`MlpParams::grad`] but writes into a caller-owned buffer, which is
    /// overwritten.
    pub fn accumulate_grad<I, T>(
        &self,
        inputs: &[I],
        targets: &[T],
        grads: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64>
    where
        I: AsRef<[f64]>,
        T: AsRef<[f64]>,
    {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        check_dim("batch targets", inputs.len(), targets.len())?;
        check_dim("gradient buffer", self.num_params(), grads.len())?;
        for (x, y) in inputs.iter().zip(targets) {
            check_dim("network input", self.input_dim(), x.as_ref().len())?;
            check_dim("regression target", self.output_dim(), y.as_ref().len())?;
        }
        grads.iter_mut().for_each(|g| *g = 0.0);

        let n = inputs.len() as f64;
        let last = self.num_layers() - 1;
        let mut loss = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            self.propagate(x.as_ref(), ws);
            let out = &ws.acts[last + 1];
            let out_act = self.activation(last);
            for (j, (&o, &t)) in out.iter().zip(y.as_ref()).enumerate() {
                let diff = o - t;
                loss += diff * diff;
                ws.delta[j] = 2.0 * diff / n * out_act.derivative_from_output(o);
            }
            for l in (0..=last).rev() {
                let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
                let off = self.offsets[l];
                let a_in = &ws.acts[l];
                {
                    let (gw, gb) = grads[off..off + n_out * n_in + n_out].split_at_mut(n_out * n_in);
                    for j in 0..n_out {
                        let d = ws.delta[j];
                        axpy(d, a_in, &mut gw[j * n_in..(j + 1) * n_in]);
                        gb[j] += d;
                    }
                }
                if l > 0 {
                    let w = &self.params[off..off + n_out * n_in];
                    let dp = &mut ws.delta_prev[..n_in];
                    dp.iter_mut().for_each(|v| *v = 0.0);
                    for j in 0..n_out {
                        axpy(ws.delta[j], &w[j * n_in..(j + 1) * n_in], dp);
                    }
                    let act = self.activation(l - 1);
                    for (i, v) in dp.iter_mut().enumerate() {
                        *v *= act.derivative_from_output(a_in[i]);
                    }
                    std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
                }
            }
        }
        Ok(loss / n)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            layer_sizes: self.layer_sizes.clone(),
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
            weights: (0..self.num_layers()).map(|l| self.weights(l).to_vec()).collect(),
            biases: (0..self.num_layers()).map(|l| self.biases(l).to_vec()).collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let mut net = Self::from_layers(&ck.layer_sizes, &ck.weights, &ck.biases)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        net.hidden_activation = ck.hidden_activation;
        net.output_activation = ck.output_activation;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ck)
    }
}

/// On-disk form of [`MlpParams`]: per-layer row-major weights and biases plus
/// the activation names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}
