//! Value-function surrogate `V̂(x; θ)`: a fully connected sigmoid network
//! with an affine scalar output, exact input gradients, and exact parameter
//! gradients of both the value and the input gradient.

mod checkpoint;
mod kernel;

pub use checkpoint::Checkpoint;
pub use kernel::sigmoid;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::Matrix;

/// Points per work unit in batched evaluation. Reductions always run over
/// these fixed chunks in index order, so results do not depend on the
/// number of worker threads.
pub const CHUNK_ROWS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!(
                "architecture needs positive widths, got input {input_dim}, hidden {hidden_widths:?}"
            )));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
        })
    }

    /// Three hidden layers of `width`.
    pub fn three_hidden(input_dim: usize, width: usize) -> Result<Self> {
        Self::new(input_dim, vec![width; 3])
    }

    pub fn layout(&self) -> Layout {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_widths);
        dims.push(1);
        let mut offsets = Vec::with_capacity(dims.len() - 1);
        let mut at = 0;
        for l in 0..dims.len() - 1 {
            let w = at;
            at += dims[l] * dims[l + 1];
            offsets.push((w, at));
            at += dims[l + 1];
        }
        Layout {
            dims,
            offsets,
            len: at,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().len
    }
}

/// Flat indexing of θ: for each layer in order, its weight matrix
/// (fan_out × fan_in, row-major) followed by its bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    dims: Vec<usize>,
    offsets: Vec<(usize, usize)>,
    len: usize,
}

impl Layout {
    /// Layer widths including input and the scalar output.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// `(weight_offset, bias_offset)` of layer `l`.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        self.offsets[l]
    }

    pub fn num_layers(&self) -> usize {
        self.offsets.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Network parameters θ in a single contiguous vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    arch: Architecture,
    layout: Layout,
    theta: Vec<f64>,
}

impl NetParams {
    pub fn zeros(arch: Architecture) -> Self {
        let layout = arch.layout();
        let theta = vec![0.0; layout.len];
        Self { arch, layout, theta }
    }

    pub fn from_flat(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        let layout = arch.layout();
        check_len("parameter vector", layout.len, theta.len())?;
        Ok(Self { arch, layout, theta })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    /// Weight matrix of layer `l`, row-major `fan_out × fan_in`.
    pub fn weights(&self, l: usize) -> &[f64] {
        let (w, b) = self.layout.offsets[l];
        &self.theta[w..b]
    }

    pub fn weights_mut(&mut self, l: usize) -> &mut [f64] {
        let (w, b) = self.layout.offsets[l];
        &mut self.theta[w..b]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (_, b) = self.layout.offsets[l];
        &self.theta[b..b + self.layout.dims[l + 1]]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (_, b) = self.layout.offsets[l];
        let n = self.layout.dims[l + 1];
        &mut self.theta[b..b + n]
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// Glorot-uniform weights on `±√(6/(fan_in+fan_out))`, zero biases.
pub fn init_xavier(arch: &Architecture, seed: u64) -> NetParams {
    let mut params = NetParams::zeros(arch.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = params.layout.dims.clone();
    for l in 0..params.layout.num_layers() {
        let bound = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in params.weights_mut(l) {
            *w = dist.sample(&mut rng);
        }
    }
    params
}

fn check_point(params: &NetParams, x: &[f64]) -> Result<()> {
    check_len("network input", params.input_dim(), x.len())
}

/// `V̂(x; θ)`.
pub fn forward(params: &NetParams, x: &[f64]) -> Result<f64> {
    check_point(params, x)?;
    Ok(kernel::forward(params, x).values[0])
}

/// `∇ₓV̂(x; θ)`.
pub fn grad_x(params: &NetParams, x: &[f64]) -> Result<Vec<f64>> {
    check_point(params, x)?;
    let fwd = kernel::forward(params, x);
    Ok(kernel::input_gradient(params, &fwd).grads)
}

/// `∂/∂θ [w_v·V̂(x;θ) + w_gᵀ∇ₓV̂(x;θ)]` as a flat vector.
pub fn pullback_params(params: &NetParams, x: &[f64], w_v: f64, w_g: &[f64]) -> Result<Vec<f64>> {
    check_point(params, x)?;
    check_len("gradient cotangent", params.input_dim(), w_g.len())?;
    let fwd = kernel::forward(params, x);
    let adj = kernel::input_gradient(params, &fwd);
    let mut grad = vec![0.0; params.len()];
    kernel::pullback(params, &fwd, &adj, &[w_v], w_g, &mut grad);
    Ok(grad)
}

/// Values and input gradients at every row of `xs` (row-major, n columns).
pub fn evaluate_batch(params: &NetParams, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = params.input_dim();
    if xs.len() % n != 0 {
        return Err(Error::Dimension {
            what: "batch of network inputs",
            expected: n * (xs.len() / n + 1),
            got: xs.len(),
        });
    }
    let parts: Vec<(Vec<f64>, Vec<f64>)> = xs
        .par_chunks(CHUNK_ROWS * n)
        .map(|chunk| {
            let fwd = kernel::forward(params, chunk);
            let g = kernel::input_gradient(params, &fwd).grads;
            (fwd.values, g)
        })
        .collect();
    let mut values = Vec::with_capacity(xs.len() / n);
    let mut grads = Vec::with_capacity(xs.len());
    for (v, g) in parts {
        values.extend(v);
        grads.extend(g);
    }
    Ok((values, grads))
}

/// Per-chunk cotangent rule for [`fused_value_and_pullback`]: given the
/// index of the first row, the chunk's values and input gradients, fill
/// `w_v` and `w_g` and return the chunk's contribution to the loss.
pub trait CotangentRule: Sync {
    fn cotangents(&self, first_row: usize, values: &[f64], grads: &[f64], w_v: &mut [f64], w_g: &mut [f64]) -> f64;
}

impl<F> CotangentRule for F
where
    F: Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]) -> f64 + Sync,
{
    fn cotangents(&self, first_row: usize, values: &[f64], grads: &[f64], w_v: &mut [f64], w_g: &mut [f64]) -> f64 {
        self(first_row, values, grads, w_v, w_g)
    }
}

/// Evaluates the network on `xs`, lets `rule` turn values/gradients into a
/// loss contribution and cotangents, and returns `(Σ loss, Σ pullback)`.
/// Chunks are reduced in index order.
pub fn fused_value_and_pullback(params: &NetParams, xs: &[f64], rule: &dyn CotangentRule) -> (f64, Vec<f64>) {
    let n = params.input_dim();
    let parts: Vec<(f64, Vec<f64>)> = xs
        .par_chunks(CHUNK_ROWS * n)
        .enumerate()
        .map(|(ci, chunk)| {
            let rows = chunk.len() / n;
            let fwd = kernel::forward(params, chunk);
            let adj = kernel::input_gradient(params, &fwd);
            let mut w_v = vec![0.0; rows];
            let mut w_g = vec![0.0; rows * n];
            let loss = rule.cotangents(ci * CHUNK_ROWS, &fwd.values, &adj.grads, &mut w_v, &mut w_g);
            let mut grad = vec![0.0; params.len()];
            kernel::pullback(params, &fwd, &adj, &w_v, &w_g, &mut grad);
            (loss, grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    (total, grad)
}

/// Anything that provides values and gradients of a scalar function of the
/// state: a trained network or an analytic reference.
pub trait ValueModel: Sync {
    fn input_dim(&self) -> usize;

    /// Values and gradients at the rows of `xs`.
    fn eval_batch(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_len("model input", self.input_dim(), x.len())?;
        Ok(self.eval_batch(x)?.0[0])
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("model input", self.input_dim(), x.len())?;
        Ok(self.eval_batch(x)?.1)
    }
}

impl ValueModel for NetParams {
    fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    fn eval_batch(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        evaluate_batch(self, xs)
    }
}

/// `V(x) = ½xᵀPx` with symmetric `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValue {
    p: Matrix,
}

impl QuadraticValue {
    pub fn new(p: Matrix) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::InvalidConfig("quadratic model needs a square matrix".into()));
        }
        Ok(Self { p: p.symmetrize() })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }
}

impl ValueModel for QuadraticValue {
    fn input_dim(&self) -> usize {
        self.p.rows()
    }

    fn eval_batch(&self, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.p.rows();
        if xs.len() % n != 0 {
            return Err(Error::Parse("batch length is not a multiple of the input dimension".into()));
        }
        let mut values = Vec::with_capacity(xs.len() / n);
        let mut grads = Vec::with_capacity(xs.len());
        for x in xs.chunks_exact(n) {
            let px = self.p.matvec(x);
            values.push(0.5 * x.iter().zip(&px).map(|(a, b)| a * b).sum::<f64>());
            grads.extend(px);
        }
        Ok((values, grads))
    }
}
