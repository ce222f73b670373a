//! Differentiable building blocks with hand-written backward passes.
//!
//! Every `*_cached` forward returns the activations needed by the matching
//! `backward`, so one module can appear several times in a computation graph
//! (caches are per-invocation, gradients accumulate into `Parameter::grad`).

use rand::Rng;

use super::matrix::{dot, l2_norm, Matrix};
use crate::error::{Error, Result};

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that exposes its parameters in a stable order.
pub trait ParamModel {
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// 64-bit seed; equal seeds produce bit-identical random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Derive an independent stream for a named purpose.
    pub fn derive(&self, tag: &str) -> RngSeed {
        // FNV-1a over the tag, then splitmix finalizer.
        let mut h: u64 = 0xcbf29ce484222325;
        for b in tag.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x100000001b3);
        }
        let mut z = self.0 ^ h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        RngSeed(z ^ (z >> 31))
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise x·σ(x).
pub fn silu(x: &Matrix) -> Matrix {
    x.map(|v| v * sigmoid(v))
}

/// Gradient of silu: upstream · (σ(x) + x·σ(x)·(1−σ(x))).
pub fn silu_backward(x: &Matrix, upstream: &Matrix) -> Matrix {
    x.zip_map(upstream, |v, u| {
        let s = sigmoid(v);
        u * (s + v * s * (1.0 - s))
    })
}

/// Glorot-uniform weight matrix in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = rng.random_range(-bound..=bound);
    }
    m
}

/// Affine map y = xW + b with W of shape in×out.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

#[derive(Debug)]
pub struct LinearCache {
    input: Matrix,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Parameter::new(format!("{name}.w"), glorot_uniform(in_dim, out_dim, rng)),
            bias: Parameter::new(format!("{name}.b"), Matrix::zeros(1, out_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::dim("linear", self.in_dim(), x.cols()));
        }
        let mut y = x.matmul(&self.weight.value);
        for i in 0..y.rows() {
            let row = y.row_mut(i);
            for (v, &b) in row.iter_mut().zip(self.bias.value.data()) {
                *v += b;
            }
        }
        Ok(y)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, LinearCache)> {
        let y = self.forward(x)?;
        Ok((y, LinearCache { input: x.clone() }))
    }

    /// dW = xᵀ·upstream, db = column-sum(upstream), returns dx = upstream·Wᵀ.
    pub fn backward(&mut self, cache: &LinearCache, upstream: &Matrix) -> Matrix {
        let dw = cache.input.matmul_at_b(upstream);
        self.weight.grad.add_assign(&dw);
        let db = upstream.col_sums();
        self.bias.grad.add_assign(&db);
        upstream.matmul_a_bt(&self.weight.value)
    }

    /// Input gradient only; parameters stay frozen.
    pub fn backward_input(&self, upstream: &Matrix) -> Matrix {
        upstream.matmul_a_bt(&self.weight.value)
    }
}

/// Per-row standardization followed by a learned affine map.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub eps: f64,
}

#[derive(Debug)]
pub struct LayerNormCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gamma = Matrix::zeros(1, dim);
        gamma.fill(1.0);
        LayerNorm {
            gamma: Parameter::new(format!("{name}.g"), gamma),
            beta: Parameter::new(format!("{name}.b"), Matrix::zeros(1, dim)),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn dim(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, LayerNormCache)> {
        let d = self.dim();
        if x.cols() != d {
            return Err(Error::dim("layer_norm", d, x.cols()));
        }
        let mut x_hat = Matrix::zeros(x.rows(), d);
        let mut inv_std = Vec::with_capacity(x.rows());
        let mut y = Matrix::zeros(x.rows(), d);
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std.push(istd);
            let xh = x_hat.row_mut(i);
            let yr = y.row_mut(i);
            for j in 0..d {
                let h = (row[j] - mean) * istd;
                xh[j] = h;
                yr[j] = gamma[j] * h + beta[j];
            }
        }
        Ok((y, LayerNormCache { x_hat, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache, upstream: &Matrix) -> Matrix {
        let d = self.dim();
        let (dx, dgamma, dbeta) = self.backward_parts(cache, upstream);
        for j in 0..d {
            self.gamma.grad.data_mut()[j] += dgamma[j];
            self.beta.grad.data_mut()[j] += dbeta[j];
        }
        dx
    }

    /// Input gradient only; γ and β stay frozen.
    pub fn backward_input(&self, cache: &LayerNormCache, upstream: &Matrix) -> Matrix {
        self.backward_parts(cache, upstream).0
    }

    fn backward_parts(
        &self,
        cache: &LayerNormCache,
        upstream: &Matrix,
    ) -> (Matrix, Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let gamma = self.gamma.value.data();
        let mut dx = Matrix::zeros(upstream.rows(), d);
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        for i in 0..upstream.rows() {
            let up = upstream.row(i);
            let xh = cache.x_hat.row(i);
            let istd = cache.inv_std[i];
            let mut g_mean = 0.0;
            let mut gx_mean = 0.0;
            for j in 0..d {
                let g = up[j] * gamma[j];
                g_mean += g;
                gx_mean += g * xh[j];
                dgamma[j] += up[j] * xh[j];
                dbeta[j] += up[j];
            }
            g_mean /= d as f64;
            gx_mean /= d as f64;
            let out = dx.row_mut(i);
            for j in 0..d {
                let g = up[j] * gamma[j];
                out[j] = istd * (g - g_mean - xh[j] * gx_mean);
            }
        }
        (dx, dgamma, dbeta)
    }
}

/// One step of a feed-forward stack.
#[derive(Debug, Clone)]
pub enum Layer {
    Linear(Linear),
    Norm(LayerNorm),
    Silu,
}

#[derive(Debug)]
pub enum LayerCache {
    Linear(LinearCache),
    Norm(LayerNormCache),
    Silu(Matrix),
}

/// Plain MLP: the unit used for adapters and discriminators.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug)]
pub struct MlpCache {
    per_layer: Vec<LayerCache>,
}

impl Mlp {
    /// `hidden` blocks of linear → layer-norm → SiLU, then a final linear.
    /// With `hidden == 0` this is a single linear map.
    pub fn feedforward(
        name: &str,
        in_dim: usize,
        width: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::new();
        let mut cur = in_dim;
        for l in 0..hidden {
            layers.push(Layer::Linear(Linear::new(
                &format!("{name}.fc{l}"),
                cur,
                width,
                rng,
            )));
            layers.push(Layer::Norm(LayerNorm::new(&format!("{name}.ln{l}"), width)));
            layers.push(Layer::Silu);
            cur = width;
        }
        layers.push(Layer::Linear(Linear::new(
            &format!("{name}.out"),
            cur,
            out_dim,
            rng,
        )));
        Mlp {
            layers,
            in_dim,
            out_dim,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Linear(l) => l.forward(&cur)?,
                Layer::Norm(n) => n.forward(&cur)?,
                Layer::Silu => silu(&cur),
            };
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut cur = x.clone();
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => {
                    let (y, c) = l.forward_cached(&cur)?;
                    per_layer.push(LayerCache::Linear(c));
                    cur = y;
                }
                Layer::Norm(n) => {
                    let (y, c) = n.forward_cached(&cur)?;
                    per_layer.push(LayerCache::Norm(c));
                    cur = y;
                }
                Layer::Silu => {
                    per_layer.push(LayerCache::Silu(cur.clone()));
                    cur = silu(&cur);
                }
            }
        }
        Ok((cur, MlpCache { per_layer }))
    }

    pub fn backward(&mut self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        let mut up = upstream.clone();
        for (layer, lc) in self.layers.iter_mut().zip(&cache.per_layer).rev() {
            up = match (layer, lc) {
                (Layer::Linear(l), LayerCache::Linear(c)) => l.backward(c, &up),
                (Layer::Norm(n), LayerCache::Norm(c)) => n.backward(c, &up),
                (Layer::Silu, LayerCache::Silu(x)) => silu_backward(x, &up),
                _ => unreachable!("cache does not match layer stack"),
            };
        }
        up
    }

    /// Backward pass that leaves every parameter untouched.
    pub fn backward_input(&self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        let mut up = upstream.clone();
        for (layer, lc) in self.layers.iter().zip(&cache.per_layer).rev() {
            up = match (layer, lc) {
                (Layer::Linear(l), LayerCache::Linear(_)) => l.backward_input(&up),
                (Layer::Norm(n), LayerCache::Norm(c)) => n.backward_input(c, &up),
                (Layer::Silu, LayerCache::Silu(x)) => silu_backward(x, &up),
                _ => unreachable!("cache does not match layer stack"),
            };
        }
        up
    }
}

impl ParamModel for Mlp {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(&l.weight);
                    out.push(&l.bias);
                }
                Layer::Norm(n) => {
                    out.push(&n.gamma);
                    out.push(&n.beta);
                }
                Layer::Silu => {}
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => {
                    out.push(&mut l.weight);
                    out.push(&mut l.bias);
                }
                Layer::Norm(n) => {
                    out.push(&mut n.gamma);
                    out.push(&mut n.beta);
                }
                Layer::Silu => {}
            }
        }
        out
    }
}

/// x + MLP(x), input and output widths equal.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub branch: Mlp,
}

impl ResidualBlock {
    pub fn new(name: &str, width: usize, rng: &mut impl Rng) -> Self {
        ResidualBlock {
            branch: Mlp::feedforward(name, width, width, 1, width, rng),
        }
    }

    pub fn width(&self) -> usize {
        self.branch.in_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width() {
            return Err(Error::dim("residual_block", self.width(), x.cols()));
        }
        Ok(x.add(&self.branch.forward(x)?))
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.width() {
            return Err(Error::dim("residual_block", self.width(), x.cols()));
        }
        let (y, cache) = self.branch.forward_cached(x)?;
        Ok((x.add(&y), cache))
    }

    /// Skip path plus branch gradient.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        let mut dx = self.branch.backward(cache, upstream);
        dx.add_assign(upstream);
        dx
    }

    pub fn backward_input(&self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        let mut dx = self.branch.backward_input(cache, upstream);
        dx.add_assign(upstream);
        dx
    }
}

impl ParamModel for ResidualBlock {
    fn params(&self) -> Vec<&Parameter> {
        self.branch.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.branch.params_mut()
    }
}

/// Row-wise L2 normalization with gradient. Rows with norm below 1e-12 pass
/// through unchanged.
#[derive(Debug)]
pub struct RowNormCache {
    normalized: Matrix,
    norms: Vec<f64>,
}

pub const ROW_NORM_EPS: f64 = 1e-12;

pub fn normalize_rows_cached(x: &Matrix) -> (Matrix, RowNormCache) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let norm = l2_norm(x.row(i));
        norms.push(norm);
        if norm >= ROW_NORM_EPS {
            for v in out.row_mut(i) {
                *v /= norm;
            }
        }
    }
    (out.clone(), RowNormCache { normalized: out, norms })
}

pub fn normalize_rows_backward(cache: &RowNormCache, upstream: &Matrix) -> Matrix {
    let mut dx = Matrix::zeros(upstream.rows(), upstream.cols());
    for i in 0..upstream.rows() {
        let up = upstream.row(i);
        let norm = cache.norms[i];
        let out = dx.row_mut(i);
        if norm < ROW_NORM_EPS {
            out.copy_from_slice(up);
            continue;
        }
        let y = cache.normalized.row(i);
        let proj = dot(up, y);
        for j in 0..up.len() {
            out[j] = (up[j] - y[j] * proj) / norm;
        }
    }
    dx
}
