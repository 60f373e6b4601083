//! Gradients of the critic.
//!
//! The critic is a fixed stack of affine layers with ReLU between them, so
//! reverse accumulation is written out layer by layer instead of going
//! through a general tape. Everything is batched: rows of the input matrix
//! are independent samples and per-row results are reduced in row order.
//!
//! Notation used below, for a batch `X` (rows = samples) and `K` layers:
//!
//! ```text
//! h_0 = X,  z_k = h_{k-1} W_kᵀ + b_k,  h_k = relu(z_k)  (k < K),  D = z_K
//! δ_K = seed,  δ_{k-1} = (δ_k W_k) ⊙ [z_{k-1} > 0]
//! ∂/∂W_k = δ_kᵀ h_{k-1},  ∂/∂b_k = Σ_rows δ_k,  ∇_X D = δ_1 W_1
//! ```
//!
//! For the gradient penalty, the input gradient `g = δ_1 W_1` is itself a
//! function of the weights (the ReLU masks are locally constant and carry
//! no derivative). Its parameter gradient against a fixed co-vector `v` is
//! obtained by pushing `v` forward through the same masks:
//!
//! ```text
//! u_0 = v,  u_k = (u_{k-1} W_kᵀ) ⊙ [z_k > 0],  ∂⟨g, v⟩/∂W_k = δ_kᵀ u_{k-1}
//! ```
//!
//! and the biases receive no gradient.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::critic::CriticParams;
use crate::error::{Error, Result};

/// Threshold on `‖∇_ξ D‖` below which the penalty gradient is not formed.
pub const GRAD_NORM_EPS: f64 = 1e-12;

/// Gradient with the same shapes as [`CriticParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl LayerGrad {
    pub fn zeros_like(params: &CriticParams) -> Self {
        LayerGrad {
            weights: params.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: params.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &LayerGrad, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
        self.biases.iter_mut().for_each(|b| *b *= s);
    }

    /// Global L2 norm over every entry.
    pub fn norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }
}

/// Activations kept from a batched forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// `h_0 .. h_{K-1}`: the input followed by every hidden activation.
    acts: Vec<Array2<f64>>,
    out: Array1<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array1<f64> {
        &self.out
    }
}

pub(crate) fn check_input(params: &CriticParams, width: usize) -> Result<()> {
    let want = params.input_width();
    if width != want {
        return Err(Error::shape(format!("critic expects lines of length {want}, got {width}")));
    }
    Ok(())
}

fn relu_mask(delta: &mut Array2<f64>, act: &Array2<f64>) {
    // ReLU'(0) = 0: act == 0 exactly when the pre-activation was <= 0.
    Zip::from(delta).and(act).for_each(|d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
}

/// Forward pass over a batch of lines (one per row).
pub fn forward_batch(params: &CriticParams, x: ArrayView2<f64>) -> ForwardCache {
    let n = params.layers.len();
    let mut acts = Vec::with_capacity(n);
    acts.push(x.to_owned());
    for layer in &params.layers[..n - 1] {
        let mut z = acts.last().unwrap().dot(&layer.weight.t());
        z += &layer.bias;
        z.mapv_inplace(|v| v.max(0.0));
        acts.push(z);
    }
    let last = &params.layers[n - 1];
    let out = acts.last().unwrap().dot(&last.weight.row(0)) + last.bias[0];
    ForwardCache { acts, out }
}

/// Backpropagated signals `δ_1 .. δ_K` for per-row output seeds.
fn deltas(params: &CriticParams, cache: &ForwardCache, seeds: ArrayView1<f64>) -> Vec<Array2<f64>> {
    let n = params.layers.len();
    let mut out = Vec::with_capacity(n);
    let mut delta = seeds.to_owned().insert_axis(Axis(1));
    for k in (0..n).rev() {
        if k > 0 {
            let mut next = delta.dot(&params.layers[k].weight);
            relu_mask(&mut next, &cache.acts[k]);
            out.push(delta);
            delta = next;
        } else {
            out.push(delta);
            break;
        }
    }
    out.reverse();
    out
}

fn param_grad_from(cache: &ForwardCache, deltas: &[Array2<f64>]) -> LayerGrad {
    let weights = deltas
        .iter()
        .zip(&cache.acts)
        .map(|(d, h)| d.t().dot(h))
        .collect();
    let biases = deltas.iter().map(|d| d.sum_axis(Axis(0))).collect();
    LayerGrad { weights, biases }
}

/// Critic scores of a batch and the parameter gradient of
/// `Σ_rows seed_r · D(x_r)`.
pub fn batch_value_and_param_grad(
    params: &CriticParams,
    x: ArrayView2<f64>,
    seeds: ArrayView1<f64>,
) -> Result<(Array1<f64>, LayerGrad)> {
    check_input(params, x.ncols())?;
    if seeds.len() != x.nrows() {
        return Err(Error::shape(format!("{} seeds for {} rows", seeds.len(), x.nrows())));
    }
    let cache = forward_batch(params, x);
    let ds = deltas(params, &cache, seeds);
    let grad = param_grad_from(&cache, &ds);
    Ok((cache.out, grad))
}

/// Critic scores of a batch and, per row, `seed_r · ∇_x D(x_r)`.
pub fn batch_value_and_input_grad(
    params: &CriticParams,
    x: ArrayView2<f64>,
    seeds: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    check_input(params, x.ncols())?;
    if seeds.len() != x.nrows() {
        return Err(Error::shape(format!("{} seeds for {} rows", seeds.len(), x.nrows())));
    }
    let cache = forward_batch(params, x);
    let ds = deltas(params, &cache, seeds);
    let g = ds[0].dot(&params.layers[0].weight);
    Ok((cache.out, g))
}

/// Result of the batched gradient-penalty evaluation.
#[derive(Clone, Debug)]
pub struct PenaltyBatch {
    /// `Σ_rows λ (‖∇_x D(x_r)‖ − 1)²`.
    pub value: f64,
    /// Parameter gradient of `value`.
    pub grad: LayerGrad,
    /// Rows whose input-gradient norm fell below [`GRAD_NORM_EPS`]; they add
    /// their penalty value but no gradient.
    pub n_degenerate: usize,
}

/// Gradient penalty over a batch and its exact parameter gradient.
pub fn batch_penalty_param_grad(params: &CriticParams, x: ArrayView2<f64>, lambda: f64) -> Result<PenaltyBatch> {
    check_input(params, x.ncols())?;
    let rows = x.nrows();
    let cache = forward_batch(params, x);
    let ds = deltas(params, &cache, Array1::ones(rows).view());
    let g = ds[0].dot(&params.layers[0].weight);

    let mut value = 0.0;
    let mut n_degenerate = 0;
    let mut v = Array2::zeros(g.raw_dim());
    for (g_row, mut v_row) in g.axis_iter(Axis(0)).zip(v.axis_iter_mut(Axis(0))) {
        let norm = g_row.dot(&g_row).sqrt();
        value += lambda * (norm - 1.0).powi(2);
        if norm <= GRAD_NORM_EPS {
            n_degenerate += 1;
            continue;
        }
        let coef = 2.0 * lambda * (norm - 1.0) / norm;
        v_row.zip_mut_with(&g_row, |a, &b| *a = coef * b);
    }
    if n_degenerate > 0 {
        log::warn!("gradient penalty: {n_degenerate} rows with vanishing input gradient");
    }

    let n = params.layers.len();
    let mut weights = Vec::with_capacity(n);
    let mut u = v;
    for k in 0..n {
        weights.push(ds[k].t().dot(&u));
        if k + 1 < n {
            let mut next = u.dot(&params.layers[k].weight.t());
            relu_mask(&mut next, &cache.acts[k + 1]);
            u = next;
        }
    }
    let biases = params.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect();
    Ok(PenaltyBatch {
        value,
        grad: LayerGrad { weights, biases },
        n_degenerate,
    })
}

fn single_row(input: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, input.len()), input).expect("contiguous slice")
}

/// `D(ξ)` and `∇_φ D(ξ)` for one line.
pub fn value_and_param_grad(params: &CriticParams, input: &[f64]) -> Result<(f64, LayerGrad)> {
    let (v, g) = batch_value_and_param_grad(params, single_row(input), Array1::ones(1).view())?;
    Ok((v[0], g))
}

/// `∇_ξ D(ξ)` for one line.
pub fn input_grad(params: &CriticParams, input: &[f64]) -> Result<Vec<f64>> {
    let (_, g) = batch_value_and_input_grad(params, single_row(input), Array1::ones(1).view())?;
    Ok(g.into_raw_vec_and_offset().0)
}

/// Penalty `λ(‖∇_ξ D(ξ)‖ − 1)²` of one line and its parameter gradient.
#[derive(Clone, Debug)]
pub struct PenaltyGrad {
    pub value: f64,
    pub grad: LayerGrad,
    /// Set when the input gradient vanished and the gradient was zeroed.
    pub degenerate: bool,
}

pub fn penalty_param_grad(params: &CriticParams, input: &[f64], lambda: f64) -> Result<PenaltyGrad> {
    let b = batch_penalty_param_grad(params, single_row(input), lambda)?;
    Ok(PenaltyGrad {
        value: b.value,
        grad: b.grad,
        degenerate: b.n_degenerate > 0,
    })
}
