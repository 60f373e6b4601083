//! Categorical distributions over angle bins.
//!
//! A [`Pmf`] lives on the probability simplex and is parameterized by
//! unconstrained [`PmfLogits`] through a softmax. Sampling comes in two
//! flavors: exact inverse-CDF draws ([`sample_categorical`]) used to
//! synthesize data, and the Gumbel-softmax relaxation ([`gumbel_softmax`])
//! whose weights are differentiable in the PMF for fixed Gumbel noise.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor added to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
/// Uniform draws are clamped to `[UNIFORM_CLAMP, 1 - UNIFORM_CLAMP]`.
pub const UNIFORM_CLAMP: f64 = 1e-12;

/// Probability mass function over `n_theta` angle bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validate and wrap a probability vector (sum within `1e-9` of one).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("PMF must have at least one bin".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("PMF entries must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("PMF sums to {total}, not 1")));
        }
        Ok(Pmf { probs })
    }

    /// Normalize nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !(total > 0.0) {
            return Err(Error::InvalidArgument("weights must be nonnegative with positive sum".into()));
        }
        Ok(Pmf {
            probs: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Pmf {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Pmf { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `log(p_i + PROB_FLOOR)` per bin.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| (p + PROB_FLOOR).ln()).collect()
    }

    /// Circular shift so that `out[i] = self[(i + k) mod n]`.
    pub fn shifted(&self, k: isize) -> Pmf {
        let n = self.probs.len() as isize;
        Pmf {
            probs: (0..n).map(|i| self.probs[(i + k).rem_euclid(n) as usize]).collect(),
        }
    }

    /// Bin reversal `out[i] = self[n - 1 - i]`, i.e. `θ ↦ π − θ`.
    pub fn reversed(&self) -> Pmf {
        let mut probs = self.probs.clone();
        probs.reverse();
        Pmf { probs }
    }
}

/// Unconstrained parameters of a PMF.
#[derive(Clone, Debug, PartialEq)]
pub struct PmfLogits {
    pub logits: Vec<f64>,
}

impl PmfLogits {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() || logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("logits must be a non-empty finite vector".into()));
        }
        Ok(PmfLogits { logits })
    }

    pub fn zeros(n: usize) -> Self {
        PmfLogits { logits: vec![0.0; n] }
    }

    /// Logits whose softmax reproduces `pmf` (up to the log floor).
    pub fn from_pmf(pmf: &Pmf) -> Self {
        PmfLogits {
            logits: pmf.log_probs(),
        }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

/// Max-stabilized softmax.
pub fn softmax_pmf(logits: &PmfLogits) -> Pmf {
    let mut probs = logits.logits.clone();
    softmax_in_place(&mut probs);
    Pmf { probs }
}

/// Vector-Jacobian product of the softmax: given `p = softmax(z)` and an
/// upstream gradient `dp`, returns `dz = p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(pi, di)| pi * (di - inner)).collect()
}

/// Standard Gumbel variate from a uniform draw, `-ln(-ln u)`.
#[inline]
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    -(-u.ln()).ln()
}

/// `rows × cols` i.i.d. Gumbel(0, 1) variates.
pub fn sample_gumbel(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || gumbel_from_uniform(rng.random::<f64>()))
}

/// Relaxed one-hot samples: one row per batch element.
#[derive(Clone, Debug, PartialEq)]
pub struct GumbelWeights {
    pub weights: Array2<f64>,
    pub tau: f64,
}

/// Gumbel-softmax weights for a given Gumbel draw:
/// `r[b, i] = softmax_i((g[b, i] + log p_i) / τ)`.
pub fn gumbel_softmax_with(p: &Pmf, gumbel: ArrayView2<f64>, tau: f64) -> Result<GumbelWeights> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if gumbel.ncols() != p.len() {
        return Err(Error::shape(format!(
            "gumbel draw has {} columns for {} bins",
            gumbel.ncols(),
            p.len()
        )));
    }
    let log_p = p.log_probs();
    let mut weights = gumbel.to_owned();
    for mut row in weights.axis_iter_mut(Axis(0)) {
        for (v, lp) in row.iter_mut().zip(&log_p) {
            *v = (*v + lp) / tau;
        }
        softmax_in_place(row.as_slice_mut().expect("owned rows are contiguous"));
    }
    Ok(GumbelWeights { weights, tau })
}

/// Draw `batch` rows of Gumbel noise and return the relaxed weights together
/// with the noise (kept for replay and differentiation).
pub fn gumbel_softmax(p: &Pmf, tau: f64, batch: usize, rng: &mut impl Rng) -> Result<(GumbelWeights, Array2<f64>)> {
    let g = sample_gumbel(batch, p.len(), rng);
    let w = gumbel_softmax_with(p, g.view(), tau)?;
    Ok((w, g))
}

/// Backpropagate an upstream gradient on the weights to `p`, holding the
/// Gumbel draw fixed. Returns `∂loss/∂p_i`.
pub fn gumbel_softmax_backward(p: &Pmf, weights: &GumbelWeights, d_weights: ArrayView2<f64>) -> Vec<f64> {
    let n = p.len();
    let mut d_logp = vec![0.0; n];
    for (r, dr) in weights.weights.axis_iter(Axis(0)).zip(d_weights.axis_iter(Axis(0))) {
        let r = r.as_slice().expect("owned rows are contiguous");
        let dr: Vec<f64> = dr.to_vec();
        let ds = softmax_backward(r, &dr);
        for (acc, v) in d_logp.iter_mut().zip(ds) {
            *acc += v / weights.tau;
        }
    }
    d_logp
        .iter()
        .zip(p.probs())
        .map(|(g, pi)| g / (pi + PROB_FLOOR))
        .collect()
}

/// `count` i.i.d. bin indices with `P(i) = p_i`, by inverse CDF.
pub fn sample_categorical(p: &Pmf, count: usize, rng: &mut impl Rng) -> Vec<u32> {
    let mut cdf = Vec::with_capacity(p.len());
    let mut acc = 0.0;
    for &pi in p.probs() {
        acc += pi;
        cdf.push(acc);
    }
    // Rounding can leave the total slightly below one.
    let last_nonzero = p.probs().iter().rposition(|&v| v > 0.0).unwrap_or(0);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|&c| c <= u);
            idx.min(last_nonzero) as u32
        })
        .collect()
}

/// Total-variation distance `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("PMFs have {} and {} bins", p.len(), q.len())));
    }
    Ok(0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Seeded random piecewise-smooth PMF: `n_pieces` knots at random bins with
/// random heights, joined by cosine interpolation around the circle.
pub fn random_piecewise_pmf(n_theta: usize, n_pieces: usize, rng: &mut impl Rng) -> Result<Pmf> {
    if n_pieces == 0 || n_pieces > n_theta {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n_pieces <= n_theta, got {n_pieces} pieces for {n_theta} bins"
        )));
    }
    if n_pieces == 1 {
        return Ok(Pmf::uniform(n_theta));
    }
    let mut knots = rand::seq::index::sample(rng, n_theta, n_pieces).into_vec();
    knots.sort_unstable();
    let heights: Vec<f64> = (0..n_pieces).map(|_| rng.random_range(0.1..1.0)).collect();
    let mut weights = vec![0.0; n_theta];
    for k in 0..n_pieces {
        let start = knots[k];
        let end = if k + 1 < n_pieces { knots[k + 1] } else { knots[0] + n_theta };
        let (h0, h1) = (heights[k], heights[(k + 1) % n_pieces]);
        let span = (end - start) as f64;
        for j in start..end {
            let t = (j - start) as f64 / span;
            let blend = 0.5 * (1.0 - (std::f64::consts::PI * t).cos());
            weights[j % n_theta] = h0 + (h1 - h0) * blend;
        }
    }
    Pmf::from_weights(&weights)
}

#[derive(Debug, Serialize, Deserialize)]
struct PmfRow {
    bin_index: usize,
    probability: f64,
}

/// Write `bin_index,probability` rows.
pub fn save_pmf(p: &Pmf, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for (bin_index, &probability) in p.probs().iter().enumerate() {
        w.serialize(PmfRow { bin_index, probability })
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_pmf(path: impl AsRef<Path>) -> Result<Pmf> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut probs = Vec::new();
    for (i, row) in rdr.deserialize::<PmfRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        if row.bin_index != i {
            return Err(Error::format(path, format!("expected bin {i}, found {}", row.bin_index)));
        }
        probs.push(row.probability);
    }
    Pmf::new(probs).map_err(|e| Error::format(path, e.to_string()))
}

/// Mean over rows, handy for checking that relaxed samples average to `p`.
pub fn mean_weights(w: &GumbelWeights) -> Array1<f64> {
    w.weights.mean_axis(Axis(0)).expect("non-empty batch")
}
