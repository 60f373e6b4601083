//! Adversarial recovery of the image and the angle PMF.
//!
//! The generator is the forward model itself: an image `I` (kept
//! nonnegative by a ReLU on an unconstrained parameter) and an angle PMF `p`
//! (a softmax of logits). Synthetic lines are `P_θ I + ε` with `θ ~ p`. The
//! critic is trained with the WGAN-GP objective on real versus synthetic
//! lines; the generator then descends
//!
//! ```text
//! L(I, p) = −Σ_b Σ_i r[b, i] · D(P_{θ_i} I + ε_b)
//!           + γ_I_tv·TV(I) + γ_I_l2·‖I‖² + γ_p_tv·TV(p) + γ_p_l2·‖p‖²
//! ```
//!
//! where `r` are Gumbel-softmax weights built from `p`. Sampling `θ ~ p`
//! directly would give a loss with no gradient in `p`; the relaxation makes
//! every bin contribute, weighted by a differentiable function of `p`.
//!
//! Batch terms are summed, not averaged, so the learning rates and
//! regularizer weights carry the same meaning as in the usual WGAN-GP
//! recipe with `B = 50`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angledist::{
    gumbel_softmax_backward, gumbel_softmax_with, sample_categorical, sample_gumbel, softmax_backward, softmax_pmf,
    tv_distance, Pmf, PmfLogits,
};
use crate::critic::{init_critic, CriticParams, DEFAULT_ARCH};
use crate::diff::{batch_penalty_param_grad, batch_value_and_input_grad, batch_value_and_param_grad, LayerGrad};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics;
use crate::projector::{AngleGrid, Projector, ProjectionSet};

/// Smoothing inside the square roots of both TV regularizers.
pub const TV_EPS: f64 = 1e-8;

/// How the angle PMF is handled during training.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PmfMode {
    /// Learn the PMF together with the image.
    #[default]
    Learn,
    /// Use the supplied ground-truth PMF and never update it.
    FixedKnown,
    /// Hold the PMF uniform.
    FixedUniform,
}

/// Every hyperparameter of the training loop. Field names in JSON follow
/// the symbols of the objective (`alpha_I`, `gamma_p_tv`, `B`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha_phi: f64,
    #[serde(rename = "alpha_I")]
    pub alpha_i: f64,
    pub alpha_p: f64,
    pub n_disc: usize,
    #[serde(rename = "B")]
    pub batch_size: usize,
    pub lambda_gp: f64,
    pub tau: f64,
    #[serde(rename = "gamma_I_tv")]
    pub gamma_i_tv: f64,
    #[serde(rename = "gamma_I_l2")]
    pub gamma_i_l2: f64,
    pub gamma_p_tv: f64,
    pub gamma_p_l2: f64,
    /// Multiplicative learning-rate decay.
    pub lr_decay: f64,
    /// Decay periods in epochs.
    pub decay_every_phi: usize,
    #[serde(rename = "decay_every_I")]
    pub decay_every_i: usize,
    pub decay_every_p: usize,
    /// Global L2 clipping thresholds for the critic and image gradients.
    pub clip_phi: f64,
    #[serde(rename = "clip_I")]
    pub clip_i: f64,
    pub momentum: f64,
    pub n_epochs: usize,
    pub seed: u64,
    pub pmf_mode: PmfMode,
    /// Critic layer widths, last one must be 1.
    pub critic_arch: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha_phi: 1e-4,
            alpha_i: 1e-2,
            alpha_p: 1e-1,
            n_disc: 4,
            batch_size: 50,
            lambda_gp: 10.0,
            tau: 0.5,
            gamma_i_tv: 1e-3,
            gamma_i_l2: 1e-4,
            gamma_p_tv: 1e-2,
            gamma_p_l2: 1e-3,
            lr_decay: 0.9,
            decay_every_phi: 50,
            decay_every_i: 50,
            decay_every_p: 100,
            clip_phi: 1.0,
            clip_i: 10.0,
            momentum: 0.9,
            n_epochs: 100,
            seed: 0,
            pmf_mode: PmfMode::Learn,
            critic_arch: DEFAULT_ARCH.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_lines: usize) -> Result<()> {
        let positive = [
            ("alpha_phi", self.alpha_phi),
            ("alpha_I", self.alpha_i),
            ("alpha_p", self.alpha_p),
            ("tau", self.tau),
            ("clip_phi", self.clip_phi),
            ("clip_I", self.clip_i),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("lambda_gp", self.lambda_gp),
            ("gamma_I_tv", self.gamma_i_tv),
            ("gamma_I_l2", self.gamma_i_l2),
            ("gamma_p_tv", self.gamma_p_tv),
            ("gamma_p_l2", self.gamma_p_l2),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("lr_decay must be in (0, 1], got {}", self.lr_decay)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        let counts = [
            ("n_disc", self.n_disc),
            ("B", self.batch_size),
            ("n_epochs", self.n_epochs),
            ("decay_every_phi", self.decay_every_phi),
            ("decay_every_I", self.decay_every_i),
            ("decay_every_p", self.decay_every_p),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.batch_size > n_lines {
            return Err(Error::InvalidArgument(format!(
                "batch size {} exceeds the {n_lines} available lines",
                self.batch_size
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad training config: {e}")))
    }
}

/// Smoothed isotropic total variation of a `d × d` image with forward
/// differences (zero across the last row and column), and its gradient.
pub fn tv_image(img: &[f64], d: usize) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            let i = r * d + c;
            let dx = if c + 1 < d { img[i + 1] - img[i] } else { 0.0 };
            let dy = if r + 1 < d { img[i + d] - img[i] } else { 0.0 };
            let mag = (dx * dx + dy * dy + TV_EPS * TV_EPS).sqrt();
            value += mag;
            let (gx, gy) = (dx / mag, dy / mag);
            if c + 1 < d {
                grad[i + 1] += gx;
                grad[i] -= gx;
            }
            if r + 1 < d {
                grad[i + d] += gy;
                grad[i] -= gy;
            }
        }
    }
    (value, grad)
}

/// Smoothed circular total variation `Σ |p_{i+1} − p_i|` and its gradient.
pub fn tv_pmf(p: &[f64]) -> (f64, Vec<f64>) {
    let n = p.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let j = (i + 1) % n;
        let diff = p[j] - p[i];
        let mag = (diff * diff + TV_EPS * TV_EPS).sqrt();
        value += mag;
        grad[j] += diff / mag;
        grad[i] -= diff / mag;
    }
    (value, grad)
}

/// Random draws consumed by one generator evaluation.
#[derive(Clone, Debug)]
pub struct GeneratorDraw {
    /// `B × n_theta` Gumbel(0, 1) variates.
    pub gumbel: Array2<f64>,
    /// `B × d` noise, one vector per batch element shared across all bins.
    pub noise: Array2<f64>,
}

impl GeneratorDraw {
    pub fn sample(batch: usize, n_theta: usize, d: usize, sigma: f64, rng: &mut impl Rng) -> Self {
        let gumbel = sample_gumbel(batch, n_theta, rng);
        let noise = if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("positive std");
            Array2::from_shape_simple_fn((batch, d), || normal.sample(rng))
        } else {
            Array2::zeros((batch, d))
        };
        GeneratorDraw { gumbel, noise }
    }
}

/// Generator objective and its gradients for a fixed draw.
#[derive(Clone, Debug)]
pub struct GeneratorEval {
    /// Full objective, adversarial term plus regularizers.
    pub loss: f64,
    /// Adversarial term alone.
    pub adversarial: f64,
    /// Gradient with respect to the pre-ReLU image parameter.
    pub grad_img: Vec<f64>,
    /// Gradient with respect to the PMF logits; zero when the PMF is fixed.
    pub grad_logits: Vec<f64>,
}

/// Which PMF the generator uses.
#[derive(Clone, Copy, Debug)]
pub enum PmfSource<'a> {
    Logits(&'a PmfLogits),
    Fixed(&'a Pmf),
}

/// Evaluate the generator objective and its gradients with respect to the
/// image parameter and the PMF logits.
pub fn generator_loss_and_grad(
    critic: &CriticParams,
    img_pre: &[f64],
    support: &[f64],
    pmf: PmfSource<'_>,
    draw: &GeneratorDraw,
    cfg: &TrainConfig,
    projector: &Projector,
) -> Result<GeneratorEval> {
    let d = projector.d();
    let n_theta = projector.n_angles();
    let batch = draw.gumbel.nrows();
    if img_pre.len() != d * d || support.len() != d * d {
        return Err(Error::shape(format!("image parameter has {} entries for d = {d}", img_pre.len())));
    }
    if draw.gumbel.ncols() != n_theta || draw.noise.dim() != (batch, d) {
        return Err(Error::shape("generator draw does not match the projector"));
    }
    let p = match pmf {
        PmfSource::Logits(l) => softmax_pmf(l),
        PmfSource::Fixed(p) => p.clone(),
    };
    if p.len() != n_theta {
        return Err(Error::shape(format!("PMF has {} bins, projector {n_theta} angles", p.len())));
    }

    let img: Vec<f64> = img_pre.iter().zip(support).map(|(v, m)| v.max(0.0) * m).collect();
    let proj = projector.project(&img);

    // Row b·n_theta + i holds P_{θ_i} I + ε_b.
    let mut inputs = Array2::zeros((batch * n_theta, d));
    for b in 0..batch {
        let eps = draw.noise.row(b);
        for i in 0..n_theta {
            let mut row = inputs.row_mut(b * n_theta + i);
            row.assign(&proj.row(i));
            row += &eps;
        }
    }
    let r = gumbel_softmax_with(&p, draw.gumbel.view(), cfg.tau)?;
    let seeds = Array1::from_iter(r.weights.iter().map(|w| -w));
    let (scores, input_grads) = batch_value_and_input_grad(critic, inputs.view(), seeds.view())?;
    let adversarial: f64 = seeds.iter().zip(scores.iter()).map(|(s, v)| s * v).sum();

    // Image gradient: sum per-bin line gradients over the batch, then P_iᵀ.
    let mut d_proj = Array2::zeros((n_theta, d));
    for b in 0..batch {
        for i in 0..n_theta {
            let mut acc = d_proj.row_mut(i);
            acc += &input_grads.row(b * n_theta + i);
        }
    }
    let mut d_img = projector.backproject(d_proj.view());
    let (tv_i, tv_i_grad) = tv_image(&img, d);
    let l2_i: f64 = img.iter().map(|v| v * v).sum();
    for ((g, t), v) in d_img.iter_mut().zip(&tv_i_grad).zip(&img) {
        *g += cfg.gamma_i_tv * t + 2.0 * cfg.gamma_i_l2 * v;
    }
    let grad_img: Vec<f64> = d_img
        .iter()
        .zip(img_pre)
        .zip(support)
        // The gate is open at zero so a pixel held there can come back.
        .map(|((g, &pre), &m)| if pre >= 0.0 { g * m } else { 0.0 })
        .collect();

    let (tv_p, tv_p_grad) = tv_pmf(p.probs());
    let l2_p: f64 = p.probs().iter().map(|v| v * v).sum();
    let grad_logits = match pmf {
        PmfSource::Logits(_) => {
            let d_r = scores
                .into_shape_with_order((batch, n_theta))
                .expect("scores follow the input rows")
                .mapv(|v| -v);
            let mut d_p = gumbel_softmax_backward(&p, &r, d_r.view());
            for ((g, t), v) in d_p.iter_mut().zip(&tv_p_grad).zip(p.probs()) {
                *g += cfg.gamma_p_tv * t + 2.0 * cfg.gamma_p_l2 * v;
            }
            softmax_backward(p.probs(), &d_p)
        }
        PmfSource::Fixed(_) => vec![0.0; n_theta],
    };

    let loss = adversarial + cfg.gamma_i_tv * tv_i + cfg.gamma_i_l2 * l2_i + cfg.gamma_p_tv * tv_p + cfg.gamma_p_l2 * l2_p;
    Ok(GeneratorEval {
        loss,
        adversarial,
        grad_img,
        grad_logits,
    })
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub critic: CriticParams,
    pub critic_velocity: LayerGrad,
    /// Unconstrained image parameter; the image is `max(img_pre, 0)` inside
    /// the support disc.
    pub img_pre: Vec<f64>,
    pub img_velocity: Vec<f64>,
    /// `1` inside the inscribed circle, `0` outside.
    pub support: Vec<f64>,
    pub logits: PmfLogits,
    /// Set in the fixed-PMF modes.
    pub fixed_pmf: Option<Pmf>,
    pub lr_phi: f64,
    pub lr_i: f64,
    pub lr_p: f64,
    pub critic_steps: usize,
    pub generator_steps: usize,
    /// Projections of the current image onto every bin center.
    projections: Array2<f64>,
    projector: Projector,
    d: usize,
}

impl TrainState {
    /// Random image with the mass implied by the data, uniform PMF, He
    /// initialized critic.
    pub fn init(data: &ProjectionSet, cfg: &TrainConfig, known_pmf: Option<&Pmf>, rng: &mut impl Rng) -> Result<Self> {
        let d = data.d();
        let grid = AngleGrid::new(data.n_theta)?;
        let projector = Projector::for_grid(d, &grid);
        let critic = init_critic(&cfg.critic_arch, d, rng)?;
        let critic_velocity = LayerGrad::zeros_like(&critic);

        let mut support_img = Image::from_pixels(d, vec![1.0; d * d])?;
        support_img.apply_support_mask();
        let support = support_img.into_pixels();

        // Every line integrates the whole image: sum(line) = h · sum(I).
        let h = 2.0 / d as f64;
        let mean_line_sum = data.lines.sum() / data.len().max(1) as f64;
        let target_mass = (mean_line_sum / h).max(0.0);
        let mut img_pre: Vec<f64> = support.iter().map(|&m| m * rng.random::<f64>()).collect();
        let mass: f64 = img_pre.iter().sum();
        if mass > 0.0 && target_mass > 0.0 {
            img_pre.iter_mut().for_each(|v| *v *= target_mass / mass);
        }

        let fixed_pmf = match cfg.pmf_mode {
            PmfMode::Learn => None,
            PmfMode::FixedUniform => Some(Pmf::uniform(data.n_theta)),
            PmfMode::FixedKnown => {
                let p = known_pmf.ok_or_else(|| {
                    Error::InvalidArgument("pmf_mode fixed_known needs the ground-truth PMF".into())
                })?;
                if p.len() != data.n_theta {
                    return Err(Error::shape(format!("known PMF has {} bins, data {}", p.len(), data.n_theta)));
                }
                Some(p.clone())
            }
        };

        let mut state = TrainState {
            critic,
            critic_velocity,
            img_velocity: vec![0.0; d * d],
            img_pre,
            support,
            logits: PmfLogits::zeros(data.n_theta),
            fixed_pmf,
            lr_phi: cfg.alpha_phi,
            lr_i: cfg.alpha_i,
            lr_p: cfg.alpha_p,
            critic_steps: 0,
            generator_steps: 0,
            projections: Array2::zeros((data.n_theta, d)),
            projector,
            d,
        };
        state.refresh_projections();
        Ok(state)
    }

    fn refresh_projections(&mut self) {
        self.projections = self.projector.project(&self.image_pixels());
    }

    fn image_pixels(&self) -> Vec<f64> {
        self.img_pre.iter().zip(&self.support).map(|(v, m)| v.max(0.0) * m).collect()
    }

    /// The current nonnegative image estimate.
    pub fn image(&self) -> Image {
        Image::from_pixels(self.d, self.image_pixels()).expect("image parameter stays finite")
    }

    /// The current PMF estimate.
    pub fn pmf(&self) -> Pmf {
        match &self.fixed_pmf {
            Some(p) => p.clone(),
            None => softmax_pmf(&self.logits),
        }
    }

    fn pmf_source(&self) -> PmfSource<'_> {
        match &self.fixed_pmf {
            Some(p) => PmfSource::Fixed(p),
            None => PmfSource::Logits(&self.logits),
        }
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }
}

/// Diagnostics of one critic update.
#[derive(Clone, Copy, Debug)]
pub struct CriticStepStats {
    /// Minimized critic loss `Σ_b D(syn) − D(real) + λ·GP`.
    pub loss: f64,
    /// Wasserstein estimate `mean D(real) − mean D(syn)`.
    pub wasserstein: f64,
    pub penalty: f64,
    pub grad_norm: f64,
    pub clipped_grad_norm: f64,
}

fn clip_factor(norm: f64, max_norm: f64) -> f64 {
    if norm > max_norm {
        max_norm / norm
    } else {
        1.0
    }
}

/// One critic update on a batch of real lines.
///
/// Synthetic lines use angles drawn from the current PMF and fresh noise of
/// standard deviation `sigma`. The critic descends the negated WGAN-GP
/// objective with SGD + momentum after clipping the global gradient norm.
pub fn critic_step(
    state: &mut TrainState,
    real: ArrayView2<f64>,
    sigma: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<CriticStepStats> {
    let (batch, d) = real.dim();
    if d != state.d || batch == 0 {
        return Err(Error::shape(format!("real batch is {batch} × {d}, expected lines of length {}", state.d)));
    }
    let angles = sample_categorical(&state.pmf(), batch, rng);
    let mut stacked = Array2::zeros((2 * batch, d));
    stacked.slice_mut(ndarray::s![..batch, ..]).assign(&real);
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive std"));
    for (b, &a) in angles.iter().enumerate() {
        let mut row = stacked.row_mut(batch + b);
        row.assign(&state.projections.row(a as usize));
        if let Some(n) = &normal {
            row.iter_mut().for_each(|v| *v += n.sample(rng));
        }
    }
    let mut interp = Array2::zeros((batch, d));
    for b in 0..batch {
        let alpha: f64 = rng.random();
        let mut row = interp.row_mut(b);
        row.assign(&stacked.row(b));
        row *= alpha;
        row.scaled_add(1.0 - alpha, &stacked.row(batch + b));
    }

    let seeds = Array1::from_iter((0..2 * batch).map(|k| if k < batch { -1.0 } else { 1.0 }));
    let (scores, mut grad) = batch_value_and_param_grad(&state.critic, stacked.view(), seeds.view())?;
    let pen = batch_penalty_param_grad(&state.critic, interp.view(), cfg.lambda_gp)?;
    grad.add_scaled(&pen.grad, 1.0);

    let sum_real = scores.slice(ndarray::s![..batch]).sum();
    let sum_syn = scores.slice(ndarray::s![batch..]).sum();
    let penalty = pen.value;
    let loss = sum_syn - sum_real + penalty;
    let grad_norm = grad.norm();
    if !loss.is_finite() || !grad_norm.is_finite() {
        return Err(Error::Numerical(format!(
            "critic step {}: loss {loss}, gradient norm {grad_norm}",
            state.critic_steps
        )));
    }
    let scale = clip_factor(grad_norm, cfg.clip_phi);
    grad.scale(scale);

    state.critic_velocity.scale(cfg.momentum);
    state.critic_velocity.add_scaled(&grad, 1.0);
    let lr = state.lr_phi;
    for (k, layer) in state.critic.layers.iter_mut().enumerate() {
        layer.weight.scaled_add(-lr, &state.critic_velocity.weights[k]);
        layer.bias.scaled_add(-lr, &state.critic_velocity.biases[k]);
    }
    state.critic_steps += 1;
    Ok(CriticStepStats {
        loss,
        wasserstein: (sum_real - sum_syn) / batch as f64,
        penalty,
        grad_norm,
        clipped_grad_norm: grad_norm * scale,
    })
}

/// Diagnostics of one generator update.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorStepStats {
    pub loss: f64,
    pub adversarial: f64,
    pub image_grad_norm: f64,
    pub logits_grad_norm: f64,
}

/// One generator update: SGD + momentum on the clipped image gradient, with
/// the pre-activation clamped at zero afterwards, and, when the PMF is
/// learned, a unit-norm gradient step on the logits.
pub fn generator_step(
    state: &mut TrainState,
    sigma: f64,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<GeneratorStepStats> {
    let draw = GeneratorDraw::sample(cfg.batch_size, state.projector.n_angles(), state.d, sigma, rng);
    let eval = generator_loss_and_grad(
        &state.critic,
        &state.img_pre,
        &state.support,
        state.pmf_source(),
        &draw,
        cfg,
        &state.projector,
    )?;
    let image_grad_norm = eval.grad_img.iter().map(|v| v * v).sum::<f64>().sqrt();
    let logits_grad_norm = eval.grad_logits.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !eval.loss.is_finite() || !image_grad_norm.is_finite() || !logits_grad_norm.is_finite() {
        return Err(Error::Numerical(format!(
            "generator step {}: loss {}, image gradient norm {image_grad_norm}, logits gradient norm {logits_grad_norm}",
            state.generator_steps, eval.loss
        )));
    }

    let scale = clip_factor(image_grad_norm, cfg.clip_i);
    for ((p, v), g) in state.img_pre.iter_mut().zip(state.img_velocity.iter_mut()).zip(&eval.grad_img) {
        *v = cfg.momentum * *v + scale * g;
        *p -= state.lr_i * *v;
        // Project back onto the nonnegative orthant. Left negative, a pixel
        // would sit behind a closed ReLU gate for the rest of training.
        if *p < 0.0 {
            *p = 0.0;
            *v = 0.0;
        }
    }
    if state.fixed_pmf.is_none() && logits_grad_norm > 0.0 {
        let step = state.lr_p / logits_grad_norm;
        for (l, g) in state.logits.logits.iter_mut().zip(&eval.grad_logits) {
            *l -= step * g;
        }
    }
    state.generator_steps += 1;
    state.refresh_projections();
    Ok(GeneratorStepStats {
        loss: eval.loss,
        adversarial: eval.adversarial,
        image_grad_norm,
        logits_grad_norm,
    })
}

/// One row of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub tv_dist_to_gt: Option<f64>,
    pub psnr: Option<f64>,
    #[serde(skip)]
    pub cc: Option<f64>,
}

/// Ground truth used only for monitoring.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruth<'a> {
    pub image: &'a Image,
    pub pmf: &'a Pmf,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub image: Image,
    pub pmf: Pmf,
    pub history: Vec<EpochRecord>,
    pub state: TrainState,
}

/// Returned by a training observer to continue or stop early.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Run the full training loop. See [`train_with`] for monitoring hooks.
pub fn train(data: &ProjectionSet, cfg: &TrainConfig, known_pmf: Option<&Pmf>) -> Result<TrainOutput> {
    train_with(data, cfg, known_pmf, None, |_, _| Ok(Control::Continue))
}

/// Run the training loop, calling `observer` after every epoch.
///
/// An epoch is one pass over the real lines in shuffled order, cut into
/// batches of `B`; every `n_disc` critic updates are followed by one
/// generator update. Learning rates decay by `lr_decay` every
/// `decay_every_*` epochs. When `ground_truth` is given, each record carries
/// the aligned PSNR, CC and PMF distance.
pub fn train_with(
    data: &ProjectionSet,
    cfg: &TrainConfig,
    known_pmf: Option<&Pmf>,
    ground_truth: Option<GroundTruth<'_>>,
    mut observer: impl FnMut(&EpochRecord, &TrainState) -> Result<Control>,
) -> Result<TrainOutput> {
    data.validate()?;
    cfg.validate(data.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = TrainState::init(data, cfg, known_pmf, &mut rng)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.n_epochs);
    let d = data.d();
    let mut batch = Array2::zeros((cfg.batch_size, d));

    for epoch in 1..=cfg.n_epochs {
        order.shuffle(&mut rng);
        let (mut critic_sum, mut critic_n) = (0.0, 0usize);
        let (mut gen_sum, mut gen_n) = (0.0, 0usize);
        for chunk in order.chunks_exact(cfg.batch_size) {
            for (mut row, &idx) in batch.axis_iter_mut(Axis(0)).zip(chunk) {
                row.assign(&data.lines.row(idx));
            }
            let c = critic_step(&mut state, batch.view(), data.sigma, cfg, &mut rng)?;
            critic_sum += c.loss;
            critic_n += 1;
            if state.critic_steps % cfg.n_disc == 0 {
                let g = generator_step(&mut state, data.sigma, cfg, &mut rng)?;
                gen_sum += g.loss;
                gen_n += 1;
            }
        }
        if epoch % cfg.decay_every_phi == 0 {
            state.lr_phi *= cfg.lr_decay;
        }
        if epoch % cfg.decay_every_i == 0 {
            state.lr_i *= cfg.lr_decay;
        }
        if epoch % cfg.decay_every_p == 0 {
            state.lr_p *= cfg.lr_decay;
        }

        let mut record = EpochRecord {
            epoch,
            critic_loss: critic_sum / critic_n.max(1) as f64,
            gen_loss: if gen_n > 0 { gen_sum / gen_n as f64 } else { f64::NAN },
            tv_dist_to_gt: None,
            psnr: None,
            cc: None,
        };
        if let Some(gt) = ground_truth {
            let img = state.image();
            // A blank image has no defined correlation yet.
            if img.max() > img.min() {
                let report = metrics::evaluate(&img, gt.image, Some((&state.pmf(), gt.pmf)), data.n_theta)?;
                record.psnr = Some(report.psnr);
                record.cc = Some(report.cc);
                record.tv_dist_to_gt = report.tv_distance;
            } else {
                record.tv_dist_to_gt = Some(tv_distance(&state.pmf(), gt.pmf)?);
            }
        }
        log::info!(
            "epoch {epoch}: critic {:.5} gen {:.5} cc {:?} tv {:?}",
            record.critic_loss,
            record.gen_loss,
            record.cc,
            record.tv_dist_to_gt
        );
        let control = observer(&record, &state)?;
        history.push(record);
        if control == Control::Stop {
            break;
        }
    }
    Ok(TrainOutput {
        image: state.image(),
        pmf: state.pmf(),
        history,
        state,
    })
}

/// Write the loss history as
/// `epoch,critic_loss,gen_loss,tv_dist_to_gt,psnr`.
pub fn save_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,critic_loss,gen_loss,tv_dist_to_gt,psnr\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.critic_loss,
            r.gen_loss,
            opt(r.tv_dist_to_gt),
            opt(r.psnr)
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize, Noise};
    use crate::image::shepp_logan;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            critic_arch: vec![16, 8, 1],
            n_epochs: 1,
            ..TrainConfig::default()
        }
    }

    fn toy_data(d: usize, n_theta: usize, n_lines: usize) -> (Image, Pmf, ProjectionSet) {
        let img = shepp_logan(d).unwrap();
        let pmf = Pmf::uniform(n_theta);
        let set = synthesize(&img, &pmf, n_lines, Noise::None, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (img, pmf, set)
    }

    #[test]
    fn tv_of_constant_and_step() {
        let d = 16;
        let (v, g) = tv_image(&vec![0.7; d * d], d);
        assert!((v - (d * d) as f64 * TV_EPS).abs() < 1e-18);
        assert!(g.iter().all(|x| x.abs() < 1e-12));

        let h = 0.5;
        let step: Vec<f64> = (0..d * d).map(|i| if i % d >= d / 2 { h } else { 0.0 }).collect();
        let (v, _) = tv_image(&step, d);
        assert!((v - h * d as f64).abs() / (h * d as f64) < 0.02);

        let (v, _) = tv_pmf(&[0.25; 4]);
        assert!(v < 1e-7);
        let (v, _) = tv_pmf(&[0.5, 0.0, 0.5, 0.0]);
        assert!((v - 2.0).abs() < 1e-7);
    }

    #[test]
    fn tv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 6;
        let img: Vec<f64> = (0..d * d).map(|_| rng.random::<f64>()).collect();
        let (_, g) = tv_image(&img, d);
        let p: Vec<f64> = (0..7).map(|_| rng.random::<f64>()).collect();
        let (_, gp) = tv_pmf(&p);
        let h = 1e-6;
        for i in 0..d * d {
            let mut a = img.clone();
            let mut b = img.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (tv_image(&a, d).0 - tv_image(&b, d).0) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5);
        }
        for i in 0..7 {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (tv_pmf(&a).0 - tv_pmf(&b).0) / (2.0 * h);
            assert!((fd - gp[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn config_json_uses_symbol_names() {
        let cfg = TrainConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"alpha_I\"") && text.contains("\"B\":50") && text.contains("\"gamma_p_l2\""));
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
        let partial = TrainConfig::from_json(r#"{"B": 10, "pmf_mode": "fixed_uniform"}"#).unwrap();
        assert_eq!(partial.batch_size, 10);
        assert_eq!(partial.pmf_mode, PmfMode::FixedUniform);
        assert!(TrainConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_defaults() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size, 50);
        assert_eq!(cfg.n_disc, 4);
        assert_eq!(cfg.lr_decay, 0.9);
        assert_eq!((cfg.clip_phi, cfg.clip_i), (1.0, 10.0));
        assert_eq!(cfg.momentum, 0.9);
        assert!(cfg.validate(100).is_ok());
        assert!(cfg.validate(10).is_err());
        assert!(TrainConfig { tau: 0.0, ..cfg.clone() }.validate(100).is_err());
        assert!(TrainConfig { momentum: 1.0, ..cfg }.validate(100).is_err());
    }

    #[test]
    fn zero_critic_gives_zero_loss_and_no_update() {
        let (_, _, data) = toy_data(16, 8, 64);
        let cfg = TrainConfig {
            gamma_i_tv: 0.0,
            gamma_i_l2: 0.0,
            gamma_p_tv: 0.0,
            gamma_p_l2: 0.0,
            ..small_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state = TrainState::init(&data, &cfg, None, &mut rng).unwrap();
        state.critic = CriticParams::zeros(&cfg.critic_arch, 16).unwrap();
        let before = (state.img_pre.clone(), state.logits.clone());
        let stats = generator_step(&mut state, 0.0, &cfg, &mut rng).unwrap();
        assert_eq!(stats.loss, 0.0);
        assert_eq!(state.img_pre, before.0);
        assert_eq!(state.logits, before.1);
    }

    #[test]
    fn pmf_l2_regularizer_direction() {
        let (_, _, data) = toy_data(16, 8, 64);
        let cfg = TrainConfig {
            gamma_i_tv: 0.0,
            gamma_i_l2: 0.0,
            gamma_p_tv: 0.0,
            gamma_p_l2: 0.5,
            ..small_cfg()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut state = TrainState::init(&data, &cfg, None, &mut rng).unwrap();
        state.critic = CriticParams::zeros(&cfg.critic_arch, 16).unwrap();
        state.logits = PmfLogits::new((0..8).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let start = state.logits.logits.clone();

        // Finite-difference gradient of γ‖softmax(z)‖².
        let reg = |z: &[f64]| -> f64 {
            let p = softmax_pmf(&PmfLogits::new(z.to_vec()).unwrap());
            0.5 * p.probs().iter().map(|v| v * v).sum::<f64>()
        };
        let h = 1e-6;
        let fd: Vec<f64> = (0..8)
            .map(|i| {
                let mut a = start.clone();
                let mut b = start.clone();
                a[i] += h;
                b[i] -= h;
                (reg(&a) - reg(&b)) / (2.0 * h)
            })
            .collect();
        let fd_norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();

        generator_step(&mut state, 0.0, &cfg, &mut rng).unwrap();
        for i in 0..8 {
            let moved = (state.logits.logits[i] - start[i]) / cfg.alpha_p;
            assert!((moved + fd[i] / fd_norm).abs() < 1e-5, "{i}: {moved} vs {}", -fd[i] / fd_norm);
        }
        let total: f64 = state.pmf().probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generator_gradients_match_finite_differences() {
        let d = 16;
        let n_theta = 8;
        let (_, _, data) = toy_data(d, n_theta, 32);
        let cfg = TrainConfig {
            batch_size: 2,
            critic_arch: vec![24, 12, 1],
            tau: 0.5,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let state = TrainState::init(&data, &cfg, None, &mut rng).unwrap();
        let logits = PmfLogits::new((0..n_theta).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let img_pre: Vec<f64> = state
            .support
            .iter()
            .map(|_| rng.random_range(0.05..0.5))
            .collect();
        let draw = GeneratorDraw::sample(2, n_theta, d, 0.05, &mut rng);
        let eval = |img: &[f64], z: &PmfLogits| {
            generator_loss_and_grad(&state.critic, img, &state.support, PmfSource::Logits(z), &draw, &cfg, &state.projector)
                .unwrap()
        };
        let base = eval(&img_pre, &logits);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in (0..d * d).step_by(7) {
            let mut a = img_pre.clone();
            let mut b = img_pre.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (eval(&a, &logits).loss - eval(&b, &logits).loss) / (2.0 * h);
            let an = base.grad_img[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(1e-3));
        }
        for i in 0..n_theta {
            let mut a = logits.clone();
            let mut b = logits.clone();
            a.logits[i] += h;
            b.logits[i] -= h;
            let fd = (eval(&img_pre, &a).loss - eval(&img_pre, &b).loss) / (2.0 * h);
            let an = base.grad_logits[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(1e-3));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn critic_step_clips_and_is_deterministic() {
        let (_, _, data) = toy_data(16, 8, 64);
        let cfg = TrainConfig {
            alpha_phi: 1e-2,
            ..small_cfg()
        };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut state = TrainState::init(&data, &cfg, None, &mut rng).unwrap();
            let stats = critic_step(&mut state, data.lines.slice(ndarray::s![..8, ..]), 0.0, &cfg, &mut rng).unwrap();
            (state.critic, stats)
        };
        let (a, sa) = run();
        let (b, _) = run();
        assert_eq!(a, b);
        assert!(sa.clipped_grad_norm <= cfg.clip_phi + 1e-9);
    }

    #[test]
    fn frozen_critic_generator_descends() {
        let (_, _, data) = toy_data(16, 8, 64);
        let cfg = small_cfg();
        let mut improved = 0;
        for trial in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut state = TrainState::init(&data, &cfg, None, &mut rng).unwrap();
            let draw = GeneratorDraw::sample(cfg.batch_size, 8, 16, 0.0, &mut rng);
            let loss = |s: &TrainState| {
                generator_loss_and_grad(&s.critic, &s.img_pre, &s.support, s.pmf_source(), &draw, &cfg, &s.projector)
                    .unwrap()
                    .loss
            };
            let before = loss(&state);
            for _ in 0..100 {
                generator_step(&mut state, 0.0, &cfg, &mut rng).unwrap();
            }
            if loss(&state) < before {
                improved += 1;
            }
        }
        assert!(improved >= 95, "loss fell in {improved}/100 trials");
    }

    #[test]
    fn schedule_and_invariants() {
        let (_, pmf, data) = toy_data(16, 8, 160);
        let cfg = TrainConfig {
            n_epochs: 3,
            decay_every_phi: 1,
            decay_every_i: 2,
            decay_every_p: 5,
            ..small_cfg()
        };
        let mut seen = Vec::new();
        let out = train_with(&data, &cfg, None, None, |_, s| {
            assert!(s.image().pixels().iter().all(|&v| v >= 0.0));
            assert!((s.pmf().probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            seen.push((s.critic_steps, s.generator_steps, s.lr_phi, s.lr_i, s.lr_p));
            Ok(Control::Continue)
        })
        .unwrap();
        // 160 lines / 8 per batch = 20 critic steps per epoch, one generator
        // step per 4 of them.
        assert_eq!(seen[0].0, 20);
        assert_eq!(seen[0].1, 5);
        assert_eq!(seen[2].0, 60);
        assert_eq!(seen[2].1, 15);
        assert!((seen[0].2 - cfg.alpha_phi * 0.9).abs() < 1e-18);
        assert_eq!(seen[0].3, cfg.alpha_i);
        assert!((seen[1].3 - cfg.alpha_i * 0.9).abs() < 1e-18);
        assert_eq!(seen[2].4, cfg.alpha_p);
        assert_eq!(out.history.len(), 3);

        let known = train(&data, &TrainConfig { pmf_mode: PmfMode::FixedKnown, ..cfg.clone() }, Some(&pmf)).unwrap();
        assert_eq!(known.pmf, pmf);
        let uniform = train(&data, &TrainConfig { pmf_mode: PmfMode::FixedUniform, ..cfg.clone() }, None).unwrap();
        assert_eq!(uniform.pmf, Pmf::uniform(8));
        assert!(train(&data, &TrainConfig { pmf_mode: PmfMode::FixedKnown, ..cfg }, None).is_err());
    }

    #[test]
    fn training_is_reproducible() {
        let (_, _, data) = toy_data(16, 8, 96);
        let cfg = TrainConfig { n_epochs: 2, ..small_cfg() };
        let a = train(&data, &cfg, None).unwrap();
        let b = train(&data, &cfg, None).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.pmf, b.pmf);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn initial_state() {
        let (_, _, data) = toy_data(16, 8, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state = TrainState::init(&data, &small_cfg(), None, &mut rng).unwrap();
        assert_eq!(state.pmf(), Pmf::uniform(8));
        let img = state.image();
        assert!(img.max() > img.min());
        assert!(img.get(0, 0) == 0.0);
    }

    #[test]
    fn history_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let rec = EpochRecord {
            epoch: 1,
            critic_loss: -0.5,
            gen_loss: 0.25,
            tv_dist_to_gt: Some(0.1),
            psnr: None,
            cc: None,
        };
        save_history(&[rec], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,critic_loss,gen_loss,tv_dist_to_gt,psnr\n1,-0.5,0.25,0.1,\n");
    }
}
