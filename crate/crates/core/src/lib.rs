//! Unknown-view tomography.
//!
//! Recovers a 2D image together with the probability mass function of its
//! projection angles from a bag of unlabeled, possibly noisy parallel-beam
//! projection lines. The main solver is an adversarial game between a
//! fully-connected critic and a physics-based generator; the PMF receives
//! gradients through a Gumbel-softmax relaxation of categorical sampling.
//!
//! The crate also ships the classical references used to judge it:
//! filtered backprojection, TV-regularized ADMM with known angles, and EM
//! over latent angle assignments, plus the evaluation metrics (PSNR, CC,
//! PMF total-variation distance) computed after gauge alignment.
//!
//! Module map:
//!
//! + [`image`]: image container, phantoms, raw image files
//! + [`projector`]: Radon transform, exact adjoint, FBP, sinogram files
//! + [`angledist`]: PMFs, Gumbel-softmax, categorical sampling
//! + [`diff`]: first- and second-order gradients of the critic
//! + [`critic`]: the fully-connected discriminator
//! + [`trainer`]: the alternating min-max training loop
//! + [`baselines`]: ADMM-TV and EM reconstructions
//! + [`metrics`]: PSNR, CC, alignment
//! + [`dataset`]: synthetic projection datasets
//! + [`cli`]: command-line front end

pub mod angledist;
pub mod baselines;
pub mod cli;
pub mod critic;
pub mod dataset;
pub mod diff;
mod error;
pub mod image;
pub mod metrics;
pub mod plot;
pub mod projector;
pub mod trainer;

pub use angledist::{GumbelWeights, Pmf, PmfLogits};
pub use critic::CriticParams;
pub use error::{Error, Result};
pub use image::Image;
pub use projector::{AngleGrid, ProjectionSet};
pub use trainer::{PmfMode, TrainConfig};
