//! Synthetic unlabeled projection datasets.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::angledist::{sample_categorical, Pmf};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::projector::{AngleGrid, Projector, ProjectionSet};

/// Noise level of a synthetic dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    /// Clean projections, `σ = 0`.
    None,
    /// Signal-to-noise ratio: mean per-sample power of the clean lines over
    /// the noise variance.
    Snr(f64),
    /// Explicit noise standard deviation.
    Sigma(f64),
}

/// Draw `n_lines` angles from `pmf`, project `img` at the bin centers and
/// add white Gaussian noise. Ground-truth labels are kept in the result.
pub fn synthesize(
    img: &Image,
    pmf: &Pmf,
    n_lines: usize,
    noise: Noise,
    rng: &mut impl Rng,
) -> Result<ProjectionSet> {
    let n_theta = pmf.len();
    let grid = AngleGrid::new(n_theta)?;
    let d = img.d();
    let angles = sample_categorical(pmf, n_lines, rng);
    let all = Projector::for_grid(d, &grid).project(img.pixels());
    let mut lines = Array2::zeros((n_lines, d));
    for (mut row, &a) in lines.axis_iter_mut(Axis(0)).zip(&angles) {
        row.assign(&all.row(a as usize));
    }
    let sigma = match noise {
        Noise::None => 0.0,
        Noise::Sigma(s) => {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("invalid noise std {s}")));
            }
            s
        }
        Noise::Snr(snr) => {
            if !(snr > 0.0) {
                return Err(Error::InvalidArgument(format!("SNR must be positive, got {snr}")));
            }
            if snr.is_infinite() {
                0.0
            } else {
                let power = lines.iter().map(|v| v * v).sum::<f64>() / (n_lines * d) as f64;
                (power / snr).sqrt()
            }
        }
    };
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("positive std");
        lines.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    ProjectionSet::new(lines, sigma, Some(angles), n_theta)
}
