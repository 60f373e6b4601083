//! Reconstruction quality metrics and gauge alignment.
//!
//! Without angle labels the image is only determined up to a global rotation
//! and a mirror, with a matching shift / reversal of the angle PMF.
//! [`align_for_eval`] searches that group on the angle grid and reports
//! the transform that maximizes correlation with the ground truth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::angledist::{tv_distance, Pmf};
use crate::error::{Error, Result};
use crate::image::Image;

/// Returned by [`psnr`] for a perfect reconstruction.
pub const PSNR_CAP_DB: f64 = 300.0;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.d() != b.d() {
        return Err(Error::shape(format!("images of side {} and {}", a.d(), b.d())));
    }
    Ok(())
}

/// `10·log10(max(gt)² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(recon: &Image, gt: &Image) -> Result<f64> {
    check_dims(recon, gt)?;
    let n = gt.pixels().len() as f64;
    let mse = recon
        .pixels()
        .iter()
        .zip(gt.pixels())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    let peak = gt.max();
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Pearson correlation over pixels.
pub fn cc(recon: &Image, gt: &Image) -> Result<f64> {
    check_dims(recon, gt)?;
    let n = gt.pixels().len() as f64;
    let mr = recon.sum() / n;
    let mg = gt.sum() / n;
    let (mut num, mut vr, mut vg) = (0.0, 0.0, 0.0);
    for (a, b) in recon.pixels().iter().zip(gt.pixels()) {
        let (da, db) = (a - mr, b - mg);
        num += da * db;
        vr += da * da;
        vg += db * db;
    }
    if vr == 0.0 || vg == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant image".into()));
    }
    Ok((num / (vr.sqrt() * vg.sqrt())).clamp(-1.0, 1.0))
}

/// Rotate counter-clockwise by `angle` about the image center with bilinear
/// resampling: `out(x) = img(R(−angle)·x)`, zero outside the grid.
pub fn rotate(img: &Image, angle: f64) -> Image {
    let d = img.d();
    let h = img.pixel_size();
    let (s, c) = angle.sin_cos();
    let sample = |row: f64, col: f64| -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let (fr, fc) = (row - r0, col - c0);
        let (r0, c0) = (r0 as i64, c0 as i64);
        let mut acc = 0.0;
        for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
            for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                let (r, cc) = (r0 + dr, c0 + dc);
                if r >= 0 && cc >= 0 && (r as usize) < d && (cc as usize) < d {
                    acc += wr * wc * img.get(r as usize, cc as usize);
                }
            }
        }
        acc
    };
    Image::from_fn(d, |x, y| {
        let xs = x * c + y * s;
        let ys = -x * s + y * c;
        let col = (xs + 1.0) / h - 0.5;
        let row = (1.0 - ys) / h - 0.5;
        sample(row, col)
    })
}

/// Element of the gauge group picked by [`align_for_eval`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// Mirror `x ↦ −x` applied first.
    pub reflected: bool,
    /// The (possibly mirrored) reconstruction was rotated clockwise by
    /// `rotation_steps · π / n_theta`.
    pub rotation_steps: usize,
    pub n_theta: usize,
}

impl Alignment {
    pub fn identity(n_theta: usize) -> Self {
        Alignment {
            reflected: false,
            rotation_steps: 0,
            n_theta,
        }
    }

    pub fn rotation_radians(&self) -> f64 {
        self.rotation_steps as f64 * PI / self.n_theta as f64
    }

    pub fn apply_image(&self, img: &Image) -> Image {
        let base = if self.reflected { img.mirrored_x() } else { img.clone() };
        if self.rotation_steps == 0 {
            base
        } else {
            rotate(&base, -self.rotation_radians())
        }
    }

    /// Carry the transform over to the angle PMF: a mirror maps `θ ↦ π − θ`
    /// and a clockwise rotation by `k` bins shifts the PMF by `k`.
    pub fn apply_pmf(&self, pmf: &Pmf) -> Pmf {
        let base = if self.reflected { pmf.reversed() } else { pmf.clone() };
        base.shifted(self.rotation_steps as isize)
    }
}

/// Search rotations by multiples of `π / n_theta` over the full circle, with
/// and without mirroring, for the transform maximizing [`cc`] against `gt`.
/// Ties keep the earliest candidate, so the identity wins when it is optimal.
pub fn align_for_eval(recon: &Image, gt: &Image, n_theta: usize) -> Result<(Image, Alignment)> {
    check_dims(recon, gt)?;
    if n_theta == 0 {
        return Err(Error::InvalidArgument("n_theta must be positive".into()));
    }
    let mut best = (cc(recon, gt)?, recon.clone(), Alignment::identity(n_theta));
    for reflected in [false, true] {
        for rotation_steps in 0..2 * n_theta {
            if !reflected && rotation_steps == 0 {
                continue;
            }
            let a = Alignment {
                reflected,
                rotation_steps,
                n_theta,
            };
            let candidate = a.apply_image(recon);
            // Rotations can blank the image entirely; skip those.
            let Ok(score) = cc(&candidate, gt) else { continue };
            if score > best.0 {
                best = (score, candidate, a);
            }
        }
    }
    Ok((best.1, best.2))
}

/// PSNR / CC / PMF distance, before and after alignment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub psnr: f64,
    pub cc: f64,
    pub tv_distance: Option<f64>,
    pub alignment: Alignment,
    pub unaligned_psnr: f64,
    pub unaligned_cc: f64,
    pub unaligned_tv_distance: Option<f64>,
}

pub fn evaluate(
    recon: &Image,
    gt: &Image,
    pmf: Option<(&Pmf, &Pmf)>,
    n_theta: usize,
) -> Result<EvalReport> {
    let (aligned, alignment) = align_for_eval(recon, gt, n_theta)?;
    let (tv, unaligned_tv) = match pmf {
        Some((rec, truth)) => (
            Some(tv_distance(&alignment.apply_pmf(rec), truth)?),
            Some(tv_distance(rec, truth)?),
        ),
        None => (None, None),
    };
    Ok(EvalReport {
        psnr: psnr(&aligned, gt)?,
        cc: cc(&aligned, gt)?,
        tv_distance: tv,
        alignment,
        unaligned_psnr: psnr(recon, gt)?,
        unaligned_cc: cc(recon, gt)?,
        unaligned_tv_distance: unaligned_tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::shepp_logan;
    use crate::projector::project;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn constant(d: usize, v: f64) -> Image {
        Image::from_pixels(d, vec![v; d * d]).unwrap()
    }

    fn map(img: &Image, mut f: impl FnMut(f64) -> f64) -> Image {
        Image::from_pixels(img.d(), img.pixels().iter().map(|&v| f(v)).collect()).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let gt = shepp_logan(32).unwrap();
        assert_eq!(psnr(&gt, &gt).unwrap(), PSNR_CAP_DB);
        let p = psnr(&constant(8, 0.9), &constant(8, 1.0)).unwrap();
        assert!((p - 20.0).abs() < 1e-9);
        assert!(psnr(&constant(8, 0.0), &constant(9, 0.0)).is_err());
    }

    #[test]
    fn psnr_constant_offset() {
        let gt = shepp_logan(32).unwrap();
        let c = 0.05;
        let p = psnr(&map(&gt, |v| v + c), &gt).unwrap();
        let want = 10.0 * (gt.max().powi(2) / (c * c)).log10();
        assert!((p - want).abs() < 1e-9);
    }

    #[test]
    fn psnr_drops_with_noise() {
        let gt = shepp_logan(32).unwrap();
        let mut last = f64::INFINITY;
        for std in [0.01, 0.02, 0.04] {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let n = Normal::new(0.0, std).unwrap();
            let noisy = map(&gt, |v| v + n.sample(&mut rng));
            let p = psnr(&noisy, &gt).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn cc_cases() {
        let gt = shepp_logan(32).unwrap();
        assert!((cc(&gt, &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!((cc(&map(&gt, |v| 3.0 * v + 2.0), &gt).unwrap() - 1.0).abs() < 1e-12);
        assert!((cc(&map(&gt, |v| -v), &gt).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(cc(&constant(32, 1.0), &gt), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn rotation_matches_projection_shift() {
        // P_θ(R_δ I) = P_{θ−δ} I, up to resampling error.
        let gt = shepp_logan(64).unwrap();
        let delta = 0.3;
        let rotated = rotate(&gt, delta);
        let a = project(&rotated, 1.0);
        let b = project(&gt, 1.0 - delta);
        let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        assert!(err / norm < 0.05, "{}", err / norm);
    }

    #[test]
    fn identity_alignment() {
        let gt = shepp_logan(32).unwrap();
        let (aligned, a) = align_for_eval(&gt, &gt, 16).unwrap();
        assert_eq!(a, Alignment::identity(16));
        assert_eq!(aligned, gt);
    }

    #[test]
    fn recovers_one_grid_step() {
        let gt = shepp_logan(64).unwrap();
        let n = 32;
        let recon = rotate(&gt, PI / n as f64);
        let (aligned, a) = align_for_eval(&recon, &gt, n).unwrap();
        assert!(!a.reflected);
        assert_eq!(a.rotation_steps, 1);
        // Two bilinear resamplings blur the thin outer ring.
        assert!(cc(&aligned, &gt).unwrap() >= 0.9);
    }

    #[test]
    fn recovers_mirror() {
        let gt = crate::image::random_piecewise_image(64, 6, 3).unwrap();
        let (aligned, a) = align_for_eval(&gt.mirrored_x(), &gt, 32).unwrap();
        assert!(a.reflected);
        assert!(cc(&aligned, &gt).unwrap() >= 0.99);
    }

    #[test]
    fn alignment_never_lowers_cc() {
        let gt = crate::image::random_piecewise_image(32, 5, 11).unwrap();
        let other = crate::image::random_piecewise_image(32, 5, 12).unwrap();
        let (aligned, _) = align_for_eval(&other, &gt, 16).unwrap();
        assert!(cc(&aligned, &gt).unwrap() >= cc(&other, &gt).unwrap());
    }

    #[test]
    fn pmf_follows_image_transform() {
        let p = Pmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let a = Alignment {
            reflected: true,
            rotation_steps: 5,
            n_theta: 4,
        };
        assert_eq!(a.apply_pmf(&p).probs(), &[0.3, 0.2, 0.1, 0.4]);
    }
}
