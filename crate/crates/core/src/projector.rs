//! Parallel-beam Radon transform with a matched adjoint, and filtered
//! backprojection.
//!
//! The detector has `d` bins of pitch `h = 2/d` centered on the origin, so a
//! `d × d` image yields projection lines of length `d`. A line at angle `θ`
//! integrates the image along the rays `x cos θ + y sin θ = s`; at `θ = 0`
//! the rays are vertical and the detector coordinate is `x`.
//!
//! Rays are traced Joseph-style: the ray is sampled once per pixel row (or
//! column, whichever axis it runs along more steeply), the image is linearly
//! interpolated between the two neighboring pixels, and each sample is
//! weighted by the step length. [`backproject`] spreads exactly the same
//! weights, so the two operators are adjoint to rounding error.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::{pixel_size, read_u32, Image};

/// Uniform grid of `n_theta` angle bins over `[0, π)`, represented by the
/// bin centers `(i + 0.5)·π / n_theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleGrid {
    centers: Vec<f64>,
}

impl AngleGrid {
    pub fn new(n_theta: usize) -> Result<Self> {
        if n_theta == 0 {
            return Err(Error::InvalidArgument("angle grid needs at least one bin".into()));
        }
        let step = PI / n_theta as f64;
        Ok(AngleGrid {
            centers: (0..n_theta).map(|i| (i as f64 + 0.5) * step).collect(),
        })
    }

    pub fn n_theta(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.centers[bin]
    }

    /// Bin width `π / n_theta`.
    pub fn step(&self) -> f64 {
        PI / self.centers.len() as f64
    }
}

/// A bag of projection lines, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    pub lines: Array2<f64>,
    /// Standard deviation of the additive Gaussian noise.
    pub sigma: f64,
    /// Ground-truth angle bin of every line, when known.
    pub angles: Option<Vec<u32>>,
    pub n_theta: usize,
}

impl ProjectionSet {
    pub fn new(lines: Array2<f64>, sigma: f64, angles: Option<Vec<u32>>, n_theta: usize) -> Result<Self> {
        let set = ProjectionSet {
            lines,
            sigma,
            angles,
            n_theta,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_theta == 0 {
            return Err(Error::InvalidArgument("n_theta must be positive".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid noise level {}", self.sigma)));
        }
        if self.lines.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("projection lines contain non-finite samples".into()));
        }
        if let Some(angles) = &self.angles {
            if angles.len() != self.lines.nrows() {
                return Err(Error::shape(format!(
                    "{} angle labels for {} lines",
                    angles.len(),
                    self.lines.nrows()
                )));
            }
            if let Some(&a) = angles.iter().find(|&&a| a as usize >= self.n_theta) {
                return Err(Error::InvalidArgument(format!(
                    "angle bin {a} outside [0, {})",
                    self.n_theta
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lines.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.nrows() == 0
    }

    /// Detector size, equal to the image side.
    pub fn d(&self) -> usize {
        self.lines.ncols()
    }
}

/// Enumerate the `(bin, pixel, weight)` triples of the ray-driven kernel at
/// angle `theta`. Bins are visited in increasing order and, within a bin,
/// samples in increasing step order; every caller relies on this order for
/// bit-reproducible sums.
fn for_each_weight(d: usize, theta: f64, mut f: impl FnMut(usize, usize, f64)) {
    let theta = theta.rem_euclid(PI);
    let h = pixel_size(d);
    let (sin, cos) = theta.sin_cos();
    let steep = cos.abs() >= sin.abs();
    let step = if steep { h / cos.abs() } else { h / sin.abs() };
    for bin in 0..d {
        let s = -1.0 + (bin as f64 + 0.5) * h;
        for k in 0..d {
            let (frac_pos, fixed) = if steep {
                // Sample at the center of row k, interpolate along x.
                let y = 1.0 - (k as f64 + 0.5) * h;
                let x = (s - y * sin) / cos;
                ((x + 1.0) / h - 0.5, k)
            } else {
                // Sample at the center of column k, interpolate along y.
                let x = -1.0 + (k as f64 + 0.5) * h;
                let y = (s - x * cos) / sin;
                ((1.0 - y) / h - 0.5, k)
            };
            let lo = frac_pos.floor();
            let w_hi = frac_pos - lo;
            let lo = lo as i64;
            for (idx, w) in [(lo, 1.0 - w_hi), (lo + 1, w_hi)] {
                if idx < 0 || idx >= d as i64 || w == 0.0 {
                    continue;
                }
                let idx = idx as usize;
                let pixel = if steep { fixed * d + idx } else { idx * d + fixed };
                f(bin, pixel, w * step);
            }
        }
    }
}

/// Line integrals of `img` along direction `theta` (taken modulo π), one per
/// detector bin.
pub fn project(img: &Image, theta: f64) -> Vec<f64> {
    let d = img.d();
    let px = img.pixels();
    let mut out = vec![0.0; d];
    for_each_weight(d, theta, |bin, pixel, w| out[bin] += w * px[pixel]);
    out
}

/// Adjoint of [`project`] for a single line.
pub fn backproject(line: &[f64], theta: f64) -> Result<Image> {
    let d = line.len();
    if d == 0 {
        return Err(Error::shape("empty projection line"));
    }
    let mut img = Image::zeros(d);
    backproject_into(line, theta, img.pixels_mut());
    Ok(img)
}

fn backproject_into(line: &[f64], theta: f64, out: &mut [f64]) {
    for_each_weight(line.len(), theta, |bin, pixel, w| out[pixel] += w * line[bin]);
}

/// Project onto every bin center of `grid`; row `i` equals
/// `project(img, grid.center(i))` bit for bit.
pub fn project_all(img: &Image, grid: &AngleGrid) -> Array2<f64> {
    project_angles(img, grid.centers())
}

/// Project onto an arbitrary list of angles, one row per angle.
pub fn project_angles(img: &Image, angles: &[f64]) -> Array2<f64> {
    let d = img.d();
    let mut out = Array2::zeros((angles.len(), d));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(angles.par_iter())
        .for_each(|(mut row, &theta)| {
            let line = project(img, theta);
            row.iter_mut().zip(line).for_each(|(o, v)| *o = v);
        });
    out
}

/// Adjoint of [`project_all`]: sums the backprojection of row `i` at
/// `grid.center(i)`.
pub fn backproject_all(sino: ArrayView2<f64>, grid: &AngleGrid) -> Result<Image> {
    backproject_angles(sino, grid.centers())
}

pub fn backproject_angles(sino: ArrayView2<f64>, angles: &[f64]) -> Result<Image> {
    if sino.nrows() != angles.len() {
        return Err(Error::shape(format!(
            "{} sinogram rows for {} angles",
            sino.nrows(),
            angles.len()
        )));
    }
    let d = sino.ncols();
    if d == 0 {
        return Err(Error::shape("empty projection lines"));
    }
    let mut img = Image::zeros(d);
    let mut line = vec![0.0; d];
    for (row, &theta) in sino.axis_iter(Axis(0)).zip(angles) {
        line.iter_mut().zip(row.iter()).for_each(|(l, &v)| *l = v);
        backproject_into(&line, theta, img.pixels_mut());
    }
    Ok(img)
}

/// Projection and adjoint at a fixed set of angles with the kernel weights
/// precomputed. Results are bit-identical to the on-the-fly functions.
#[derive(Clone, Debug)]
pub struct Projector {
    d: usize,
    angles: Vec<f64>,
    /// Per angle, per bin: `(pixel, weight)` in kernel order.
    rows: Arc<Vec<Vec<Vec<(u32, f64)>>>>,
}

impl Projector {
    pub fn new(d: usize, angles: &[f64]) -> Self {
        let rows = angles
            .par_iter()
            .map(|&theta| {
                let mut bins: Vec<Vec<(u32, f64)>> = vec![Vec::with_capacity(2 * d); d];
                for_each_weight(d, theta, |bin, pixel, w| bins[bin].push((pixel as u32, w)));
                bins
            })
            .collect();
        Projector {
            d,
            angles: angles.to_vec(),
            rows: Arc::new(rows),
        }
    }

    pub fn for_grid(d: usize, grid: &AngleGrid) -> Self {
        Self::new(d, grid.centers())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn project_one(&self, img: &[f64], angle_idx: usize, out: &mut [f64]) {
        for (o, bin) in out.iter_mut().zip(&self.rows[angle_idx]) {
            let mut acc = 0.0;
            for &(p, w) in bin {
                acc += w * img[p as usize];
            }
            *o = acc;
        }
    }

    pub fn backproject_one_into(&self, line: ArrayView1<f64>, angle_idx: usize, out: &mut [f64]) {
        for (&v, bin) in line.iter().zip(&self.rows[angle_idx]) {
            for &(p, w) in bin {
                out[p as usize] += w * v;
            }
        }
    }

    /// All angles at once, `n_angles × d`.
    pub fn project(&self, img: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros((self.angles.len(), self.d));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut row)| {
                let slice = row.as_slice_mut().expect("rows of a standard-layout array are contiguous");
                self.project_one(img, i, slice);
            });
        out
    }

    /// Adjoint of [`Projector::project`]; angles are accumulated in order.
    pub fn backproject(&self, sino: ArrayView2<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.d];
        for (i, row) in sino.axis_iter(Axis(0)).enumerate() {
            self.backproject_one_into(row, i, &mut out);
        }
        out
    }

    /// `Σ_i weight_i · Pᵢᵀ Pᵢ x`, the normal operator of a weighted stack of
    /// the projector's angles.
    pub fn weighted_normal(&self, x: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.d];
        let mut line = vec![0.0; self.d];
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            self.project_one(x, i, &mut line);
            line.iter_mut().for_each(|v| *v *= w);
            self.backproject_one_into(ArrayView1::from(&line), i, &mut out);
        }
        out
    }
}

/// Apodization of the FBP ramp filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FbpWindow {
    /// `0.5·(1 + cos 2πf)`, zero at Nyquist. Smooth, loses fine detail.
    #[default]
    Hann,
    /// Bare ramp, sharper and noisier.
    RamLak,
}

/// Ramp filter built from the band-limited spatial Ram-Lak kernel, so that
/// the DC term is handled correctly, then apodized.
struct RampFilter {
    n: usize,
    response: Vec<Complex<f64>>,
    fft: Arc<dyn rustfft::Fft<f64>>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
}

impl RampFilter {
    fn new(d: usize, window: FbpWindow) -> Self {
        let n = (2 * d).next_power_of_two();
        let h = pixel_size(d);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let mut kernel: Vec<Complex<f64>> = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
                let v = if m == 0 {
                    1.0 / (4.0 * h * h)
                } else if m % 2 == 0 {
                    0.0
                } else {
                    -1.0 / ((m * m) as f64 * PI * PI * h * h)
                };
                // The discrete convolution carries a factor h.
                Complex::new(v * h, 0.0)
            })
            .collect();
        fft.process(&mut kernel);
        for (k, c) in kernel.iter_mut().enumerate() {
            let f = if k <= n / 2 { k as f64 } else { n as f64 - k as f64 } / n as f64;
            let w = match window {
                FbpWindow::Hann => 0.5 * (1.0 + (2.0 * PI * f).cos()),
                FbpWindow::RamLak => 1.0,
            };
            *c *= w / n as f64;
        }
        RampFilter {
            n,
            response: kernel,
            fft,
            ifft,
        }
    }

    fn apply(&self, line: ArrayView1<f64>) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        for (b, &v) in buf.iter_mut().zip(line.iter()) {
            b.re = v;
        }
        self.fft.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&self.response) {
            *b *= r;
        }
        self.ifft.process(&mut buf);
        buf[..line.len()].iter().map(|c| c.re).collect()
    }
}

/// Pixel-driven linear-interpolation backprojection used by FBP.
fn smear_line(filtered: &[f64], theta: f64, out: &mut [f64]) {
    let d = filtered.len();
    let h = pixel_size(d);
    let (sin, cos) = theta.sin_cos();
    for r in 0..d {
        let y = 1.0 - (r as f64 + 0.5) * h;
        for c in 0..d {
            let x = -1.0 + (c as f64 + 0.5) * h;
            let pos = (x * cos + y * sin + 1.0) / h - 0.5;
            let lo = pos.floor();
            let w = pos - lo;
            let lo = lo as i64;
            let mut v = 0.0;
            if lo >= 0 && lo < d as i64 {
                v += (1.0 - w) * filtered[lo as usize];
            }
            if lo + 1 >= 0 && lo + 1 < d as i64 {
                v += w * filtered[(lo + 1) as usize];
            }
            out[r * d + c] += v;
        }
    }
}

/// Filtered backprojection of lines with known angle bins: Hann-apodized
/// ramp filter, backprojection, scaling by `π / n_views`.
pub fn fbp(sino: &ProjectionSet, grid: &AngleGrid) -> Result<Image> {
    fbp_with(sino, grid, FbpWindow::Hann)
}

/// [`fbp`] with a chosen filter window.
pub fn fbp_with(sino: &ProjectionSet, grid: &AngleGrid, window: FbpWindow) -> Result<Image> {
    let angles = sino
        .angles
        .as_ref()
        .ok_or_else(|| Error::Precondition("FBP needs the angle of every line".into()))?;
    if sino.n_theta != grid.n_theta() {
        return Err(Error::shape(format!(
            "sinogram has n_theta = {}, grid has {}",
            sino.n_theta,
            grid.n_theta()
        )));
    }
    let d = sino.d();
    if d == 0 || sino.is_empty() {
        return Err(Error::shape("empty sinogram"));
    }
    let filter = RampFilter::new(d, window);
    let mut out = vec![0.0; d * d];
    for (line, &bin) in sino.lines.axis_iter(Axis(0)).zip(angles) {
        let filtered = filter.apply(line);
        smear_line(&filtered, grid.center(bin as usize), &mut out);
    }
    let scale = PI / sino.len() as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    Image::from_pixels(d, out)
}

const SINO_MAGIC: &[u8; 4] = b"UVTG";
const SINO_VERSION: u32 = 1;
const SINO_HEADER_LEN: usize = 36;

pub fn encode_sinogram(set: &ProjectionSet) -> Vec<u8> {
    let (l, d) = set.lines.dim();
    let mut buf = Vec::with_capacity(SINO_HEADER_LEN + 4 * l * d + 4 * l);
    buf.extend_from_slice(SINO_MAGIC);
    buf.extend_from_slice(&SINO_VERSION.to_le_bytes());
    buf.extend_from_slice(&(l as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(set.n_theta as u32).to_le_bytes());
    buf.extend_from_slice(&set.sigma.to_le_bytes());
    buf.push(set.angles.is_some() as u8);
    buf.extend_from_slice(&[0u8; 7]);
    for &v in set.lines.iter() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(angles) = &set.angles {
        for &a in angles {
            buf.extend_from_slice(&a.to_le_bytes());
        }
    }
    buf
}

pub fn decode_sinogram(bytes: &[u8]) -> std::result::Result<ProjectionSet, String> {
    if bytes.len() < SINO_HEADER_LEN {
        return Err(format!("file too short for header: {} bytes", bytes.len()));
    }
    if &bytes[0..4] != SINO_MAGIC {
        return Err("bad magic, expected UVTG".into());
    }
    let version = read_u32(bytes, 4);
    if version != SINO_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let l = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    let n_theta = read_u32(bytes, 16) as usize;
    let mut sigma_bytes = [0u8; 8];
    sigma_bytes.copy_from_slice(&bytes[20..28]);
    let sigma = f64::from_le_bytes(sigma_bytes);
    let has_angles = match bytes[28] {
        0 => false,
        1 => true,
        other => return Err(format!("invalid has_angles flag {other}")),
    };
    let expected = SINO_HEADER_LEN + 4 * l * d + if has_angles { 4 * l } else { 0 };
    if bytes.len() != expected {
        return Err(format!(
            "size mismatch: header implies {expected} bytes, file has {}",
            bytes.len()
        ));
    }
    let payload = &bytes[SINO_HEADER_LEN..SINO_HEADER_LEN + 4 * l * d];
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let lines = Array2::from_shape_vec((l, d), values).map_err(|e| e.to_string())?;
    let angles = has_angles.then(|| {
        bytes[SINO_HEADER_LEN + 4 * l * d..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect()
    });
    ProjectionSet::new(lines, sigma, angles, n_theta).map_err(|e| e.to_string())
}

pub fn save_sinogram(set: &ProjectionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sinogram(set)).map_err(|e| Error::io(path, e))
}

pub fn load_sinogram(path: impl AsRef<Path>) -> Result<ProjectionSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sinogram(&bytes).map_err(|msg| Error::format(path, msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::shepp_logan;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(d: usize, radius: f64) -> Image {
        Image::from_fn(d, |x, y| if x * x + y * y <= radius * radius { 1.0 } else { 0.0 })
    }

    fn random_image(d: usize, rng: &mut impl Rng) -> Image {
        Image::from_pixels(d, (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn grid_centers() {
        let g = AngleGrid::new(4).unwrap();
        let expect = [PI / 8.0, 3.0 * PI / 8.0, 5.0 * PI / 8.0, 7.0 * PI / 8.0];
        for (a, b) in g.centers().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(g.centers().windows(2).all(|w| w[0] < w[1]));
        assert!(AngleGrid::new(0).is_err());
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let z = Image::zeros(16);
        assert!(project(&z, 0.3).iter().all(|&v| v == 0.0));
        let g = AngleGrid::new(8).unwrap();
        assert!(project_all(&z, &g).iter().all(|&v| v == 0.0));
        assert!(backproject(&[0.0; 16], 1.0).unwrap().pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disc_center_chord() {
        let d = 64;
        let r = 0.5;
        let img = disc(d, r);
        for &theta in &[0.0, 0.3, PI / 4.0, 1.2, PI / 2.0, 2.5] {
            let line = project(&img, theta);
            let h = 2.0 / d as f64;
            for (k, &v) in line.iter().enumerate() {
                let s: f64 = -1.0 + (k as f64 + 0.5) * h;
                let chord = if s.abs() < r { 2.0 * (r * r - s * s).sqrt() } else { 0.0 };
                // Chord lengths are steep near the rim, compare away from it.
                // The error is bounded by two sample steps along the ray.
                let step = h / theta.cos().abs().max(theta.sin().abs());
                if (s.abs() - r).abs() > 2.0 * h {
                    assert!((v - chord).abs() <= 2.0 * step + 1e-12, "theta {theta} bin {k}: {v} vs {chord}");
                }
            }
        }
    }

    #[test]
    fn project_all_rows_match_single_calls() {
        let img = shepp_logan(32).unwrap();
        let g = AngleGrid::new(12).unwrap();
        let all = project_all(&img, &g);
        for i in 0..12 {
            let single = project(&img, g.center(i));
            assert_eq!(all.row(i).to_vec(), single);
        }
        let cached = Projector::for_grid(32, &g).project(img.pixels());
        assert_eq!(cached, all);
    }

    #[test]
    fn disc_rows_have_equal_energy() {
        let img = disc(64, 0.6);
        let g = AngleGrid::new(30).unwrap();
        let all = project_all(&img, &g);
        let norms: Vec<f64> = all.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        for n in norms {
            assert!((n - mean).abs() / mean < 0.01);
        }
    }

    #[test]
    fn adjoint_dot_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let d = rng.random_range(8..40);
            let f = random_image(d, &mut rng);
            let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let theta = rng.random_range(0.0..PI);
            let lhs: f64 = project(&f, theta).iter().zip(&g).map(|(a, b)| a * b).sum();
            let rhs = f.dot(&backproject(&g, theta).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
        }
    }

    #[test]
    fn cached_adjoint_matches() {
        let img = shepp_logan(16).unwrap();
        let g = AngleGrid::new(8).unwrap();
        let p = Projector::for_grid(16, &g);
        let sino = p.project(img.pixels());
        let a = p.backproject(sino.view());
        let b = backproject_all(sino.view(), &g).unwrap();
        assert_eq!(a, b.pixels());
    }

    #[test]
    fn one_hot_backprojection_is_a_column() {
        let d = 32;
        let mut line = vec![0.0; d];
        line[10] = 1.0;
        let img = backproject(&line, 0.0).unwrap();
        let cols: Vec<usize> = (0..d * d).filter(|&i| img.pixels()[i] != 0.0).map(|i| i % d).collect();
        let min = *cols.iter().min().unwrap();
        let max = *cols.iter().max().unwrap();
        assert!(max - min < 2, "spread over columns {min}..={max}");
        assert_eq!(min, 10);
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(20, &mut rng);
        let b = random_image(20, &mut rng);
        let combo = Image::from_pixels(
            20,
            a.pixels().iter().zip(b.pixels()).map(|(x, y)| 2.0 * x - 0.5 * y).collect(),
        )
        .unwrap();
        let pa = project(&a, 0.7);
        let pb = project(&b, 0.7);
        let pc = project(&combo, 0.7);
        for i in 0..20 {
            assert!((pc[i] - (2.0 * pa[i] - 0.5 * pb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn theta_wraps_modulo_pi() {
        let img = shepp_logan(16).unwrap();
        let a = project(&img, 0.4);
        let b = project(&img, 0.4 + PI);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn fbp_requires_angles() {
        let set = ProjectionSet::new(Array2::zeros((4, 8)), 0.0, None, 4).unwrap();
        let g = AngleGrid::new(4).unwrap();
        assert!(matches!(fbp(&set, &g), Err(Error::Precondition(_))));
    }

    #[test]
    fn fbp_of_zero_is_zero() {
        let set = ProjectionSet::new(Array2::zeros((4, 8)), 0.0, Some(vec![0, 1, 2, 3]), 4).unwrap();
        let g = AngleGrid::new(4).unwrap();
        assert!(fbp(&set, &g).unwrap().pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fbp_disc_profile() {
        let d = 64;
        let r = 0.6;
        let img = disc(d, r);
        let g = AngleGrid::new(120).unwrap();
        let lines = project_all(&img, &g);
        let set = ProjectionSet::new(lines, 0.0, Some((0..120).collect()), 120).unwrap();
        let rec = fbp(&set, &g).unwrap();
        let h = 2.0 / d as f64;
        let rec_max = r - 2.0 * h;
        Image::from_fn(d, |x, y| x * x + y * y)
            .pixels()
            .iter()
            .zip(rec.pixels())
            .filter(|(r2, _)| r2.sqrt() < rec_max)
            .for_each(|(_, &v)| assert!((v - 1.0).abs() < 0.1, "{v}"));
    }

    #[test]
    fn sinogram_roundtrip() {
        let lines = Array2::from_shape_fn((5, 8), |(i, j)| (i * 8 + j) as f32 as f64 * 0.25);
        let set = ProjectionSet::new(lines, 0.125, Some(vec![0, 1, 2, 3, 3]), 4).unwrap();
        let bytes = encode_sinogram(&set);
        assert_eq!(bytes.len(), 36 + 5 * 8 * 4 + 5 * 4);
        assert_eq!(decode_sinogram(&bytes).unwrap(), set);
        let no_angles = ProjectionSet { angles: None, ..set };
        assert_eq!(decode_sinogram(&encode_sinogram(&no_angles)).unwrap(), no_angles);
    }

    #[test]
    fn sinogram_rejects_bad_labels() {
        let set = ProjectionSet {
            lines: Array2::zeros((2, 4)),
            sigma: 0.0,
            angles: Some(vec![0, 9]),
            n_theta: 4,
        };
        assert!(decode_sinogram(&encode_sinogram(&set)).is_err());
        assert!(set.validate().is_err());
    }
}
