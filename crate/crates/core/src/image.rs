//! Square images on the domain `[-1, 1]²`, synthetic phantoms and raw files.
//!
//! Pixel `(row, col)` of a `d × d` image has its center at
//! `x = -1 + (col + 0.5)·h`, `y = 1 - (row + 0.5)·h` with `h = 2/d`, so row 0
//! is the top of the picture and `y` grows upward.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const IMAGE_MAGIC: &[u8; 4] = b"UVIM";
const IMAGE_VERSION: u32 = 1;
const IMAGE_HEADER_LEN: usize = 16;

/// A `d × d` real-valued image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    d: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn zeros(d: usize) -> Self {
        Image {
            d,
            pixels: vec![0.0; d * d],
        }
    }

    pub fn from_pixels(d: usize, pixels: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("image side must be positive".into()));
        }
        if pixels.len() != d * d {
            return Err(Error::shape(format!(
                "expected {} pixels for d = {d}, got {}",
                d * d,
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite pixel at index {i}")));
        }
        Ok(Image { d, pixels })
    }

    /// Build an image by evaluating `f(x, y)` at every pixel center.
    pub fn from_fn(d: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let h = pixel_size(d);
        let mut pixels = Vec::with_capacity(d * d);
        for r in 0..d {
            let y = 1.0 - (r as f64 + 0.5) * h;
            for c in 0..d {
                let x = -1.0 + (c as f64 + 0.5) * h;
                pixels.push(f(x, y));
            }
        }
        Image { d, pixels }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.d + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.pixels[row * self.d + col] = v;
    }

    /// Pixel pitch `2/d` on the `[-1, 1]²` domain.
    pub fn pixel_size(&self) -> f64 {
        pixel_size(self.d)
    }

    pub fn sum(&self) -> f64 {
        self.pixels.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.pixels.iter().zip(&other.pixels).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Zero every pixel whose center lies outside the inscribed unit circle.
    pub fn apply_support_mask(&mut self) {
        let h = self.pixel_size();
        for r in 0..self.d {
            let y = 1.0 - (r as f64 + 0.5) * h;
            for c in 0..self.d {
                let x = -1.0 + (c as f64 + 0.5) * h;
                if x * x + y * y > 1.0 {
                    self.pixels[r * self.d + c] = 0.0;
                }
            }
        }
    }

    /// Mirror across the vertical axis: `I'(x, y) = I(-x, y)`.
    pub fn mirrored_x(&self) -> Image {
        let d = self.d;
        let mut out = Image::zeros(d);
        for r in 0..d {
            for c in 0..d {
                out.pixels[r * d + c] = self.pixels[r * d + (d - 1 - c)];
            }
        }
        out
    }
}

#[inline]
pub(crate) fn pixel_size(d: usize) -> f64 {
    2.0 / d as f64
}

/// One ellipse of an analytic phantom: additive intensity, semi-axes,
/// center and rotation (degrees, counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    pub const fn new(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Ellipse {
            intensity,
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let dx = x - self.x0;
        let dy = y - self.y0;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }
}

/// The ten-ellipse Shepp-Logan table with the higher-contrast intensities
/// that keep every value inside `[0, 1]`.
pub const SHEPP_LOGAN_ELLIPSES: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Sum of the intensities of every ellipse containing `(x, y)`.
pub fn ellipse_value(ellipses: &[Ellipse], x: f64, y: f64) -> f64 {
    ellipses
        .iter()
        .filter(|e| e.contains(x, y))
        .map(|e| e.intensity)
        .sum()
}

/// Rasterize a set of additive ellipses by point sampling at pixel centers,
/// clamp to `[0, 1]` and apply the circular support mask.
pub fn rasterize_ellipses(d: usize, ellipses: &[Ellipse]) -> Image {
    let mut img = Image::from_fn(d, |x, y| ellipse_value(ellipses, x, y).clamp(0.0, 1.0));
    img.apply_support_mask();
    img
}

/// Shepp-Logan phantom rasterized at `d × d`.
pub fn shepp_logan(d: usize) -> Result<Image> {
    if d < 8 {
        return Err(Error::InvalidArgument(format!(
            "phantom side must be at least 8, got {d}"
        )));
    }
    Ok(rasterize_ellipses(d, &SHEPP_LOGAN_ELLIPSES))
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse(Ellipse),
    Rect {
        x0: f64,
        y0: f64,
        hw: f64,
        hh: f64,
        intensity: f64,
    },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse(e) => e.contains(x, y),
            Shape::Rect { x0, y0, hw, hh, .. } => (x - x0).abs() <= hw && (y - y0).abs() <= hh,
        }
    }

    fn intensity(&self) -> f64 {
        match *self {
            Shape::Ellipse(e) => e.intensity,
            Shape::Rect { intensity, .. } => intensity,
        }
    }
}

/// Seeded piecewise-constant test image: a body ellipse holding a handful of
/// non-overlapping inner ellipses and rectangles of random intensity.
pub fn random_piecewise_image(d: usize, n_shapes: usize, seed: u64) -> Result<Image> {
    if d < 8 {
        return Err(Error::InvalidArgument(format!(
            "image side must be at least 8, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let body = Ellipse::new(
        rng.random_range(0.3..0.5),
        rng.random_range(0.7..0.85),
        rng.random_range(0.75..0.9),
        0.0,
        0.0,
        rng.random_range(-20.0..20.0),
    );
    // Bounding circles (cx, cy, radius) of the shapes placed so far.
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut shapes: Vec<Shape> = Vec::new();
    let mut attempts = 0;
    while shapes.len() < n_shapes && attempts < 10_000 {
        attempts += 1;
        let radius: f64 = rng.random_range(0.08..0.25);
        let cx: f64 = rng.random_range(-0.6..0.6);
        let cy: f64 = rng.random_range(-0.6..0.6);
        if (cx * cx + cy * cy).sqrt() + radius > 0.68 {
            continue;
        }
        if placed
            .iter()
            .any(|&(px, py, pr)| ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() < pr + radius + 0.03)
        {
            continue;
        }
        let intensity = rng.random_range(0.05..1.0);
        let shape = if rng.random_bool(0.5) {
            let aspect = rng.random_range(0.5..1.0);
            Shape::Ellipse(Ellipse::new(
                intensity,
                radius,
                radius * aspect,
                cx,
                cy,
                rng.random_range(0.0..180.0),
            ))
        } else {
            // Half-diagonal of the rectangle equals the bounding radius.
            let angle: f64 = rng.random_range(0.3..1.2);
            Shape::Rect {
                x0: cx,
                y0: cy,
                hw: radius * angle.cos(),
                hh: radius * angle.sin(),
                intensity,
            }
        };
        placed.push((cx, cy, radius));
        shapes.push(shape);
    }
    let mut img = Image::from_fn(d, |x, y| {
        match shapes.iter().find(|s| s.contains(x, y)) {
            Some(s) => s.intensity(),
            None if body.contains(x, y) => body.intensity,
            None => 0.0,
        }
    });
    img.apply_support_mask();
    Ok(img)
}

/// Write an image in the raw `UVIM` format: 16-byte header followed by
/// `d²` little-endian `f32` values.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_image(img)).map_err(|e| Error::io(path, e))
}

pub fn encode_image(img: &Image) -> Vec<u8> {
    let mut buf = Vec::with_capacity(IMAGE_HEADER_LEN + 4 * img.pixels.len());
    buf.extend_from_slice(IMAGE_MAGIC);
    buf.extend_from_slice(&IMAGE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(img.d as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &v in &img.pixels {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|msg| Error::format(path, msg))
}

pub fn decode_image(bytes: &[u8]) -> std::result::Result<Image, String> {
    if bytes.len() < IMAGE_HEADER_LEN {
        return Err(format!("file too short for header: {} bytes", bytes.len()));
    }
    if &bytes[0..4] != IMAGE_MAGIC {
        return Err("bad magic, expected UVIM".into());
    }
    let version = read_u32(bytes, 4);
    if version != IMAGE_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let d = read_u32(bytes, 8) as usize;
    if d == 0 {
        return Err("image side is zero".into());
    }
    let payload = &bytes[IMAGE_HEADER_LEN..];
    if payload.len() != 4 * d * d {
        return Err(format!(
            "size mismatch: header says d = {d} ({} bytes), payload has {} bytes",
            4 * d * d,
            payload.len()
        ));
    }
    let pixels: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = pixels.iter().position(|v| !v.is_finite()) {
        return Err(format!("non-finite pixel at index {i}"));
    }
    Ok(Image { d, pixels })
}

pub(crate) fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// 8-bit binary PGM with min-max scaling, for viewing.
pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let lo = img.min();
    let hi = img.max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut buf = format!("P5\n{} {}\n255\n", img.d, img.d).into_bytes();
    buf.extend(
        img.pixels
            .iter()
            .map(|&v| (((v - lo) / span) * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
