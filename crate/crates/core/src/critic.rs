//! Fully-connected critic scoring projection lines.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diff;
use crate::error::{Error, Result};
use crate::image::read_u32;

/// Hidden widths used by default, ending in the scalar score.
pub const DEFAULT_ARCH: [usize; 5] = [2048, 1024, 512, 256, 1];
/// Narrower variant that works better on noisy data.
pub const SMALL_ARCH: [usize; 5] = [512, 256, 128, 64, 1];

/// One affine layer, `weight` is `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_width(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of the critic: affine layers with ReLU between them and a
/// linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticParams {
    pub layers: Vec<Dense>,
}

impl CriticParams {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        let params = CriticParams { layers };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let last = self
            .layers
            .last()
            .ok_or_else(|| Error::InvalidArgument("critic needs at least one layer".into()))?;
        if last.out_width() != 1 {
            return Err(Error::shape(format!("last layer has width {}, expected 1", last.out_width())));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.out_width() {
                return Err(Error::shape(format!("layer {k}: bias length {}", layer.bias.len())));
            }
            if k > 0 && layer.in_width() != self.layers[k - 1].out_width() {
                return Err(Error::shape(format!(
                    "layer {k} takes {} inputs but layer {} emits {}",
                    layer.in_width(),
                    k - 1,
                    self.layers[k - 1].out_width()
                )));
            }
            if layer.weight.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("layer {k} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// All-zero parameters with the given architecture.
    pub fn zeros(arch: &[usize], d: usize) -> Result<Self> {
        check_arch(arch, d)?;
        let mut fan_in = d;
        let layers = arch
            .iter()
            .map(|&w| {
                let layer = Dense {
                    weight: Array2::zeros((w, fan_in)),
                    bias: Array1::zeros(w),
                };
                fan_in = w;
                layer
            })
            .collect();
        Ok(CriticParams { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn arch(&self) -> Vec<usize> {
        self.layers.iter().map(Dense::out_width).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

fn check_arch(arch: &[usize], d: usize) -> Result<()> {
    if arch.is_empty() {
        return Err(Error::InvalidArgument("empty critic architecture".into()));
    }
    if d == 0 || arch.contains(&0) {
        return Err(Error::InvalidArgument("layer widths must be positive".into()));
    }
    if *arch.last().unwrap() != 1 {
        return Err(Error::InvalidArgument("last layer width must be 1".into()));
    }
    Ok(())
}

/// He initialization: weights `N(0, 2 / fan_in)`, zero biases.
pub fn init_critic(arch: &[usize], d: usize, rng: &mut impl Rng) -> Result<CriticParams> {
    check_arch(arch, d)?;
    let mut fan_in = d;
    let mut layers = Vec::with_capacity(arch.len());
    for &w in arch {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        layers.push(Dense {
            weight: Array2::from_shape_simple_fn((w, fan_in), || normal.sample(rng)),
            bias: Array1::zeros(w),
        });
        fan_in = w;
    }
    Ok(CriticParams { layers })
}

/// Critic score of one line.
pub fn forward(params: &CriticParams, line: &[f64]) -> Result<f64> {
    diff::check_input(params, line.len())?;
    let x = ndarray::ArrayView2::from_shape((1, line.len()), line).expect("contiguous slice");
    Ok(diff::forward_batch(params, x).output()[0])
}

/// `α·real + (1 − α)·syn` with a fixed `α`.
pub fn interpolate_with(real: &[f64], syn: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if real.len() != syn.len() {
        return Err(Error::shape(format!("lines of length {} and {}", real.len(), syn.len())));
    }
    Ok(real.iter().zip(syn).map(|(r, s)| alpha * r + (1.0 - alpha) * s).collect())
}

/// Interpolate with `α ~ Unif(0, 1)`, one draw per line.
pub fn interpolate(real: &[f64], syn: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    let alpha: f64 = rng.random();
    interpolate_with(real, syn, alpha)
}

const CKPT_MAGIC: &[u8; 4] = b"UVCK";
const CKPT_VERSION: u32 = 1;

pub fn encode_checkpoint(params: &CriticParams) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + 8 * params.layers.len() + 4 * params.n_params());
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    for layer in &params.layers {
        let (rows, cols) = layer.weight.dim();
        buf.extend_from_slice(&(rows as u32).to_le_bytes());
        buf.extend_from_slice(&(cols as u32).to_le_bytes());
        for &v in layer.weight.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<CriticParams, String> {
    if bytes.len() < 12 || &bytes[0..4] != CKPT_MAGIC {
        return Err("bad checkpoint header".into());
    }
    let version = read_u32(bytes, 4);
    if version != CKPT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let n_layers = read_u32(bytes, 8) as usize;
    let mut at = 12;
    let take_f32s = |count: usize, at: &mut usize| -> std::result::Result<Vec<f64>, String> {
        let end = *at + 4 * count;
        if end > bytes.len() {
            return Err("truncated checkpoint payload".into());
        }
        let out = bytes[*at..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        *at = end;
        Ok(out)
    };
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        if at + 8 > bytes.len() {
            return Err("truncated layer header".into());
        }
        let rows = read_u32(bytes, at) as usize;
        let cols = read_u32(bytes, at + 4) as usize;
        at += 8;
        let w = take_f32s(rows * cols, &mut at)?;
        let b = take_f32s(rows, &mut at)?;
        layers.push(Dense {
            weight: Array2::from_shape_vec((rows, cols), w).map_err(|e| e.to_string())?,
            bias: Array1::from(b),
        });
    }
    if at != bytes.len() {
        return Err(format!("{} trailing bytes after last layer", bytes.len() - at));
    }
    CriticParams::new(layers).map_err(|e| e.to_string())
}

pub fn save_checkpoint(params: &CriticParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CriticParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|msg| Error::format(path, msg))
}
