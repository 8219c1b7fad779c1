//! Pre-quantization bottleneck: feature sequences, Gaussian replacement noise
//! and a seeded affine stand-in for the frozen encoder.

use alloc::vec::Vec;

use crate::rng::{self, streams};
use crate::{Error, Matrix, Result};

/// Time-major feature matrix (`frames × dim`) with its frame rate in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    values: Matrix,
    frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(values: Matrix, frame_rate: f64) -> Result<Self> {
        if values.cols() == 0 {
            return Err(Error::param("feature dim", "must be positive"));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("feature sequence"));
        }
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(Error::param("frame_rate", "must be positive"));
        }
        Ok(Self { values, frame_rate })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }
}

/// Replacement probability `p`, noise scale `sigma` and the seed of the
/// per-frame noise streams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplacementConfig {
    pub p: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl ReplacementConfig {
    /// Stage-2 setting `(p, sigma) = (0.2, 1.0)`.
    pub fn stage2(seed: u64) -> Self {
        Self {
            p: 0.2,
            sigma: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", "must lie in [0, 1]"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Replaces whole frames with `N(0, sigma^2 I)` draws, each frame
/// independently with probability `p`.
///
/// Frame `t` draws from its own stream `(seed, t)`: one uniform for the
/// Bernoulli mask followed by `dim` normals, so the outcome for frame `t` does
/// not depend on the sequence length. Unreplaced frames are copied bit for bit.
pub fn gaussian_replace(
    h: &FeatureSequence,
    cfg: &ReplacementConfig,
) -> Result<(FeatureSequence, Vec<bool>)> {
    cfg.validate()?;
    let mut out = h.values.clone();
    let mut mask = Vec::with_capacity(h.frames());
    for t in 0..h.frames() {
        let mut rng = rng::stream(cfg.seed, t as u64);
        let replaced = rng::uniform(&mut rng) < cfg.p;
        if replaced {
            for v in out.row_mut(t) {
                *v = cfg.sigma * rng::normal(&mut rng);
            }
        }
        mask.push(replaced);
    }
    Ok((
        FeatureSequence {
            values: out,
            frame_rate: h.frame_rate,
        },
        mask,
    ))
}

/// Applies replacement noise in training mode and passes features through
/// untouched in evaluation mode.
pub fn apply_bottleneck(
    h: &FeatureSequence,
    cfg: &ReplacementConfig,
    mode: Mode,
) -> Result<(FeatureSequence, Vec<bool>)> {
    match mode {
        Mode::Train => gaussian_replace(h, cfg),
        Mode::Eval => Ok((h.clone(), alloc::vec![false; h.frames()])),
    }
}

pub fn replacement_fraction(mask: &[bool]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Empty("replacement mask"));
    }
    Ok(mask.iter().filter(|&&m| m).count() as f64 / mask.len() as f64)
}

/// Frozen affine map `x · W + b` standing in for the trained encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    weight: Matrix,
    bias: Vec<f64>,
    seed: u64,
}

impl ToyEncoder {
    /// Weights `N(0, 1/d_in)`, bias `N(0, 0.01)`, all from `seed`.
    pub fn new(seed: u64, d_in: usize, d: usize) -> Result<Self> {
        if d_in == 0 || d == 0 {
            return Err(Error::param("encoder dims", "must be positive"));
        }
        let scale = 1.0 / libm::sqrt(d_in as f64);
        let mut wr = rng::stream(seed, streams::ENCODER_WEIGHT);
        let weight = Matrix::from_fn(d_in, d, |_, _| scale * rng::normal(&mut wr));
        let mut br = rng::stream(seed, streams::ENCODER_BIAS);
        let bias = (0..d).map(|_| 0.1 * rng::normal(&mut br)).collect();
        Ok(Self { weight, bias, seed })
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>, seed: u64) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::Shape {
                what: "encoder bias",
                expected: (weight.cols(), 1),
                found: (bias.len(), 1),
            });
        }
        Ok(Self { weight, bias, seed })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn encode(&self, input: &Matrix, frame_rate: f64) -> Result<FeatureSequence> {
        toy_encode(input, self, frame_rate)
    }
}

pub fn toy_encode(input: &Matrix, enc: &ToyEncoder, frame_rate: f64) -> Result<FeatureSequence> {
    if input.cols() != enc.weight.rows() {
        return Err(Error::Shape {
            what: "encoder input",
            expected: (input.rows(), enc.weight.rows()),
            found: input.shape(),
        });
    }
    let mut out = input.matmul(&enc.weight)?;
    for t in 0..out.rows() {
        for (o, b) in out.row_mut(t).iter_mut().zip(&enc.bias) {
            *o += b;
        }
    }
    FeatureSequence::new(out, frame_rate)
}
