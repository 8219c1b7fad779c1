//! Numerical core of the Duo-Tok dual-track music tokenizer.
//!
//! Everything here is a pure function of its inputs (and an explicit seed where
//! randomness is involved). The crate is `no_std` and only needs `alloc`; file
//! formats, WAV decoding and the command-line driver live in the `duotok` crate.
//!
//! Module map:
//!
//! - [`dsp`]: STFT, Mel filterbank, log-Mel, chroma, log-Mel L1 distance.
//! - [`bestrq`]: frozen random-projection quantizer, span masking, masked-frame loss.
//! - [`bottleneck`]: feature sequences, Gaussian replacement noise, toy encoder.
//! - [`simvq`]: dual frozen codebooks with a learnable basis, quantization, AdamW, schedules.
//! - [`losses`]: CTC, spectral losses, MSS masks, SI-SNR, diffusion terms, stage combinators.
//! - [`data`]: lyric-aligned clip segmentation and sample-type mixing.
//! - [`tokens`]: token containers, dual-track alignment, bitrate arithmetic.
//! - [`lmeval`]: cross-entropy, top-k accuracy, PPL@1024, vocal-conditioned evaluation.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod bestrq;
pub mod bottleneck;
pub mod data;
pub mod dsp;
mod error;
pub mod lmeval;
pub mod losses;
pub mod matrix;
pub mod rng;
pub mod simvq;
pub mod tokens;

pub use bottleneck::FeatureSequence;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use simvq::Route;
