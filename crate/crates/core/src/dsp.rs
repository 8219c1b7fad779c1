//! Spectral front end: STFT, Mel filterbank, log-Mel, chroma and the log-Mel L1
//! distance used as the reconstruction metric.
//!
//! Defaults target 24 kHz mono audio with a 1024-point Hann window and a 240
//! sample hop, i.e. 100 analysis frames per second (four frames per 25 Hz token).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::{Error, Matrix, Result};

pub const DEFAULT_SAMPLE_RATE: f64 = 24_000.0;
pub const DEFAULT_FFT_SIZE: usize = 1024;
pub const DEFAULT_HOP: usize = 240;
pub const DEFAULT_N_MELS: usize = 128;
pub const DEFAULT_LOG_EPS: f64 = 1e-5;
/// A4 reference for chroma folding.
pub const DEFAULT_REF_FREQ: f64 = 440.0;

/// Pitch-class index of A when C is class 0.
pub const PITCH_CLASS_A: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("waveform"));
        }
        if !samples.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFinite("waveform"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// STFT analysis settings. The window is always a periodic Hann window of
/// length `fft_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    /// Reflect-pad `fft_size / 2` samples on both ends so frame `u` is centred
    /// on sample `u * hop`.
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: DEFAULT_FFT_SIZE,
            hop: DEFAULT_HOP,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::param("fft_size", "must be a power of two >= 2"));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::param("hop", "must satisfy 0 < hop <= fft_size"));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if self.center {
            1 + len / self.hop
        } else if len <= self.fft_size {
            1
        } else {
            1 + (len - self.fft_size) / self.hop
        }
    }
}

/// One-sided complex spectrum, `frames × bins`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    values: Vec<Complex64>,
    sample_rate: f64,
    frame_rate: f64,
}

impl ComplexSpectrogram {
    pub fn from_values(
        frames: usize,
        bins: usize,
        values: Vec<Complex64>,
        sample_rate: f64,
        frame_rate: f64,
    ) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(Error::Shape {
                what: "spectrogram values",
                expected: (frames, bins),
                found: (values.len(), 1),
            });
        }
        if bins < 2 {
            return Err(Error::param("bins", "need at least two frequency bins"));
        }
        if !values.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Self {
            frames,
            bins,
            values,
            sample_rate,
            frame_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn fft_size(&self) -> usize {
        2 * (self.bins - 1)
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame(&self, u: usize) -> &[Complex64] {
        &self.values[u * self.bins..(u + 1) * self.bins]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn get(&self, u: usize, f: usize) -> Complex64 {
        self.values[u * self.bins + f]
    }

    /// Centre frequency in Hz of bin `f`.
    pub fn bin_frequency(&self, f: usize) -> f64 {
        f as f64 * self.sample_rate / self.fft_size() as f64
    }

    pub fn magnitudes(&self) -> Matrix {
        Matrix::from_fn(self.frames, self.bins, |u, f| self.get(u, f).norm())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            values: self.values.iter().map(|&c| f(c)).collect(),
            ..self.clone()
        }
    }
}

/// Mel magnitudes before the log, `frames × n_mels`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Matrix,
    pub frame_rate: f64,
}

/// Per-frame pitch-class profile, `frames × 12`. Each row has unit L2 norm or
/// is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Chromagram {
    pub values: Matrix,
    pub frame_rate: f64,
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * PI * i as f64 / n as f64))
        .collect()
}

/// In-place iterative radix-2 FFT. `buf.len()` must be a power of two.
pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = -2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (s, c) = libm::sincos(step * k as f64);
                let tw = Complex64::new(c, s);
                let a = buf[start + k];
                let b = buf[start + k + half] * tw;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Mirror index into `[0, len)` without repeating the edge sample.
fn reflect(mut j: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let n = len as isize;
    loop {
        if j < 0 {
            j = -j;
        } else if j >= n {
            j = 2 * (n - 1) - j;
        } else {
            return j as usize;
        }
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    let x = w.samples();
    let n = cfg.fft_size;
    let frames = cfg.frame_count(x.len());
    let bins = cfg.bins();
    let window = hann_window(n);
    let pad = if cfg.center { (n / 2) as isize } else { 0 };

    let mut values = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for u in 0..frames {
        let origin = (u * cfg.hop) as isize - pad;
        for (i, slot) in buf.iter_mut().enumerate() {
            let j = origin + i as isize;
            let s = if cfg.center {
                x[reflect(j, x.len())]
            } else if (j as usize) < x.len() {
                x[j as usize]
            } else {
                0.0
            };
            *slot = Complex64::new(s * window[i], 0.0);
        }
        fft_in_place(&mut buf);
        values.extend_from_slice(&buf[..bins]);
    }
    ComplexSpectrogram::from_values(
        frames,
        bins,
        values,
        w.sample_rate(),
        w.sample_rate() / cfg.hop as f64,
    )
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = libm::log(6.4) / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + libm::log(hz / MIN_LOG_HZ) / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = libm::log(6.4) / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * libm::exp(logstep * (mel - min_log_mel))
    } else {
        F_SP * mel
    }
}

/// Triangular Mel filterbank, `n_mels × (fft_size / 2 + 1)`, peak weight 1.
///
/// Fails when a filter is too narrow to cover any FFT bin.
pub fn mel_filterbank(
    sample_rate: f64,
    fft_size: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<Matrix> {
    if n_mels == 0 {
        return Err(Error::param("n_mels", "must be positive"));
    }
    if fft_size < 2 {
        return Err(Error::param("fft_size", "must be at least 2"));
    }
    if !(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0) {
        return Err(Error::param("fmin/fmax", "need 0 <= fmin < fmax <= sample_rate / 2"));
    }
    let bins = fft_size / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = fb.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * sample_rate / fft_size as f64;
            let rising = (f - lo) / (centre - lo);
            let falling = (hi - f) / (hi - centre);
            *w = rising.min(falling).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::Infeasible(alloc::format!(
                "mel band {m} ({lo:.1}-{hi:.1} Hz) contains no FFT bin; reduce n_mels"
            )));
        }
    }
    Ok(fb)
}

/// `fb · |X|` per frame.
pub fn mel_spectrogram(spec: &ComplexSpectrogram, fb: &Matrix) -> Result<MelSpectrogram> {
    if fb.cols() != spec.bins() {
        return Err(Error::Shape {
            what: "mel filterbank",
            expected: (fb.rows(), spec.bins()),
            found: fb.shape(),
        });
    }
    let mut values = Matrix::zeros(spec.frames(), fb.rows());
    for u in 0..spec.frames() {
        let frame = spec.frame(u);
        for m in 0..fb.rows() {
            values[(u, m)] = fb
                .row(m)
                .iter()
                .zip(frame)
                .filter(|(w, _)| **w != 0.0)
                .map(|(w, x)| w * x.norm())
                .sum();
        }
    }
    Ok(MelSpectrogram {
        values,
        frame_rate: spec.frame_rate(),
    })
}

/// `ln(fb · |X| + eps)`, `frames × n_mels`.
pub fn log_mel(spec: &ComplexSpectrogram, fb: &Matrix, eps: f64) -> Result<Matrix> {
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    let mel = mel_spectrogram(spec, fb)?;
    let data = mel
        .values
        .as_slice()
        .iter()
        .map(|v| libm::log(v + eps))
        .collect();
    Matrix::from_vec(mel.values.rows(), mel.values.cols(), data)
}

/// Pitch class (C = 0, ..., A = 9, ..., B = 11) of a frequency relative to an A4
/// reference, using the nearest semitone.
pub fn pitch_class(freq: f64, ref_freq: f64) -> usize {
    let semis = libm::round(12.0 * libm::log2(freq / ref_freq)) as i64;
    (semis + PITCH_CLASS_A as i64).rem_euclid(12) as usize
}

/// Folds squared magnitudes of every non-DC bin into 12 pitch classes and
/// L2-normalises each frame. Silent frames stay all-zero.
pub fn chroma(spec: &ComplexSpectrogram, ref_freq: f64) -> Result<Chromagram> {
    if !(ref_freq > 0.0 && ref_freq.is_finite()) {
        return Err(Error::param("ref_freq", "must be positive"));
    }
    let classes: Vec<usize> = (1..spec.bins())
        .map(|f| pitch_class(spec.bin_frequency(f), ref_freq))
        .collect();
    let mut values = Matrix::zeros(spec.frames(), 12);
    for u in 0..spec.frames() {
        let frame = spec.frame(u);
        let row = values.row_mut(u);
        for (x, &pc) in frame[1..].iter().zip(&classes) {
            row[pc] += x.norm_sqr();
        }
        let norm = crate::matrix::l2_norm(row);
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(Chromagram {
        values,
        frame_rate: spec.frame_rate(),
    })
}

/// Mean absolute difference between two log-Mel matrices.
pub fn mel_l1(a: &Matrix, b: &Matrix) -> Result<f64> {
    b.ensure_shape("log-mel operand", a.shape())?;
    if a.as_slice().is_empty() {
        return Err(Error::Empty("log-mel matrix"));
    }
    let total: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(total / a.as_slice().len() as f64)
}
