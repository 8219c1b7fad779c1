//! Objective library for the auxiliary heads, the discretisation stage and
//! the latent diffusion decoder.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::dsp::ComplexSpectrogram;
use crate::{Error, Matrix, Result};

/// SI-SNR values are clamped to `±SI_SNR_CAP_DB`; a zero residual maps to the
/// upper cap.
pub const SI_SNR_CAP_DB: f64 = 100.0;

/// Stems in the separation target (vocals, bass, drums, other).
pub const DEFAULT_STEMS: usize = 4;

/// `κ` for the MSS loss: a mask off by `1` in every real part over 4 stems,
/// 513 bins and 100 frames scores exactly 1.
pub const DEFAULT_MSS_KAPPA: f64 = 1.0 / (4.0 * 513.0 * 100.0);

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + libm::log(libm::exp(a - m) + libm::exp(b - m))
}

fn check_distribution_rows(log_probs: &Matrix) -> Result<()> {
    for (row, r) in log_probs.iter_rows().enumerate() {
        let sum: f64 = r.iter().map(|&l| libm::exp(l)).sum();
        if !((sum - 1.0).abs() <= 1e-6) {
            return Err(Error::NotNormalized { row, sum });
        }
    }
    Ok(())
}

/// Minimum number of frames an alignment of `target` needs: one per label plus
/// a separating blank between equal neighbours.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_ctc_inputs(log_probs: &Matrix, target: &[usize]) -> Result<usize> {
    let classes = log_probs.cols();
    if classes < 2 {
        return Err(Error::param("ctc classes", "need at least one label plus blank"));
    }
    let blank = classes - 1;
    if target.is_empty() {
        return Err(Error::Empty("ctc target"));
    }
    if let Some(&bad) = target.iter().find(|&&y| y >= blank) {
        return Err(Error::IndexOutOfRange { index: bad, bound: blank });
    }
    check_distribution_rows(log_probs)?;
    let need = ctc_min_frames(target);
    if log_probs.rows() < need {
        return Err(Error::Infeasible(alloc::format!(
            "{} frames cannot align a target needing {need}",
            log_probs.rows()
        )));
    }
    Ok(blank)
}

/// Negative log-probability of all alignments collapsing to `target`.
///
/// `log_probs` is `U × (V + 1)` with the blank in the last column. Collapse
/// merges repeats, then removes blanks. Infeasible targets (too few frames or
/// zero total probability) are reported as errors.
pub fn ctc_loss(log_probs: &Matrix, target: &[usize]) -> Result<f64> {
    let blank = check_ctc_inputs(log_probs, target)?;
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(blank);
    for &y in target {
        ext.push(y);
        ext.push(blank);
    }
    let s_len = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; s_len];
    alpha[0] = log_probs[(0, blank)];
    alpha[1] = log_probs[(0, ext[1])];
    let mut next = vec![f64::NEG_INFINITY; s_len];
    for u in 1..log_probs.rows() {
        for s in 0..s_len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add(acc, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != blank && ext[s] != ext[s - 2] {
                acc = log_add(acc, alpha[s - 2]);
            }
            next[s] = acc + log_probs[(u, ext[s])];
        }
        core::mem::swap(&mut alpha, &mut next);
    }
    let total = log_add(alpha[s_len - 1], alpha[s_len - 2]);
    if total == f64::NEG_INFINITY {
        return Err(Error::ZeroProbability);
    }
    Ok(-total)
}

/// Collapse of a frame-level path: merge repeats, then drop blanks.
pub fn ctc_collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Reference CTC by enumerating every `(V + 1)^U` path. Limited to `U <= 8`
/// and at most `10^7` paths.
pub fn ctc_brute_force(log_probs: &Matrix, target: &[usize]) -> Result<f64> {
    let (frames, classes) = log_probs.shape();
    if frames > 8 {
        return Err(Error::GuardExceeded(alloc::format!("U = {frames} > 8")));
    }
    let paths = (classes as u64).checked_pow(frames as u32).unwrap_or(u64::MAX);
    if paths > 10_000_000 {
        return Err(Error::GuardExceeded(alloc::format!("{paths} paths > 1e7")));
    }
    let blank = check_ctc_inputs(log_probs, target)?;
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    for mut code in 0..paths {
        for p in path.iter_mut() {
            *p = (code % classes as u64) as usize;
            code /= classes as u64;
        }
        if ctc_collapse(&path, blank) == target {
            let lp: f64 = path.iter().enumerate().map(|(u, &c)| log_probs[(u, c)]).sum();
            total += libm::exp(lp);
        }
    }
    if total == 0.0 {
        return Err(Error::ZeroProbability);
    }
    Ok(-libm::log(total))
}

fn frobenius(m: impl Iterator<Item = f64>) -> f64 {
    libm::sqrt(m.map(|v| v * v).sum())
}

/// `‖Ŝ - S‖_F / ‖S‖_F`.
pub fn spectral_convergence(s_hat: &Matrix, s: &Matrix) -> Result<f64> {
    s_hat.ensure_shape("predicted spectrogram", s.shape())?;
    let den = frobenius(s.as_slice().iter().copied());
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = frobenius(s_hat.as_slice().iter().zip(s.as_slice()).map(|(a, b)| a - b));
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// `Σ |log(Ŝ + eps) - log(S + eps)|`, averaged over entries under
/// [`Reduction::Mean`].
pub fn log_magnitude_loss(s_hat: &Matrix, s: &Matrix, eps: f64, reduction: Reduction) -> Result<f64> {
    s_hat.ensure_shape("predicted spectrogram", s.shape())?;
    if !(eps > 0.0) {
        return Err(Error::param("eps", "must be positive"));
    }
    if s_hat.as_slice().iter().chain(s.as_slice()).any(|&v| v < 0.0) {
        return Err(Error::param("magnitudes", "entries must be >= 0"));
    }
    let n = s.as_slice().len();
    if n == 0 {
        return Err(Error::Empty("spectrogram"));
    }
    let sum: f64 = s_hat
        .as_slice()
        .iter()
        .zip(s.as_slice())
        .map(|(a, b)| (libm::log(a + eps) - libm::log(b + eps)).abs())
        .sum();
    Ok(match reduction {
        Reduction::Mean => sum / n as f64,
        Reduction::Sum => sum,
    })
}

/// Complex mask over one stem, `bins × frames`, bin-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMask {
    bins: usize,
    frames: usize,
    values: Vec<Complex64>,
}

impl ComplexMask {
    pub fn new(bins: usize, frames: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != bins * frames {
            return Err(Error::Shape {
                what: "mask values",
                expected: (bins, frames),
                found: (values.len(), 1),
            });
        }
        Ok(Self { bins, frames, values })
    }

    pub fn filled(bins: usize, frames: usize, value: Complex64) -> Self {
        Self {
            bins,
            frames,
            values: vec![value; bins * frames],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn get(&self, f: usize, u: usize) -> Complex64 {
        self.values[f * self.frames + u]
    }

    pub fn set(&mut self, f: usize, u: usize, v: Complex64) {
        self.values[f * self.frames + u] = v;
    }
}

/// `Ŷ = M̂ ⊙ X` for one stem.
pub fn apply_mask(mask: &ComplexMask, x: &ComplexSpectrogram) -> Result<ComplexSpectrogram> {
    if mask.shape() != (x.bins(), x.frames()) {
        return Err(Error::Shape {
            what: "mask for spectrogram",
            expected: (x.bins(), x.frames()),
            found: mask.shape(),
        });
    }
    let mut values = Vec::with_capacity(x.frames() * x.bins());
    for u in 0..x.frames() {
        for (f, &xv) in x.frame(u).iter().enumerate() {
            values.push(mask.get(f, u) * xv);
        }
    }
    ComplexSpectrogram::from_values(x.frames(), x.bins(), values, x.sample_rate(), x.frame_rate())
}

/// `κ Σ_s Σ_f Σ_u (|Re(M̂ - M)| + |Im(M̂ - M)|)`, summed rather than averaged.
pub fn mss_mask_loss(m_hat: &[ComplexMask], m: &[ComplexMask], kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", "must be positive"));
    }
    if m_hat.len() != m.len() {
        return Err(Error::Shape {
            what: "stem count",
            expected: (m.len(), 1),
            found: (m_hat.len(), 1),
        });
    }
    let mut total = 0.0;
    for (a, b) in m_hat.iter().zip(m) {
        if a.shape() != b.shape() {
            return Err(Error::Shape {
                what: "stem mask",
                expected: b.shape(),
                found: a.shape(),
            });
        }
        total += a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| {
                let d = x - y;
                d.re.abs() + d.im.abs()
            })
            .sum::<f64>();
    }
    Ok(kappa * total)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ensure_same_len(what: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            what,
            expected: (b.len(), 1),
            found: (a.len(), 1),
        });
    }
    Ok(())
}

/// Scale-invariant SNR of `y_hat` against reference `y`, in dB, clamped to
/// `±SI_SNR_CAP_DB`.
pub fn si_snr(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    ensure_same_len("estimate", y_hat, y)?;
    let yy = dot(y, y);
    if yy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let scale = dot(y_hat, y) / yy;
    let (mut p, mut r) = (0.0, 0.0);
    for (a, b) in y_hat.iter().zip(y) {
        let proj = scale * b;
        p += proj * proj;
        r += (a - proj) * (a - proj);
    }
    if r == 0.0 {
        return Ok(if p == 0.0 { -SI_SNR_CAP_DB } else { SI_SNR_CAP_DB });
    }
    let db = 10.0 * libm::log10(p / r);
    Ok(db.clamp(-SI_SNR_CAP_DB, SI_SNR_CAP_DB))
}

/// Per-timestep `(α_t, σ_t)` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alpha: Vec<f64>,
    sigma: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn new(alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::Empty("diffusion schedule"));
        }
        ensure_same_len("sigma", &sigma, &alpha)?;
        if alpha.iter().chain(&sigma).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::param("schedule", "alpha and sigma must be finite and >= 0"));
        }
        Ok(Self { alpha, sigma })
    }

    /// Like [`new`](Self::new) but also requires `α_t² + σ_t² = 1` within 1e-9.
    pub fn variance_preserving(alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let s = Self::new(alpha, sigma)?;
        if !s.is_variance_preserving(1e-9) {
            return Err(Error::param("schedule", "alpha^2 + sigma^2 must equal 1"));
        }
        Ok(s)
    }

    /// `α_t = cos(πt / 2T)`, `σ_t = sin(πt / 2T)`.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Empty("diffusion schedule"));
        }
        let (sigma, alpha) = (1..=steps)
            .map(|t| libm::sincos(core::f64::consts::PI * t as f64 / (2.0 * steps as f64)))
            .unzip();
        Self::variance_preserving(alpha, sigma)
    }

    pub fn steps(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_variance_preserving(&self, tol: f64) -> bool {
        self.alpha
            .iter()
            .zip(&self.sigma)
            .all(|(a, s)| (a * a + s * s - 1.0).abs() <= tol)
    }

    /// `(α_t, σ_t)` for 1-based `t`.
    pub fn at(&self, t: usize) -> Result<(f64, f64)> {
        if t == 0 || t > self.steps() {
            return Err(Error::IndexOutOfRange {
                index: t,
                bound: self.steps() + 1,
            });
        }
        Ok((self.alpha[t - 1], self.sigma[t - 1]))
    }
}

/// `z_t = α_t y + σ_t ε`.
pub fn noise_latent(y: &[f64], eps: &[f64], t: usize, sch: &DiffusionSchedule) -> Result<Vec<f64>> {
    ensure_same_len("noise", eps, y)?;
    let (a, s) = sch.at(t)?;
    Ok(y.iter().zip(eps).map(|(yv, ev)| a * yv + s * ev).collect())
}

/// How the network output fed to [`denoised_estimate`] is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Prediction {
    /// `ŷ = α_t z_t - σ_t · pred`, the estimate exactly as written for the
    /// decoder objective. Recovers `y` when `pred = α_t ε - σ_t y` on a
    /// variance-preserving schedule.
    #[default]
    Velocity,
    /// `ŷ = (z_t - σ_t · pred) / α_t`; recovers `y` when `pred = ε`.
    Epsilon,
}

pub fn denoised_estimate(
    z_t: &[f64],
    pred: &[f64],
    t: usize,
    sch: &DiffusionSchedule,
    prediction: Prediction,
) -> Result<Vec<f64>> {
    ensure_same_len("prediction", pred, z_t)?;
    let (a, s) = sch.at(t)?;
    match prediction {
        Prediction::Velocity => Ok(z_t.iter().zip(pred).map(|(z, p)| a * z - s * p).collect()),
        Prediction::Epsilon => {
            if a == 0.0 {
                return Err(Error::param("alpha_t", "epsilon recovery needs alpha_t > 0"));
            }
            Ok(z_t.iter().zip(pred).map(|(z, p)| (z - s * p) / a).collect())
        }
    }
}

/// Mean squared error between predicted and true noise.
pub fn eps_loss(pred: &[f64], eps: &[f64]) -> Result<f64> {
    ensure_same_len("prediction", pred, eps)?;
    if eps.is_empty() {
        return Err(Error::Empty("noise"));
    }
    Ok(pred.iter().zip(eps).map(|(p, e)| (e - p) * (e - p)).sum::<f64>() / eps.len() as f64)
}

/// `-(SI-SNR(ŷ_t, y) - SI-SNR(z_t, y))`; negative when the estimate beats the
/// noisy latent.
pub fn si_improvement_loss(y_hat_t: &[f64], z_t: &[f64], y: &[f64]) -> Result<f64> {
    Ok(-(si_snr(y_hat_t, y)? - si_snr(z_t, y)?))
}

/// Loss weights for every stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageWeights {
    pub lambda_ctc: f64,
    pub lambda_mel: f64,
    pub lambda_chr: f64,
    pub lambda_mss: f64,
    pub lambda_vq: f64,
    pub lambda_si: f64,
}

impl Default for StageWeights {
    /// CTC : Mel : Chroma : MSS = 0.5 : 1 : 1 : 1, Mel : Chroma : VQ = 1 : 1 : 1,
    /// SI-SNR improvement weight 1.
    fn default() -> Self {
        Self {
            lambda_ctc: 0.5,
            lambda_mel: 1.0,
            lambda_chr: 1.0,
            lambda_mss: 1.0,
            lambda_vq: 1.0,
            lambda_si: 1.0,
        }
    }
}

impl StageWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_ctc,
            self.lambda_mel,
            self.lambda_chr,
            self.lambda_mss,
            self.lambda_vq,
            self.lambda_si,
        ];
        if all.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::param("loss weights", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stage2Terms {
    pub ctc: f64,
    pub mel_sc: f64,
    pub mel_mag: f64,
    pub chr_sc: f64,
    pub chr_mag: f64,
    pub mss: f64,
}

/// Stage-3 keeps the Mel and chroma reconstruction terms and adds VQ; it has
/// no CTC or MSS slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stage3Terms {
    pub mel_sc: f64,
    pub mel_mag: f64,
    pub chr_sc: f64,
    pub chr_mag: f64,
    pub vq: f64,
}

fn check_terms(terms: &[f64]) -> Result<()> {
    if terms.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::param("loss components", "must be finite and >= 0"));
    }
    Ok(())
}

pub fn stage2_objective(c: &Stage2Terms, w: &StageWeights) -> Result<f64> {
    w.validate()?;
    check_terms(&[c.ctc, c.mel_sc, c.mel_mag, c.chr_sc, c.chr_mag, c.mss])?;
    Ok(w.lambda_ctc * c.ctc
        + w.lambda_mel * (c.mel_sc + c.mel_mag)
        + w.lambda_chr * (c.chr_sc + c.chr_mag)
        + w.lambda_mss * c.mss)
}

pub fn stage3_objective(c: &Stage3Terms, w: &StageWeights) -> Result<f64> {
    w.validate()?;
    check_terms(&[c.mel_sc, c.mel_mag, c.chr_sc, c.chr_mag, c.vq])?;
    Ok(w.lambda_mel * (c.mel_sc + c.mel_mag) + w.lambda_chr * (c.chr_sc + c.chr_mag) + w.lambda_vq * c.vq)
}

/// `L_eps + λ_SI · L_SI`. `L_SI` may be negative.
pub fn diffusion_loss(eps_l: f64, si_l: f64, lambda_si: f64) -> f64 {
    eps_l + lambda_si * si_l
}
