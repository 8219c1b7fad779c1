//! Dual-codebook SimVQ with hard vocal/accompaniment routing.
//!
//! Each route owns a frozen random codebook `C` (`K × d`) and a learnable basis
//! `W` (`d × d`). Quantization searches the effective codebook `C · W`, and
//! training updates only `W` with AdamW under a warmup-cosine schedule.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::matrix::sq_dist;
use crate::rng::{self, streams};
use crate::{Error, FeatureSequence, Matrix, Result};

pub const DEFAULT_CODE_DIM: usize = 16;
pub const DEFAULT_CODEBOOK_SIZE: usize = 32_768;
pub const DEFAULT_BETA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Route {
    Vocal,
    Accompaniment,
}

impl Route {
    pub const ALL: [Route; 2] = [Route::Vocal, Route::Accompaniment];

    pub fn code(self) -> u8 {
        match self {
            Route::Vocal => 0,
            Route::Accompaniment => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Route::Vocal),
            1 => Some(Route::Accompaniment),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Route::Vocal => "vocal",
            Route::Accompaniment => "accomp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vocal" | "vocals" => Some(Route::Vocal),
            "accomp" | "accompaniment" | "instr" => Some(Route::Accompaniment),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    c: Matrix,
    w: Matrix,
    seed: u64,
}

impl Codebook {
    /// `C` drawn from `N(0, 1)` on stream `stream_id`, `W = I`.
    pub fn random(seed: u64, stream_id: u64, size: usize, dim: usize) -> Result<Self> {
        if size == 0 || dim == 0 {
            return Err(Error::param("codebook shape", "K and d must be positive"));
        }
        let mut r = rng::stream(seed, stream_id);
        let c = Matrix::from_fn(size, dim, |_, _| rng::normal(&mut r));
        Ok(Self {
            c,
            w: Matrix::identity(dim),
            seed,
        })
    }

    pub fn from_parts(c: Matrix, w: Matrix, seed: u64) -> Result<Self> {
        if c.rows() == 0 || c.cols() == 0 {
            return Err(Error::param("codebook shape", "K and d must be positive"));
        }
        w.ensure_shape("codebook basis W", (c.cols(), c.cols()))?;
        if !c.is_finite() || !w.is_finite() {
            return Err(Error::NonFinite("codebook"));
        }
        Ok(Self { c, w, seed })
    }

    pub fn size(&self) -> usize {
        self.c.rows()
    }

    pub fn dim(&self) -> usize {
        self.c.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frozen(&self) -> &Matrix {
        &self.c
    }

    pub fn basis(&self) -> &Matrix {
        &self.w
    }

    /// `C · W`, computed fresh on every call.
    pub fn effective(&self) -> Matrix {
        effective_codebook(self)
    }
}

pub fn effective_codebook(cb: &Codebook) -> Matrix {
    cb.c.matmul(&cb.w).expect("W is d × d by construction")
}

/// Independent vocal and accompaniment codebooks of equal `(K, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCodebookBank {
    vocal: Codebook,
    accomp: Codebook,
}

impl DualCodebookBank {
    pub fn random(seed: u64, size: usize, dim: usize) -> Result<Self> {
        Ok(Self {
            vocal: Codebook::random(seed, streams::CODEBOOK_VOCAL, size, dim)?,
            accomp: Codebook::random(seed, streams::CODEBOOK_ACCOMP, size, dim)?,
        })
    }

    pub fn new(vocal: Codebook, accomp: Codebook) -> Result<Self> {
        if (vocal.size(), vocal.dim()) != (accomp.size(), accomp.dim()) {
            return Err(Error::Shape {
                what: "accompaniment codebook",
                expected: (vocal.size(), vocal.dim()),
                found: (accomp.size(), accomp.dim()),
            });
        }
        Ok(Self { vocal, accomp })
    }

    pub fn size(&self) -> usize {
        self.vocal.size()
    }

    pub fn dim(&self) -> usize {
        self.vocal.dim()
    }

    pub fn get(&self, route: Route) -> &Codebook {
        match route {
            Route::Vocal => &self.vocal,
            Route::Accompaniment => &self.accomp,
        }
    }

    pub fn get_mut(&mut self, route: Route) -> &mut Codebook {
        match route {
            Route::Vocal => &mut self.vocal,
            Route::Accompaniment => &mut self.accomp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeResult {
    pub indices: Vec<usize>,
    pub quantized: Matrix,
    /// `mean_t ‖sg[e_t] - q_t‖²`; carries the gradient into `W`.
    pub codebook_term: f64,
    /// `mean_t ‖e_t - sg[q_t]‖²`; same value, gradient only toward the encoder.
    pub commitment_term: f64,
}

/// Index of the nearest row of `codebook` to `v`; ties go to the lowest index.
pub fn nearest_code(codebook: &Matrix, v: &[f64]) -> usize {
    crate::bestrq::nearest_row(codebook, v)
}

pub fn quantize_with(e: &FeatureSequence, cb: &Codebook, beta: f64) -> Result<QuantizeResult> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", "must be finite and >= 0"));
    }
    if e.frames() == 0 {
        return Err(Error::Empty("feature sequence"));
    }
    if e.dim() != cb.dim() {
        return Err(Error::Shape {
            what: "features for codebook",
            expected: (e.frames(), cb.dim()),
            found: (e.frames(), e.dim()),
        });
    }
    let eff = cb.effective();
    let mut indices = Vec::with_capacity(e.frames());
    let mut quantized = Matrix::zeros(e.frames(), cb.dim());
    let mut total = 0.0;
    for t in 0..e.frames() {
        let k = nearest_code(&eff, e.frame(t));
        quantized.row_mut(t).copy_from_slice(eff.row(k));
        total += sq_dist(e.frame(t), eff.row(k));
        indices.push(k);
    }
    let mean = total / e.frames() as f64;
    Ok(QuantizeResult {
        indices,
        quantized,
        codebook_term: mean,
        commitment_term: mean,
    })
}

/// Quantizes `e` with the codebook selected by `route`; the other codebook is
/// never touched.
pub fn quantize(
    e: &FeatureSequence,
    bank: &DualCodebookBank,
    route: Route,
    beta: f64,
) -> Result<QuantizeResult> {
    quantize_with(e, bank.get(route), beta)
}

/// `codebook_term + beta · commitment_term`.
pub fn vq_loss(res: &QuantizeResult, beta: f64) -> f64 {
    res.codebook_term + beta * res.commitment_term
}

/// Gradient of `mean_t ‖e_t - C_{k(t)} W‖²` with respect to `W` for fixed
/// assignments: `-(2/U) Σ_t C_{k(t)}ᵀ (e_t - q_t)`. The commitment term has no
/// path to `W`.
pub fn vq_grad_w(e: &FeatureSequence, cb: &Codebook, assignments: &[usize]) -> Result<Matrix> {
    if assignments.len() != e.frames() {
        return Err(Error::Shape {
            what: "assignments",
            expected: (e.frames(), 1),
            found: (assignments.len(), 1),
        });
    }
    if e.frames() == 0 {
        return Err(Error::Empty("feature sequence"));
    }
    if e.dim() != cb.dim() {
        return Err(Error::Shape {
            what: "features for codebook",
            expected: (e.frames(), cb.dim()),
            found: (e.frames(), e.dim()),
        });
    }
    let d = cb.dim();
    let scale = -2.0 / e.frames() as f64;
    let mut grad = Matrix::zeros(d, d);
    let mut q = vec![0.0; d];
    for (t, &k) in assignments.iter().enumerate() {
        if k >= cb.size() {
            return Err(Error::IndexOutOfRange {
                index: k,
                bound: cb.size(),
            });
        }
        let c = cb.c.row(k);
        for (j, qj) in q.iter_mut().enumerate() {
            *qj = c.iter().enumerate().map(|(i, ci)| ci * cb.w[(i, j)]).sum();
        }
        let et = e.frame(t);
        for (i, &ci) in c.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            for j in 0..d {
                grad[(i, j)] += scale * ci * (et[j] - q[j]);
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.96,
            weight_decay: 0.1,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: Matrix,
    pub v: Matrix,
    pub step: u64,
}

impl AdamWState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: Matrix::zeros(dim, dim),
            v: Matrix::zeros(dim, dim),
            step: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update of `cb`'s basis:
/// `W ← W - lr · (m̂ / (√v̂ + eps) + wd · W)`.
pub fn adamw_step(
    cb: &mut Codebook,
    grad: &Matrix,
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    if !(lr >= 0.0) {
        return Err(Error::param("lr", "must be >= 0"));
    }
    grad.ensure_shape("gradient", cb.w.shape())?;
    state.m.ensure_shape("adam first moment", cb.w.shape())?;
    state.v.ensure_shape("adam second moment", cb.w.shape())?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    let w = cb.w.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((wi, mi), vi), &g) in w.iter_mut().zip(m).zip(v).zip(grad.as_slice()) {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
        let m_hat = *mi / bc1;
        let v_hat = *vi / bc2;
        *wi -= lr * (m_hat / (libm::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * *wi);
    }
    Ok(())
}

/// Linear warmup to `peak_lr`, then repeating cosine cycles measured from the
/// end of warmup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub cycle_steps: u64,
}

impl ScheduleConfig {
    pub const STAGE1: ScheduleConfig = ScheduleConfig {
        peak_lr: 3e-4,
        warmup_steps: 5_000,
        cycle_steps: 50_000,
    };
    pub const STAGE2: ScheduleConfig = ScheduleConfig {
        peak_lr: 1e-4,
        warmup_steps: 3_000,
        cycle_steps: 80_000,
    };
    pub const STAGE3: ScheduleConfig = ScheduleConfig {
        peak_lr: 1e-4,
        warmup_steps: 3_000,
        cycle_steps: 30_000,
    };

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 {
            return Err(Error::param("warmup_steps", "must be >= 1"));
        }
        if self.cycle_steps == 0 {
            return Err(Error::param("cycle_steps", "must be >= 1"));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::param("peak_lr", "must be finite and >= 0"));
        }
        Ok(())
    }
}

pub fn lr_at(step: u64, sch: &ScheduleConfig) -> f64 {
    if step < sch.warmup_steps {
        return sch.peak_lr * step as f64 / sch.warmup_steps as f64;
    }
    let phase = ((step - sch.warmup_steps) % sch.cycle_steps) as f64 / sch.cycle_steps as f64;
    sch.peak_lr * 0.5 * (1.0 + libm::cos(2.0 * PI * phase))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookStats {
    /// Distinct codes used divided by `K`.
    pub utilization: f64,
    /// Shannon entropy of the empirical code histogram, in nats.
    pub entropy: f64,
}

pub fn codebook_stats(indices: &[usize], size: usize) -> Result<CodebookStats> {
    if indices.is_empty() {
        return Err(Error::Empty("index sequence"));
    }
    let mut hist = vec![0usize; size];
    for &k in indices {
        if k >= size {
            return Err(Error::IndexOutOfRange { index: k, bound: size });
        }
        hist[k] += 1;
    }
    let n = indices.len() as f64;
    let used = hist.iter().filter(|&&c| c > 0).count();
    let entropy = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum::<f64>()
        .max(0.0);
    Ok(CodebookStats {
        utilization: used as f64 / size as f64,
        entropy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// 1-based optimisation step.
    pub step: u64,
    pub route: Route,
    pub lr: f64,
    /// Loss of the batch before this step's update.
    pub vq_loss: f64,
    pub utilization: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub beta: f64,
    pub schedule: ScheduleConfig,
    pub adamw: AdamWConfig,
    pub steps: u64,
}

/// Optimises each route's `W` on the batches carrying that route.
///
/// Step `s` (1-based) consumes batch `(s - 1) mod n_batches`, quantizes it with
/// its route's codebook, and applies one AdamW update at `lr_at(s)` to that
/// codebook only. Each route keeps its own optimiser state.
pub fn train_w(
    batches: &[(FeatureSequence, Route)],
    bank: &mut DualCodebookBank,
    cfg: &TrainConfig,
) -> Result<Vec<TrainRecord>> {
    if batches.is_empty() {
        return Err(Error::Empty("training batches"));
    }
    cfg.schedule.validate()?;
    let d = bank.dim();
    let mut states = [AdamWState::new(d), AdamWState::new(d)];
    let mut log = Vec::with_capacity(cfg.steps as usize);
    for step in 1..=cfg.steps {
        let (e, route) = &batches[((step - 1) % batches.len() as u64) as usize];
        let cb = bank.get_mut(*route);
        let res = quantize_with(e, cb, cfg.beta)?;
        let stats = codebook_stats(&res.indices, cb.size())?;
        let grad = vq_grad_w(e, cb, &res.indices)?;
        let lr = lr_at(step, &cfg.schedule);
        adamw_step(cb, &grad, &mut states[route.code() as usize], lr, &cfg.adamw)?;
        log.push(TrainRecord {
            step,
            route: *route,
            lr,
            vq_loss: vq_loss(&res, cfg.beta),
            utilization: stats.utilization,
            entropy: stats.entropy,
        });
    }
    Ok(log)
}
