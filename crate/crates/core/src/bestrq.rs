//! Frozen random-projection quantizer targets, span masking over time frames
//! and the masked-frame cross-entropy objective used for self-supervised
//! pretraining.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::{l2_norm, sq_dist};
use crate::rng::{self, streams};
use crate::{Error, FeatureSequence, Matrix, Result};

pub const DEFAULT_PROJ_DIM: usize = 16;
pub const DEFAULT_CODEBOOK_SIZE: usize = 8192;
pub const DEFAULT_MASK_RATIO: f64 = 0.4;
pub const DEFAULT_SPAN_LEN: usize = 4;

/// Projection `d_in × d_proj` and unit-norm codebook `K × d_proj`, both
/// regenerated from `(seed, d_in, d_proj, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomQuantizer {
    seed: u64,
    projection: Matrix,
    codebook: Matrix,
}

impl RandomQuantizer {
    pub fn new(seed: u64, d_in: usize, d_proj: usize, codebook_size: usize) -> Result<Self> {
        init_random_quantizer(seed, d_in, d_proj, codebook_size)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.projection.rows()
    }

    pub fn proj_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn codebook_size(&self) -> usize {
        self.codebook.rows()
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn codebook(&self) -> &Matrix {
        &self.codebook
    }

    /// Projected frame, L2-normalised unless its norm is zero.
    pub fn project(&self, frame: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.proj_dim()];
        for (x, w) in frame.iter().zip(self.projection.iter_rows()) {
            for (pj, wj) in p.iter_mut().zip(w) {
                *pj += x * wj;
            }
        }
        let n = l2_norm(&p);
        if n > 0.0 {
            p.iter_mut().for_each(|v| *v /= n);
        }
        p
    }
}

pub fn init_random_quantizer(
    seed: u64,
    d_in: usize,
    d_proj: usize,
    codebook_size: usize,
) -> Result<RandomQuantizer> {
    if d_in == 0 || d_proj == 0 {
        return Err(Error::param("quantizer dims", "must be positive"));
    }
    if codebook_size < 2 {
        return Err(Error::param("codebook_size", "need at least 2 codes"));
    }
    let mut pr = rng::stream(seed, streams::RQ_PROJECTION);
    let projection = Matrix::from_fn(d_in, d_proj, |_, _| rng::normal(&mut pr));
    let mut cr = rng::stream(seed, streams::RQ_CODEBOOK);
    let mut codebook = Matrix::from_fn(codebook_size, d_proj, |_, _| rng::normal(&mut cr));
    for k in 0..codebook_size {
        let row = codebook.row_mut(k);
        let n = l2_norm(row);
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(RandomQuantizer {
        seed,
        projection,
        codebook,
    })
}

/// Nearest codebook row of every normalised projected frame; ties go to the
/// lowest index. A frame whose projection is exactly zero is compared
/// unnormalised, so it lands on the code with the smallest stored norm.
pub fn assign_targets(features: &FeatureSequence, rq: &RandomQuantizer) -> Result<Vec<usize>> {
    if features.dim() != rq.input_dim() {
        return Err(Error::Shape {
            what: "features for random quantizer",
            expected: (features.frames(), rq.input_dim()),
            found: (features.frames(), features.dim()),
        });
    }
    Ok((0..features.frames())
        .map(|t| {
            let p = rq.project(features.frame(t));
            nearest_row(&rq.codebook, &p)
        })
        .collect())
}

pub(crate) fn nearest_row(codebook: &Matrix, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in codebook.iter_rows().enumerate() {
        let d = sq_dist(v, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Per-frame mask flags built from a union of `span_len`-frame spans.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPlan {
    pub flags: Vec<bool>,
    pub span_len: usize,
    pub target_ratio: f64,
}

impl MaskPlan {
    pub fn masked_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_count() as f64 / self.flags.len() as f64
    }

    pub fn masked_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(t, &f)| f.then_some(t))
    }
}

/// Draws span starts uniformly from `[0, U - span_len]` and masks
/// `span_len` frames at each until at least `round(ratio * U)` frames are
/// masked. The result overshoots the target by fewer than `span_len` frames.
pub fn sample_mask(frames: usize, ratio: f64, span_len: usize, seed: u64) -> Result<MaskPlan> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::param("mask ratio", "must lie in (0, 1)"));
    }
    if span_len == 0 {
        return Err(Error::param("span_len", "must be positive"));
    }
    if frames < span_len {
        return Err(Error::Infeasible(alloc::format!(
            "{frames} frames cannot hold a span of {span_len}"
        )));
    }
    if ratio * (frames as f64) < 1.0 {
        return Err(Error::Infeasible(alloc::format!(
            "ratio {ratio} masks less than one of {frames} frames"
        )));
    }
    let target = libm::round(ratio * frames as f64) as usize;
    let starts = frames - span_len + 1;
    let mut rng = rng::stream(seed, streams::MASK);
    let mut flags = vec![false; frames];
    let mut count = 0;
    while count < target {
        let s = rand::Rng::random_range(&mut rng, 0..starts);
        for f in &mut flags[s..s + span_len] {
            if !*f {
                *f = true;
                count += 1;
            }
        }
    }
    Ok(MaskPlan {
        flags,
        span_len,
        target_ratio: ratio,
    })
}

fn check_target(row: usize, log_probs: &Matrix, target: usize) -> Result<f64> {
    if target >= log_probs.cols() {
        return Err(Error::IndexOutOfRange {
            index: target,
            bound: log_probs.cols(),
        });
    }
    let r = log_probs.row(row);
    let sum: f64 = r.iter().map(|&l| libm::exp(l)).sum();
    if !((sum - 1.0).abs() <= 1e-6) {
        return Err(Error::NotNormalized { row, sum });
    }
    Ok(-r[target])
}

/// `-Σ_{t ∈ masked} log p(q_t | h_t)`. Only masked rows are read or
/// validated.
pub fn mlm_loss(log_probs: &Matrix, targets: &[usize], plan: &MaskPlan) -> Result<f64> {
    if targets.len() != log_probs.rows() || plan.flags.len() != log_probs.rows() {
        return Err(Error::Shape {
            what: "mlm targets/mask",
            expected: (log_probs.rows(), 1),
            found: (targets.len(), plan.flags.len()),
        });
    }
    plan.masked_indices()
        .map(|t| check_target(t, log_probs, targets[t]))
        .sum()
}

/// [`mlm_loss`] divided by the number of masked frames.
pub fn mlm_loss_mean(log_probs: &Matrix, targets: &[usize], plan: &MaskPlan) -> Result<f64> {
    let m = plan.masked_count();
    if m == 0 {
        return Err(Error::Empty("mask"));
    }
    Ok(mlm_loss(log_probs, targets, plan)? / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_is_deterministic_with_unit_codes() {
        let a = init_random_quantizer(42, 8, 4, 16).unwrap();
        let b = init_random_quantizer(42, 8, 4, 16).unwrap();
        assert_eq!(a, b);
        for row in a.codebook().iter_rows() {
            assert!((l2_norm(row) - 1.0).abs() < 1e-6);
        }
        let c = init_random_quantizer(43, 8, 4, 16).unwrap();
        assert_ne!(a.projection(), c.projection());
        assert_ne!(a.codebook(), c.codebook());
    }

    #[test]
    fn quantizer_rejects_tiny_codebook() {
        assert!(init_random_quantizer(0, 4, 4, 1).is_err());
        assert!(init_random_quantizer(0, 0, 4, 8).is_err());
    }

    #[test]
    fn exact_code_gives_its_index() {
        // Square projection so a frame can be mapped onto any codebook row.
        let rq = init_random_quantizer(5, 3, 3, 16).unwrap();
        let p = rq.projection();
        // Solve x · P = c_7 by Cramer's rule on the 3x3 system.
        let c = rq.codebook().row(7).to_vec();
        let det = |m: &[[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        // x · P = c  <=>  Pᵀ xᵀ = cᵀ
        let a: [[f64; 3]; 3] = core::array::from_fn(|i| core::array::from_fn(|j| p[(j, i)]));
        let d = det(&a);
        let x: Vec<f64> = (0..3)
            .map(|col| {
                let mut m = a;
                for (r, row) in m.iter_mut().enumerate() {
                    row[col] = c[r];
                }
                det(&m) / d
            })
            .collect();
        let f = FeatureSequence::new(Matrix::from_rows(&[x.clone()]).unwrap(), 25.0).unwrap();
        assert_eq!(assign_targets(&f, &rq).unwrap(), vec![7]);
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let f3 = FeatureSequence::new(Matrix::from_rows(&[scaled]).unwrap(), 25.0).unwrap();
        assert_eq!(assign_targets(&f3, &rq).unwrap(), vec![7]);
    }

    #[test]
    fn zero_frame_uses_unnormalized_distance() {
        let rq = init_random_quantizer(1, 4, 4, 8).unwrap();
        let f = FeatureSequence::new(Matrix::zeros(2, 4), 25.0).unwrap();
        let norms: Vec<f64> = rq.codebook().iter_rows().map(|c| c.iter().map(|v| v * v).sum()).collect();
        let mut want = 0;
        for k in 1..norms.len() {
            if norms[k] < norms[want] {
                want = k;
            }
        }
        assert_eq!(assign_targets(&f, &rq).unwrap(), vec![want, want]);
    }

    #[test]
    fn wrong_dim_rejected() {
        let rq = init_random_quantizer(1, 4, 4, 8).unwrap();
        let f = FeatureSequence::new(Matrix::zeros(2, 5), 25.0).unwrap();
        assert!(assign_targets(&f, &rq).is_err());
    }

    #[test]
    fn mask_example_counts() {
        let plan = sample_mask(100, 0.4, 4, 9).unwrap();
        let m = plan.masked_count();
        assert!((36..=44).contains(&m), "{m}");
        assert_eq!(plan, sample_mask(100, 0.4, 4, 9).unwrap());
        // every masked run is at least one span long
        let mut t = 0;
        while t < 100 {
            if plan.flags[t] {
                let start = t;
                while t < 100 && plan.flags[t] {
                    t += 1;
                }
                assert!(t - start >= 4);
            } else {
                t += 1;
            }
        }
    }

    #[test]
    fn infeasible_masks_rejected() {
        assert!(sample_mask(1, 0.5, 1, 0).is_err());
        assert!(sample_mask(3, 0.5, 4, 0).is_err());
        assert!(sample_mask(10, 0.0, 1, 0).is_err());
        assert!(sample_mask(10, 1.0, 1, 0).is_err());
        assert!(sample_mask(10, 0.5, 0, 0).is_err());
    }

    fn uniform_log_probs(u: usize, k: usize) -> Matrix {
        Matrix::from_fn(u, k, |_, _| -libm::log(k as f64))
    }

    #[test]
    fn mlm_loss_cases() {
        let plan = sample_mask(20, 0.4, 2, 3).unwrap();
        let m = plan.masked_count() as f64;
        let targets: Vec<usize> = (0..20).map(|t| t % 5).collect();
        let uni = uniform_log_probs(20, 5);
        let loss = mlm_loss(&uni, &targets, &plan).unwrap();
        assert!((loss - m * libm::log(5.0)).abs() < 1e-12);
        assert!((mlm_loss_mean(&uni, &targets, &plan).unwrap() - libm::log(5.0)).abs() < 1e-12);

        let perfect = Matrix::from_fn(20, 5, |t, k| if k == t % 5 { 0.0 } else { f64::NEG_INFINITY });
        assert_eq!(mlm_loss(&perfect, &targets, &plan).unwrap(), 0.0);

        let mut perturbed = uni.clone();
        let unmasked = plan.flags.iter().position(|&f| !f).unwrap();
        perturbed.row_mut(unmasked).iter_mut().for_each(|v| *v = 7.0);
        assert_eq!(
            mlm_loss(&perturbed, &targets, &plan).unwrap().to_bits(),
            loss.to_bits()
        );
    }

    #[test]
    fn mlm_loss_errors() {
        let plan = MaskPlan { flags: vec![true, true], span_len: 1, target_ratio: 0.5 };
        let lp = Matrix::from_fn(2, 3, |_, _| -1.0);
        assert!(matches!(mlm_loss(&lp, &[0, 1], &plan), Err(Error::NotNormalized { .. })));
        let uni = uniform_log_probs(2, 3);
        assert!(matches!(
            mlm_loss(&uni, &[0, 3], &plan),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
