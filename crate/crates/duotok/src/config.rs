//! Flat `key = value` run configuration.
//!
//! Values come from three layers, later layers winning: built-in defaults, a
//! config file, then `--key value` pairs on the command line. Unknown keys are
//! an error at every layer.

use std::fmt::Write as _;
use std::str::FromStr;

use duotok_core::data::MixRatios;
use duotok_core::losses::StageWeights;
use duotok_core::simvq::{AdamWConfig, ScheduleConfig};
use duotok_core::{bestrq, dsp, simvq};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: cannot parse `{value}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("`{0}` requires an explicit `seed`")]
    MissingSeed(&'static str),
    #[error("{0}")]
    Usage(String),
}

/// Optimisation schedule and batch settings for one training stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub cycle_steps: u64,
    pub train_steps: u64,
    pub batch_size: u64,
}

impl StageConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig {
            peak_lr: self.peak_lr,
            warmup_steps: self.warmup_steps,
            cycle_steps: self.cycle_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    LogMel,
    Chroma,
}

impl FeatureKind {
    fn name(self) -> &'static str {
        match self {
            FeatureKind::LogMel => "logmel",
            FeatureKind::Chroma => "chroma",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,

    pub sample_rate: f64,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_eps: f64,
    pub ref_freq: f64,
    pub feature: FeatureKind,

    pub rq_proj_dim: usize,
    pub rq_codebook_size: usize,
    pub mask_ratio: f64,
    pub mask_span: usize,

    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub stage1: StageConfig,
    pub stage2: StageConfig,
    pub stage3: StageConfig,

    pub lambda_ctc: f64,
    pub lambda_mel: f64,
    pub lambda_chroma: f64,
    pub lambda_mss: f64,
    pub lambda_vq: f64,
    pub lambda_si: f64,
    pub replace_p: f64,
    pub replace_sigma: f64,
    pub stage2_data_ratio: MixRatios,
    pub stage3_data_ratio: MixRatios,

    pub codebook_size: usize,
    pub code_dim: usize,
    pub beta: f64,

    pub bigram_alpha: f64,
    pub tau_seconds: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        let w = StageWeights::default();
        let stage = |s: ScheduleConfig, train_steps, batch_size| StageConfig {
            peak_lr: s.peak_lr,
            warmup_steps: s.warmup_steps,
            cycle_steps: s.cycle_steps,
            train_steps,
            batch_size,
        };
        Self {
            seed: None,
            sample_rate: dsp::DEFAULT_SAMPLE_RATE,
            fft_size: dsp::DEFAULT_FFT_SIZE,
            hop: dsp::DEFAULT_HOP,
            n_mels: dsp::DEFAULT_N_MELS,
            fmin: 0.0,
            fmax: None,
            log_eps: dsp::DEFAULT_LOG_EPS,
            ref_freq: dsp::DEFAULT_REF_FREQ,
            feature: FeatureKind::LogMel,
            rq_proj_dim: bestrq::DEFAULT_PROJ_DIM,
            rq_codebook_size: bestrq::DEFAULT_CODEBOOK_SIZE,
            mask_ratio: bestrq::DEFAULT_MASK_RATIO,
            mask_span: bestrq::DEFAULT_SPAN_LEN,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            stage1: stage(ScheduleConfig::STAGE1, 3_000_000, 1920),
            stage2: stage(ScheduleConfig::STAGE2, 100_000, 448),
            stage3: stage(ScheduleConfig::STAGE3, 100_000, 1280),
            lambda_ctc: w.lambda_ctc,
            lambda_mel: w.lambda_mel,
            lambda_chroma: w.lambda_chr,
            lambda_mss: w.lambda_mss,
            lambda_vq: w.lambda_vq,
            lambda_si: w.lambda_si,
            replace_p: 0.2,
            replace_sigma: 1.0,
            stage2_data_ratio: MixRatios::STAGE2,
            stage3_data_ratio: MixRatios::STAGE3,
            codebook_size: simvq::DEFAULT_CODEBOOK_SIZE,
            code_dim: simvq::DEFAULT_CODE_DIM,
            beta: simvq::DEFAULT_BETA,
            bigram_alpha: 0.1,
            tau_seconds: 2.0,
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "seed",
    "sample_rate",
    "fft_size",
    "hop",
    "n_mels",
    "fmin",
    "fmax",
    "log_eps",
    "ref_freq",
    "feature",
    "rq_proj_dim",
    "rq_codebook_size",
    "mask_ratio",
    "mask_span",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "weight_decay",
    "stage1.peak_lr",
    "stage1.warmup_steps",
    "stage1.cycle_steps",
    "stage1.train_steps",
    "stage1.batch_size",
    "stage2.peak_lr",
    "stage2.warmup_steps",
    "stage2.cycle_steps",
    "stage2.train_steps",
    "stage2.batch_size",
    "stage3.peak_lr",
    "stage3.warmup_steps",
    "stage3.cycle_steps",
    "stage3.train_steps",
    "stage3.batch_size",
    "lambda_ctc",
    "lambda_mel",
    "lambda_chroma",
    "lambda_mss",
    "lambda_vq",
    "lambda_si",
    "replace_p",
    "replace_sigma",
    "stage2.data_ratio",
    "stage3.data_ratio",
    "codebook_size",
    "code_dim",
    "beta",
    "bigram_alpha",
    "tau_seconds",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_ratio(key: &str, value: &str) -> Result<MixRatios, ConfigError> {
    let parts: Vec<&str> = value.split(':').map(str::trim).collect();
    let bad = |reason: &str| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    };
    if parts.len() != 4 {
        return Err(bad("expected full:vocal:accomp:instr"));
    }
    let mut w = [0.0; 4];
    for (slot, p) in w.iter_mut().zip(&parts) {
        *slot = p.parse().map_err(|_| bad("non-numeric weight"))?;
    }
    let r = MixRatios(w);
    r.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(r)
}

fn ratio_string(r: &MixRatios) -> String {
    r.0.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(":")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        if let Some((stage, field)) = key.split_once('.') {
            let s = match stage {
                "stage1" => &mut self.stage1,
                "stage2" => &mut self.stage2,
                "stage3" => &mut self.stage3,
                _ => return Err(ConfigError::UnknownKey(key.into())),
            };
            match field {
                "peak_lr" => s.peak_lr = parse(key, v)?,
                "warmup_steps" => s.warmup_steps = parse(key, v)?,
                "cycle_steps" => s.cycle_steps = parse(key, v)?,
                "train_steps" => s.train_steps = parse(key, v)?,
                "batch_size" => s.batch_size = parse(key, v)?,
                "data_ratio" if stage == "stage2" => self.stage2_data_ratio = parse_ratio(key, v)?,
                "data_ratio" if stage == "stage3" => self.stage3_data_ratio = parse_ratio(key, v)?,
                _ => return Err(ConfigError::UnknownKey(key.into())),
            }
            return Ok(());
        }
        match key {
            "seed" => self.seed = Some(parse(key, v)?),
            "sample_rate" => self.sample_rate = parse(key, v)?,
            "fft_size" => self.fft_size = parse(key, v)?,
            "hop" => self.hop = parse(key, v)?,
            "n_mels" => self.n_mels = parse(key, v)?,
            "fmin" => self.fmin = parse(key, v)?,
            "fmax" => self.fmax = if v == "nyquist" { None } else { Some(parse(key, v)?) },
            "log_eps" => self.log_eps = parse(key, v)?,
            "ref_freq" => self.ref_freq = parse(key, v)?,
            "feature" => {
                self.feature = match v {
                    "logmel" => FeatureKind::LogMel,
                    "chroma" => FeatureKind::Chroma,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected logmel or chroma".into(),
                        })
                    }
                }
            }
            "rq_proj_dim" => self.rq_proj_dim = parse(key, v)?,
            "rq_codebook_size" => self.rq_codebook_size = parse(key, v)?,
            "mask_ratio" => self.mask_ratio = parse(key, v)?,
            "mask_span" => self.mask_span = parse(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse(key, v)?,
            "adam_eps" => self.adam_eps = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "lambda_ctc" => self.lambda_ctc = parse(key, v)?,
            "lambda_mel" => self.lambda_mel = parse(key, v)?,
            "lambda_chroma" => self.lambda_chroma = parse(key, v)?,
            "lambda_mss" => self.lambda_mss = parse(key, v)?,
            "lambda_vq" => self.lambda_vq = parse(key, v)?,
            "lambda_si" => self.lambda_si = parse(key, v)?,
            "replace_p" => self.replace_p = parse(key, v)?,
            "replace_sigma" => self.replace_sigma = parse(key, v)?,
            "codebook_size" => self.codebook_size = parse(key, v)?,
            "code_dim" => self.code_dim = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "bigram_alpha" => self.bigram_alpha = parse(key, v)?,
            "tau_seconds" => self.tau_seconds = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let stage = |s: &StageConfig, field: &str| -> Option<String> {
            Some(match field {
                "peak_lr" => s.peak_lr.to_string(),
                "warmup_steps" => s.warmup_steps.to_string(),
                "cycle_steps" => s.cycle_steps.to_string(),
                "train_steps" => s.train_steps.to_string(),
                "batch_size" => s.batch_size.to_string(),
                _ => return None,
            })
        };
        Some(match key {
            "seed" => return self.seed.map(|s| s.to_string()),
            "sample_rate" => self.sample_rate.to_string(),
            "fft_size" => self.fft_size.to_string(),
            "hop" => self.hop.to_string(),
            "n_mels" => self.n_mels.to_string(),
            "fmin" => self.fmin.to_string(),
            "fmax" => self.fmax.map_or_else(|| "nyquist".into(), |f| f.to_string()),
            "log_eps" => self.log_eps.to_string(),
            "ref_freq" => self.ref_freq.to_string(),
            "feature" => self.feature.name().into(),
            "rq_proj_dim" => self.rq_proj_dim.to_string(),
            "rq_codebook_size" => self.rq_codebook_size.to_string(),
            "mask_ratio" => self.mask_ratio.to_string(),
            "mask_span" => self.mask_span.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "adam_eps" => self.adam_eps.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "lambda_ctc" => self.lambda_ctc.to_string(),
            "lambda_mel" => self.lambda_mel.to_string(),
            "lambda_chroma" => self.lambda_chroma.to_string(),
            "lambda_mss" => self.lambda_mss.to_string(),
            "lambda_vq" => self.lambda_vq.to_string(),
            "lambda_si" => self.lambda_si.to_string(),
            "replace_p" => self.replace_p.to_string(),
            "replace_sigma" => self.replace_sigma.to_string(),
            "stage2.data_ratio" => ratio_string(&self.stage2_data_ratio),
            "stage3.data_ratio" => ratio_string(&self.stage3_data_ratio),
            "codebook_size" => self.codebook_size.to_string(),
            "code_dim" => self.code_dim.to_string(),
            "beta" => self.beta.to_string(),
            "bigram_alpha" => self.bigram_alpha.to_string(),
            "tau_seconds" => self.tau_seconds.to_string(),
            k => {
                let (st, field) = k.split_once('.')?;
                match st {
                    "stage1" => stage(&self.stage1, field)?,
                    "stage2" => stage(&self.stage2, field)?,
                    "stage3" => stage(&self.stage3, field)?,
                    _ => return None,
                }
            }
        })
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key with its current value; an unset seed is omitted.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    pub fn require_seed(&self, command: &'static str) -> Result<u64, ConfigError> {
        self.seed.ok_or(ConfigError::MissingSeed(command))
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            weight_decay: self.weight_decay,
            eps: self.adam_eps,
        }
    }

    pub fn stage_weights(&self) -> StageWeights {
        StageWeights {
            lambda_ctc: self.lambda_ctc,
            lambda_mel: self.lambda_mel,
            lambda_chr: self.lambda_chroma,
            lambda_mss: self.lambda_mss,
            lambda_vq: self.lambda_vq,
            lambda_si: self.lambda_si,
        }
    }

    pub fn fmax_hz(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate / 2.0)
    }
}

/// Splits `--key value` / `--key=value` pairs naming config keys out of `args`
/// (underscores may be written as dashes) and returns the remaining arguments
/// untouched.
pub fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), ConfigError> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            rest.push(a);
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        let key = name.replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            rest.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| ConfigError::Usage(format!("--{name} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}
