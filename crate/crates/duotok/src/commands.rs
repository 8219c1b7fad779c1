//! Batch commands. Each takes explicit paths plus a [`RunConfig`] and produces
//! byte-identical outputs for identical inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use duotok_core::bestrq::{assign_targets, init_random_quantizer, sample_mask};
use duotok_core::dsp::{self, StftConfig, Waveform};
use duotok_core::lmeval::{self, CountLm, EvalReport, Predictor, TablePredictor, TableStream};
use duotok_core::simvq::{quantize, DualCodebookBank, TrainConfig, TrainRecord};
use duotok_core::tokens::{align, bitrate_kbps, DualTrackSequence, TrackTokens};
use duotok_core::{FeatureSequence, Matrix, Route};

use crate::config::{FeatureKind, RunConfig};
use crate::error::{Error, Result};
use crate::formats::{self, TokenFile};
use crate::io;

/// Spectral features of a waveform at `sample_rate / hop` frames per second.
///
/// Log-Mel features are offset by `-ln(eps)`, i.e. `ln(1 + mel / eps)`, so
/// silence maps to exactly zero.
pub fn featurize_waveform(w: &Waveform, cfg: &RunConfig) -> Result<FeatureSequence> {
    if w.sample_rate() != cfg.sample_rate {
        return Err(Error::Invalid(format!(
            "audio is {} Hz but sample_rate = {}",
            w.sample_rate(),
            cfg.sample_rate
        )));
    }
    let stft_cfg = StftConfig {
        fft_size: cfg.fft_size,
        hop: cfg.hop,
        center: true,
    };
    let spec = dsp::stft(w, &stft_cfg)?;
    let values = match cfg.feature {
        FeatureKind::LogMel => {
            let fb = dsp::mel_filterbank(cfg.sample_rate, cfg.fft_size, cfg.n_mels, cfg.fmin, cfg.fmax_hz())?;
            let lm = dsp::log_mel(&spec, &fb, cfg.log_eps)?;
            let floor = cfg.log_eps.ln();
            Matrix::from_fn(lm.rows(), lm.cols(), |i, j| lm[(i, j)] - floor)
        }
        FeatureKind::Chroma => dsp::chroma(&spec, cfg.ref_freq)?.values,
    };
    Ok(FeatureSequence::new(values, spec.frame_rate())?)
}

pub fn featurize(in_wav: &Path, out: &Path, cfg: &RunConfig) -> Result<FeatureSequence> {
    let w = io::read_wav(in_wav)?;
    let f = featurize_waveform(&w, cfg)?;
    formats::write_file(out, &formats::encode_features(&f)?)?;
    Ok(f)
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    formats::decode_features(&formats::read_file(path)?)
}

/// Random-quantizer targets and a span mask for one feature file, written as
/// `frame,target,masked`. The quantizer itself is optionally saved as `DTRQ`.
pub fn bestrq_targets(
    features: &Path,
    out_csv: &Path,
    quantizer_out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Vec<usize>> {
    let seed = cfg.require_seed("bestrq-targets")?;
    let f = read_features(features)?;
    let rq = init_random_quantizer(seed, f.dim(), cfg.rq_proj_dim, cfg.rq_codebook_size)?;
    let targets = assign_targets(&f, &rq)?;
    let plan = sample_mask(f.frames(), cfg.mask_ratio, cfg.mask_span, seed)?;
    io::write_targets_csv(out_csv, &targets, &plan.flags)?;
    if let Some(q) = quantizer_out {
        formats::write_file(q, &formats::encode_quantizer(&rq)?)?;
    }
    Ok(targets)
}

/// Manifest lines: `<file name><TAB>vocal|accomp`, names relative to the
/// feature directory. `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, Route>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(route), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Invalid(format!("manifest line {}: expected `file route`", n + 1)));
        };
        let route = Route::parse(route)
            .ok_or_else(|| Error::Invalid(format!("manifest line {}: unknown route `{route}`", n + 1)))?;
        if out.insert(name.to_string(), route).is_some() {
            return Err(Error::Invalid(format!("manifest line {}: `{name}` listed twice", n + 1)));
        }
    }
    Ok(out)
}

pub struct TrainOutput {
    pub bank: DualCodebookBank,
    pub log: Vec<TrainRecord>,
}

/// Trains both routes' bases on every `.dtft` file in `feature_dir`, in file
/// name order, using the stage-3 schedule and step count.
pub fn train_vq(
    feature_dir: &Path,
    manifest: &Path,
    out_bank: &Path,
    out_log: &Path,
    cfg: &RunConfig,
) -> Result<TrainOutput> {
    let seed = cfg.require_seed("train-vq")?;
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let routes = parse_manifest(&text)?;
    let files = io::list_files(feature_dir, "dtft")?;
    if files.is_empty() {
        return Err(Error::Invalid(format!("no .dtft files in {}", feature_dir.display())));
    }
    let mut batches = Vec::with_capacity(files.len());
    for path in &files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let route = *routes
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("no route for `{name}` in manifest")))?;
        let f = read_features(path)?;
        if f.dim() != cfg.code_dim {
            return Err(Error::Invalid(format!(
                "`{name}` has dim {} but code_dim = {}",
                f.dim(),
                cfg.code_dim
            )));
        }
        batches.push((f, route));
    }
    let mut bank = DualCodebookBank::random(seed, cfg.codebook_size, cfg.code_dim)?;
    let tc = TrainConfig {
        beta: cfg.beta,
        schedule: cfg.stage3.schedule(),
        adamw: cfg.adamw(),
        steps: cfg.stage3.train_steps,
    };
    let log = duotok_core::simvq::train_w(&batches, &mut bank, &tc)?;
    formats::write_file(out_bank, &formats::encode_bank(&bank)?)?;
    io::write_train_log(out_log, &log)?;
    Ok(TrainOutput { bank, log })
}

fn track_from_features(f: &FeatureSequence, bank: &DualCodebookBank, route: Route, beta: f64) -> Result<TrackTokens> {
    let res = quantize(f, bank, route, beta)?;
    let indices = res.indices.iter().map(|&i| i as u32).collect();
    let k = u32::try_from(bank.size()).map_err(|_| Error::Invalid("codebook size exceeds u32".into()))?;
    Ok(TrackTokens::new(route, k, f.frame_rate() as f32, indices)?)
}

/// Quantizes one or both tracks with their own codebooks and writes `DTOK`;
/// with both tracks present a `frame,vocal_idx,accomp_idx` CSV can be added.
pub fn tokenize(
    bank_path: &Path,
    vocal: Option<&Path>,
    accomp: Option<&Path>,
    out: &Path,
    csv_out: Option<&Path>,
    cfg: &RunConfig,
) -> Result<TokenFile> {
    let bank = formats::decode_bank(&formats::read_file(bank_path)?)?;
    let load = |p: Option<&Path>, route| -> Result<Option<TrackTokens>> {
        p.map(|p| track_from_features(&read_features(p)?, &bank, route, cfg.beta)).transpose()
    };
    let file = match (load(vocal, Route::Vocal)?, load(accomp, Route::Accompaniment)?) {
        (Some(v), Some(a)) => TokenFile::Dual(align(v, a)?),
        (Some(t), None) | (None, Some(t)) => TokenFile::Single(t),
        (None, None) => return Err(Error::Invalid("tokenize needs a vocal or accompaniment input".into())),
    };
    if let Some(c) = csv_out {
        match &file {
            TokenFile::Dual(seq) => io::write_token_csv(c, seq)?,
            TokenFile::Single(_) => return Err(Error::Invalid("token CSV needs both tracks".into())),
        }
    }
    formats::write_file(out, &formats::encode_tokens(&file)?)?;
    Ok(file)
}

/// Dual-track sequences from every `.dtok` file in `dir`, in file name order.
pub fn load_corpus(dir: &Path) -> Result<(Vec<PathBuf>, Vec<DualTrackSequence>)> {
    let files = io::list_files(dir, "dtok")?;
    if files.is_empty() {
        return Err(Error::Invalid(format!("no .dtok files in {}", dir.display())));
    }
    let mut seqs = Vec::with_capacity(files.len());
    for f in &files {
        let seq = formats::decode_tokens(&formats::read_file(f)?)?
            .into_dual()
            .map_err(|e| Error::Invalid(format!("{}: {e}", f.display())))?;
        seqs.push(seq);
    }
    Ok((files, seqs))
}

pub fn stream_suffix(s: TableStream) -> &'static str {
    match s {
        TableStream::Vocal => "vocal",
        TableStream::Accomp => "accomp",
        TableStream::AccompGivenVocal => "cond",
    }
}

/// Path of the external log-probability table for one token file.
pub fn table_path(dir: &Path, token_file: &Path, stream: TableStream) -> PathBuf {
    let stem = token_file.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    dir.join(format!("{stem}.{}.dtlp", stream_suffix(stream)))
}

#[derive(Debug, Clone)]
pub enum PredictorSource {
    /// Add-α bigram model trained on the evaluated corpus itself.
    Bigram,
    /// Directory of `<token stem>.<vocal|accomp|cond>.dtlp` tables.
    Tables(PathBuf),
}

fn load_tables(dir: &Path, files: &[PathBuf], seqs: &[DualTrackSequence]) -> Result<(TablePredictor, bool)> {
    let mut tp = TablePredictor::new();
    let mut have_cond = true;
    for (i, (file, seq)) in files.iter().zip(seqs).enumerate() {
        for stream in [TableStream::Vocal, TableStream::Accomp, TableStream::AccompGivenVocal] {
            let path = table_path(dir, file, stream);
            if stream == TableStream::AccompGivenVocal && !path.exists() {
                have_cond = false;
                continue;
            }
            let table = formats::decode_logprobs(&formats::read_file(&path)?)?;
            let route = match stream {
                TableStream::Vocal => Route::Vocal,
                _ => Route::Accompaniment,
            };
            let track = seq.track(route);
            if table.stream != stream
                || table.values.rows() != track.len()
                || table.values.cols() != track.vocab_size() as usize
            {
                return Err(Error::Invalid(format!(
                    "{}: table is {:?} {}×{}, expected {:?} {}×{}",
                    path.display(),
                    table.stream,
                    table.values.rows(),
                    table.values.cols(),
                    stream,
                    track.len(),
                    track.vocab_size()
                )));
            }
            tp.insert(i, stream, table.values);
        }
    }
    Ok((tp, have_cond))
}

/// Scores a token corpus and writes the report CSV. The vocal-conditioned row
/// uses a prefix of `round(rate · tau_seconds)` frames.
pub fn eval_lm(tokens_dir: &Path, source: &PredictorSource, out_csv: &Path, cfg: &RunConfig) -> Result<EvalReport> {
    let (files, seqs) = load_corpus(tokens_dir)?;
    let tau = lmeval::prefix_frames(seqs[0].rate() as f64, cfg.tau_seconds);
    let report = match source {
        PredictorSource::Bigram => {
            let lm = CountLm::train(&seqs, &Route::ALL, cfg.bigram_alpha)?;
            run_eval(&lm, &seqs, Some(tau))?
        }
        PredictorSource::Tables(dir) => {
            let (tp, have_cond) = load_tables(dir, &files, &seqs)?;
            run_eval(&tp, &seqs, have_cond.then_some(tau))?
        }
    };
    io::write_report_csv(out_csv, &report)?;
    Ok(report)
}

fn run_eval(p: &impl Predictor, seqs: &[DualTrackSequence], tau: Option<usize>) -> Result<EvalReport> {
    Ok(lmeval::evaluate(p, seqs, tau)?)
}

/// One tokenizer operating point for the Pareto table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoEntry {
    pub name: String,
    pub token_rate: f64,
    pub codebooks: Vec<u32>,
    pub ppl_at_1024: f64,
    pub mel_l1: f64,
}

/// `NxK` (N codebooks of size K) or `K1+K2+…`.
pub fn parse_codebooks(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Invalid(format!("codebook spec `{s}`: expected NxK or K1+K2"));
    if let Some((n, k)) = s.split_once('x') {
        let n: usize = n.trim().parse().map_err(|_| bad())?;
        let k: u32 = k.trim().parse().map_err(|_| bad())?;
        return Ok(vec![k; n]);
    }
    s.split('+').map(|k| k.trim().parse().map_err(|_| bad())).collect()
}

pub const PARETO_INPUT_HEADER: [&str; 5] = ["name", "token_rate", "codebooks", "ppl_at_1024", "mel_l1"];
pub const PARETO_HEADER: [&str; 4] = ["name", "bitrate_kbps", "ppl_at_1024", "mel_l1"];

pub fn read_pareto_entries(path: &Path) -> Result<Vec<ParetoEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != PARETO_INPUT_HEADER {
        return Err(Error::Invalid(format!(
            "{}: header must be {}",
            path.display(),
            PARETO_INPUT_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("{}: bad {} `{}`", path.display(), PARETO_INPUT_HEADER[i], &rec[i])))
        };
        out.push(ParetoEntry {
            name: rec[0].to_string(),
            token_rate: num(1)?,
            codebooks: parse_codebooks(&rec[2])?,
            ppl_at_1024: num(3)?,
            mel_l1: num(4)?,
        });
    }
    Ok(out)
}

/// Concatenates entry files in argument order and writes
/// `name,bitrate_kbps,ppl_at_1024,mel_l1`.
pub fn pareto(inputs: &[PathBuf], out: &Path) -> Result<Vec<(ParetoEntry, f64)>> {
    let mut rows = Vec::new();
    for p in inputs {
        for e in read_pareto_entries(p)? {
            let kbps = bitrate_kbps(e.token_rate, &e.codebooks)?;
            rows.push((e, kbps));
        }
    }
    let mut w = io::csv_file_writer(out)?;
    w.write_record(PARETO_HEADER)?;
    for (e, kbps) in &rows {
        w.write_record([e.name.clone(), kbps.to_string(), e.ppl_at_1024.to_string(), e.mel_l1.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(rows)
}
