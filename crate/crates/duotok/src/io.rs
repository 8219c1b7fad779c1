//! Audio, lyric and CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use duotok_core::data::LyricSpan;
use duotok_core::dsp::Waveform;
use duotok_core::lmeval::EvalReport;
use duotok_core::simvq::TrainRecord;
use duotok_core::tokens::DualTrackSequence;

use crate::error::{Error, Result};

/// Reads 16-bit PCM; multi-channel audio is averaged to mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Invalid(format!(
            "{}: only 16-bit PCM is supported, found {:?} {}-bit",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    let raw: Vec<i16> = reader.into_samples::<i16>().collect::<std::result::Result<_, _>>()?;
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 / 32768.0).sum::<f64>() / channels as f64)
        .collect();
    Ok(Waveform::new(samples, spec.sample_rate as f64)?)
}

/// Writes 16-bit PCM, clamping to the representable range.
pub fn write_wav(path: &Path, channels: &[&[f64]], sample_rate: u32) -> Result<()> {
    let n = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
        return Err(Error::Invalid("channels must be non-empty and equally long".into()));
    }
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for t in 0..n {
        for c in channels {
            let s = (c[t] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            w.write_sample(s)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// One span per line: `start_sec<TAB>end_sec<TAB>text`. Blank lines are skipped.
pub fn parse_lyrics(text: &str) -> Result<Vec<LyricSpan>> {
    let mut spans = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let mut num = |what: &str| -> Result<f64> {
            parts
                .next()
                .and_then(|p| p.trim().parse().ok())
                .ok_or_else(|| Error::Invalid(format!("lyrics line {}: bad {what}", n + 1)))
        };
        let start = num("start")?;
        let end = num("end")?;
        let text = parts.next().unwrap_or("").to_string();
        spans.push(LyricSpan::new(start, end, text));
    }
    Ok(spans)
}

pub fn read_lyrics(path: &Path) -> Result<Vec<LyricSpan>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lyrics(&text)
}

/// `<song>/mix.wav`, `<song>/vocal.wav`, `<song>/accomp.wav`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemPaths {
    pub mix: PathBuf,
    pub vocal: PathBuf,
    pub accomp: PathBuf,
}

impl StemPaths {
    pub fn for_song(song_dir: &Path) -> Self {
        Self {
            mix: song_dir.join("mix.wav"),
            vocal: song_dir.join("vocal.wav"),
            accomp: song_dir.join("accomp.wav"),
        }
    }
}

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_token_csv(path: &Path, seq: &DualTrackSequence) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["frame", "vocal_idx", "accomp_idx"])?;
    for (t, (v, a)) in seq.vocal().indices().iter().zip(seq.accomp().indices()).enumerate() {
        w.write_record([t.to_string(), v.to_string(), a.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub const REPORT_HEADER: [&str; 7] = ["route", "H_nats", "ppl_at_1024", "top1", "top5", "top10", "top50"];

pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        let mut rec = vec![r.label.clone(), r.h_nats.to_string(), r.ppl_at_1024.to_string()];
        rec.extend(r.topk.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_train_log(path: &Path, log: &[TrainRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "route", "lr", "vq_loss", "utilization", "entropy"])?;
    for r in log {
        w.write_record([
            r.step.to_string(),
            r.route.name().to_string(),
            r.lr.to_string(),
            r.vq_loss.to_string(),
            r.utilization.to_string(),
            r.entropy.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_targets_csv(path: &Path, targets: &[usize], masked: &[bool]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["frame", "target", "masked"])?;
    for (t, (q, m)) in targets.iter().zip(masked).enumerate() {
        w.write_record([t.to_string(), q.to_string(), (*m as u8).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn csv_file_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv_writer(path)
}
