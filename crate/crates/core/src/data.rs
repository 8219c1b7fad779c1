//! Corpus preparation: packing lyric phrases into 5-30 s clips and drawing
//! sample types according to per-stage mixing ratios.

use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::rng::{self, streams};
use crate::{Error, Result};

pub const MIN_CLIP_SECONDS: f64 = 5.0;
pub const MAX_CLIP_SECONDS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LyricSpan {
    pub start: f64,
    pub end: f64,
    pub text: String,
}

impl LyricSpan {
    pub fn new(start: f64, end: f64, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            text: text.into(),
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipSpec {
    pub start: f64,
    pub end: f64,
    /// Indices into the input span list, all fully inside `[start, end]`.
    pub spans: Vec<usize>,
}

impl ClipSpec {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segmentation {
    pub clips: Vec<ClipSpec>,
    /// Spans that could not be placed in any valid clip.
    pub skipped: Vec<usize>,
}

fn validate_spans(spans: &[LyricSpan], track_len: f64) -> Result<()> {
    for (i, s) in spans.iter().enumerate() {
        if !(s.start >= 0.0 && s.start < s.end && s.end.is_finite()) {
            return Err(Error::param("lyric span", alloc::format!("span {i} needs 0 <= start < end")));
        }
        if i > 0 {
            let prev = &spans[i - 1];
            if s.start < prev.start {
                return Err(Error::UnsortedSpans(i));
            }
            if s.start < prev.end {
                return Err(Error::OverlappingSpans(i - 1, i));
            }
        }
    }
    if let Some(last) = spans.last() {
        if track_len < last.end {
            return Err(Error::param("track_len", "shorter than the last lyric span"));
        }
    }
    Ok(())
}

/// Greedy left-to-right packing of whole lyric spans into clips.
///
/// A clip grows by the next span while its total extent stays within 30 s. A
/// clip shorter than 5 s is widened into the lyric-free audio around it (first
/// to the right, then to the left, never past a neighbouring span, the track
/// edges or the previous clip); if that still falls short its spans are
/// skipped. A single span longer than 30 s is always skipped.
pub fn segment_by_lyrics(spans: &[LyricSpan], track_len: f64) -> Result<Segmentation> {
    validate_spans(spans, track_len)?;
    let mut out = Segmentation::default();
    let mut last_clip_end = 0.0f64;
    let mut group: Vec<usize> = Vec::new();

    let flush = |group: &mut Vec<usize>, out: &mut Segmentation, last_clip_end: &mut f64| {
        let (Some(&first), Some(&last)) = (group.first(), group.last()) else {
            return;
        };
        let mut start = spans[first].start;
        let mut end = spans[last].end;
        let short = MIN_CLIP_SECONDS - (end - start);
        if short > 0.0 {
            let right_limit = spans.get(last + 1).map_or(track_len, |s| s.start);
            let left_limit = if first == 0 { 0.0 } else { spans[first - 1].end }.max(*last_clip_end);
            let grow_right = (right_limit - end).min(short).max(0.0);
            end += grow_right;
            let grow_left = (start - left_limit).min(short - grow_right).max(0.0);
            start -= grow_left;
        }
        if end - start >= MIN_CLIP_SECONDS - 1e-9 {
            out.clips.push(ClipSpec {
                start,
                end,
                spans: core::mem::take(group),
            });
            *last_clip_end = end;
        } else {
            out.skipped.append(group);
        }
    };

    for (i, span) in spans.iter().enumerate() {
        if span.duration() > MAX_CLIP_SECONDS {
            flush(&mut group, &mut out, &mut last_clip_end);
            out.skipped.push(i);
            continue;
        }
        if let Some(&first) = group.first() {
            if span.end - spans[first].start > MAX_CLIP_SECONDS {
                flush(&mut group, &mut out, &mut last_clip_end);
            }
        }
        group.push(i);
    }
    flush(&mut group, &mut out, &mut last_clip_end);
    out.skipped.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleType {
    /// Full mixture, no separation.
    FullMix,
    /// Separated vocals of a track with lyrics.
    LyricVocal,
    /// Separated accompaniment of a track with lyrics.
    LyricAccomp,
    /// Accompaniment of an instrumental-only track.
    InstrOnly,
}

impl SampleType {
    pub const ALL: [SampleType; 4] = [
        SampleType::FullMix,
        SampleType::LyricVocal,
        SampleType::LyricAccomp,
        SampleType::InstrOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleType::FullMix => "full",
            SampleType::LyricVocal => "vocal",
            SampleType::LyricAccomp => "accomp",
            SampleType::InstrOnly => "instr",
        }
    }
}

/// Non-negative sampling weight per [`SampleType`], in [`SampleType::ALL`]
/// order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixRatios(pub [f64; 4]);

impl MixRatios {
    /// full : vocal : accomp : instr = 4 : 1 : 1 : 1.
    pub const STAGE2: MixRatios = MixRatios([4.0, 1.0, 1.0, 1.0]);
    /// vocal : accomp : instr = 5 : 4 : 1, full mixes excluded.
    pub const STAGE3: MixRatios = MixRatios([0.0, 5.0, 4.0, 1.0]);

    pub fn weight(&self, t: SampleType) -> f64 {
        self.0[t as usize]
    }

    pub fn probabilities(&self) -> Result<[f64; 4]> {
        self.validate()?;
        let total: f64 = self.0.iter().sum();
        Ok(self.0.map(|w| w / total))
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::param("mix ratios", "weights must be finite and >= 0"));
        }
        if !self.0.iter().any(|&w| w > 0.0) {
            return Err(Error::param("mix ratios", "at least one weight must be positive"));
        }
        Ok(())
    }
}

/// `n` i.i.d. sample-type draws with probabilities proportional to the weights.
pub fn ratio_sampler(ratios: &MixRatios, seed: u64, n: usize) -> Result<Vec<SampleType>> {
    ratios.validate()?;
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let dist = WeightedIndex::new(ratios.0).map_err(|e| Error::param("mix ratios", alloc::format!("{e}")))?;
    let mut rng = rng::stream(seed, streams::SAMPLE_TYPES);
    Ok((0..n).map(|_| SampleType::ALL[dist.sample(&mut rng)]).collect())
}
