//! LM-friendliness evaluation over dual-track token corpora.
//!
//! The harness scores any [`Predictor`] by teacher forcing: for each position
//! it asks for a distribution over the track's vocabulary and accumulates the
//! target's negative log-probability and rank. Reported perplexities are
//! rescaled to a 1024-way vocabulary so tokenizers with different codebook
//! sizes are comparable.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::tokens::DualTrackSequence;
use crate::{Error, Matrix, Result, Route};

pub const TOPK: [usize; 4] = [1, 5, 10, 50];
pub const PPL_REFERENCE_VOCAB: f64 = 1024.0;
/// Accompaniment prefix given to the vocal-conditioned task.
pub const DEFAULT_PREFIX_SECONDS: f64 = 2.0;

/// What the predictor is asked for: the next token of `route` at `position`.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub seq_index: usize,
    pub seq: &'a DualTrackSequence,
    pub route: Route,
    pub position: usize,
    /// Accompaniment query that may also read the entire vocal track.
    pub vocal_conditioned: bool,
}

/// A next-token model. Implementations may read the queried track before
/// `position`; only a `vocal_conditioned` query may also read the vocal track.
/// The returned vector holds natural-log probabilities over the queried
/// track's vocabulary and must sum to 1 within 1e-6 after exponentiation.
pub trait Predictor {
    fn log_probs(&self, q: &Query<'_>) -> Result<Vec<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn log_probs(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        (**self).log_probs(q)
    }
}

/// Uniform distribution over the queried track's vocabulary.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn log_probs(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        let k = q.seq.track(q.route).vocab_size() as usize;
        Ok(vec![-libm::log(k as f64); k])
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BigramTable {
    vocab: usize,
    unigram: Vec<u64>,
    total: u64,
    pairs: BTreeMap<(u32, u32), u64>,
    outgoing: BTreeMap<u32, u64>,
}

/// Add-α smoothed bigram model per route. The first token of a sequence is
/// scored with the smoothed unigram distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CountLm {
    alpha: f64,
    tables: BTreeMap<Route, BigramTable>,
}

impl CountLm {
    /// Trains one table per listed route.
    pub fn train(corpus: &[DualTrackSequence], routes: &[Route], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", "must be positive"));
        }
        let first = corpus.first().ok_or(Error::Empty("training corpus"))?;
        let mut tables = BTreeMap::new();
        for &route in routes {
            let vocab = first.track(route).vocab_size() as usize;
            let mut t = BigramTable {
                vocab,
                unigram: vec![0; vocab],
                total: 0,
                pairs: BTreeMap::new(),
                outgoing: BTreeMap::new(),
            };
            for seq in corpus {
                let track = seq.track(route);
                if track.vocab_size() as usize != vocab {
                    return Err(Error::param("training corpus", "vocabulary size differs between sequences"));
                }
                let idx = track.indices();
                for &i in idx {
                    t.unigram[i as usize] += 1;
                    t.total += 1;
                }
                for w in idx.windows(2) {
                    *t.pairs.entry((w[0], w[1])).or_insert(0) += 1;
                    *t.outgoing.entry(w[0]).or_insert(0) += 1;
                }
            }
            tables.insert(route, t);
        }
        Ok(Self { alpha, tables })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Smoothed `p(next | prev)`; `prev = None` gives the unigram estimate.
    pub fn prob(&self, route: Route, prev: Option<u32>, next: u32) -> Option<f64> {
        let t = self.tables.get(&route)?;
        let k = t.vocab as f64;
        Some(match prev {
            None => (t.unigram[next as usize] as f64 + self.alpha) / (t.total as f64 + self.alpha * k),
            Some(a) => {
                let c = t.pairs.get(&(a, next)).copied().unwrap_or(0) as f64;
                let n = t.outgoing.get(&a).copied().unwrap_or(0) as f64;
                (c + self.alpha) / (n + self.alpha * k)
            }
        })
    }
}

pub fn train_count_lm(corpus: &[DualTrackSequence], route: Route, alpha: f64) -> Result<CountLm> {
    CountLm::train(corpus, &[route], alpha)
}

impl Predictor for CountLm {
    fn log_probs(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        let t = self
            .tables
            .get(&q.route)
            .ok_or_else(|| Error::param("route", alloc::format!("no {} table trained", q.route.name())))?;
        let track = q.seq.track(q.route);
        if track.vocab_size() as usize != t.vocab {
            return Err(Error::param("vocab", "query track vocabulary differs from training"));
        }
        let k = t.vocab as f64;
        let prev = q.position.checked_sub(1).map(|p| track.indices()[p]);
        let (counts_of, denom) = match prev {
            None => (None, t.total as f64 + self.alpha * k),
            Some(a) => (Some(a), t.outgoing.get(&a).copied().unwrap_or(0) as f64 + self.alpha * k),
        };
        let base = libm::log(self.alpha / denom);
        let mut out = vec![base; t.vocab];
        match counts_of {
            None => {
                for (b, &c) in t.unigram.iter().enumerate() {
                    if c > 0 {
                        out[b] = libm::log((c as f64 + self.alpha) / denom);
                    }
                }
            }
            Some(a) => {
                for (&(_, b), &c) in t.pairs.range((a, 0)..=(a, u32::MAX)) {
                    out[b as usize] = libm::log((c as f64 + self.alpha) / denom);
                }
            }
        }
        Ok(out)
    }
}

/// Which distribution table a [`TablePredictor`] entry answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TableStream {
    Vocal,
    Accomp,
    /// Accompaniment conditioned on the full vocal track.
    AccompGivenVocal,
}

impl TableStream {
    pub fn code(self) -> u8 {
        match self {
            TableStream::Vocal => 0,
            TableStream::Accomp => 1,
            TableStream::AccompGivenVocal => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(TableStream::Vocal),
            1 => Some(TableStream::Accomp),
            2 => Some(TableStream::AccompGivenVocal),
            _ => None,
        }
    }

    fn for_query(q: &Query<'_>) -> Self {
        match (q.route, q.vocal_conditioned) {
            (Route::Vocal, _) => TableStream::Vocal,
            (Route::Accompaniment, false) => TableStream::Accomp,
            (Route::Accompaniment, true) => TableStream::AccompGivenVocal,
        }
    }
}

/// Precomputed per-position log-probabilities produced by an external model.
/// Row `t` of a table is the distribution for the token at position `t`.
#[derive(Debug, Clone, Default)]
pub struct TablePredictor {
    tables: BTreeMap<(usize, TableStream), Matrix>,
}

impl TablePredictor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, seq_index: usize, stream: TableStream, log_probs: Matrix) {
        self.tables.insert((seq_index, stream), log_probs);
    }

    pub fn has(&self, seq_index: usize, stream: TableStream) -> bool {
        self.tables.contains_key(&(seq_index, stream))
    }
}

impl Predictor for TablePredictor {
    fn log_probs(&self, q: &Query<'_>) -> Result<Vec<f64>> {
        let stream = TableStream::for_query(q);
        let m = self
            .tables
            .get(&(q.seq_index, stream))
            .ok_or_else(|| Error::param("predictor table", alloc::format!("missing {stream:?} for sequence {}", q.seq_index)))?;
        if q.position >= m.rows() {
            return Err(Error::IndexOutOfRange {
                index: q.position,
                bound: m.rows(),
            });
        }
        Ok(m.row(q.position).to_vec())
    }
}

fn checked_distribution(p: &impl Predictor, q: &Query<'_>) -> Result<Vec<f64>> {
    let lp = p.log_probs(q)?;
    let k = q.seq.track(q.route).vocab_size() as usize;
    if lp.len() != k {
        return Err(Error::Shape {
            what: "predictor output",
            expected: (1, k),
            found: (1, lp.len()),
        });
    }
    let sum: f64 = lp.iter().map(|&l| libm::exp(l)).sum();
    if !((sum - 1.0).abs() <= 1e-6) {
        return Err(Error::NotNormalized { row: q.position, sum });
    }
    Ok(lp)
}

/// Number of tokens ranked ahead of `target`: strictly more probable ones plus
/// equally probable ones with a lower index.
pub fn rank_of(log_probs: &[f64], target: usize) -> usize {
    let lt = log_probs[target];
    log_probs
        .iter()
        .enumerate()
        .filter(|&(j, &l)| l > lt || (l == lt && j < target))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
struct Scores {
    /// Mean over sequences of the per-sequence mean NLL.
    h: f64,
    topk: Vec<f64>,
}

fn score(
    p: &impl Predictor,
    seqs: &[DualTrackSequence],
    route: Route,
    start: usize,
    vocal_conditioned: bool,
    ks: &[usize],
) -> Result<Scores> {
    if seqs.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    let mut h_sum = 0.0;
    let mut hits = vec![0usize; ks.len()];
    let mut positions = 0usize;
    for (i, seq) in seqs.iter().enumerate() {
        let track = seq.track(route);
        let k = track.vocab_size() as usize;
        if let Some(&bad) = ks.iter().find(|&&kk| kk >= k) {
            return Err(Error::param("k", alloc::format!("top-{bad} needs k < vocabulary size {k}")));
        }
        if track.len() <= start {
            return Err(Error::Empty("scored span of sequence"));
        }
        let mut nll = 0.0;
        for t in start..track.len() {
            let q = Query {
                seq_index: i,
                seq,
                route,
                position: t,
                vocal_conditioned,
            };
            let lp = checked_distribution(p, &q)?;
            let target = track.indices()[t] as usize;
            nll -= lp[target];
            let r = rank_of(&lp, target);
            for (hit, &kk) in hits.iter_mut().zip(ks) {
                if r < kk {
                    *hit += 1;
                }
            }
        }
        let n = track.len() - start;
        h_sum += nll / n as f64;
        positions += n;
    }
    Ok(Scores {
        h: h_sum / seqs.len() as f64,
        topk: hits.iter().map(|&c| c as f64 / positions as f64).collect(),
    })
}

/// Teacher-forced cross-entropy of `route`, in nats per token, averaged per
/// sequence and then over sequences.
pub fn avg_cross_entropy(p: &impl Predictor, seqs: &[DualTrackSequence], route: Route) -> Result<f64> {
    Ok(score(p, seqs, route, 0, false, &[])?.h)
}

/// Fraction of positions whose target is among the `k` highest-ranked tokens,
/// pooled over all positions, for each `k` in `ks`.
pub fn topk_accuracy(
    p: &impl Predictor,
    seqs: &[DualTrackSequence],
    route: Route,
    ks: &[usize],
) -> Result<Vec<f64>> {
    Ok(score(p, seqs, route, 0, false, ks)?.topk)
}

/// `exp(H) · 1024 / S` for a head of vocabulary `S`.
pub fn ppl_at_1024(h: f64, vocab: f64) -> f64 {
    libm::exp(h) * PPL_REFERENCE_VOCAB / vocab
}

/// Combined PPL@1024 of parallel heads sharing vocabulary `S`: the head
/// losses are averaged before exponentiation.
pub fn overall_ppl(per_route_h: &[f64], vocab: f64) -> Result<f64> {
    if per_route_h.is_empty() {
        return Err(Error::Empty("per-route cross-entropies"));
    }
    let mean = per_route_h.iter().sum::<f64>() / per_route_h.len() as f64;
    Ok(ppl_at_1024(mean, vocab))
}

/// Geometric mean of per-route PPL@1024 values; equals [`overall_ppl`] when the
/// heads share a vocabulary.
pub fn combine_ppl(per_route_ppl: &[f64]) -> Result<f64> {
    if per_route_ppl.is_empty() {
        return Err(Error::Empty("per-route perplexities"));
    }
    let mean_log = per_route_ppl.iter().map(|&p| libm::log(p)).sum::<f64>() / per_route_ppl.len() as f64;
    Ok(libm::exp(mean_log))
}

/// Prefix length in tokens for a context of `seconds` at `rate` tokens/s.
pub fn prefix_frames(rate: f64, seconds: f64) -> usize {
    libm::round(rate * seconds) as usize
}

/// Mean NLL of accompaniment tokens after the first `tau`, each conditioned on
/// the whole vocal track and the accompaniment so far.
pub fn conditional_eval(p: &impl Predictor, seq: &DualTrackSequence, tau: usize) -> Result<f64> {
    if tau >= seq.len() {
        return Err(Error::param("tau", alloc::format!("prefix {tau} must be shorter than {}", seq.len())));
    }
    Ok(score(p, core::slice::from_ref(seq), Route::Accompaniment, tau, true, &[])?.h)
}

/// [`conditional_eval`] averaged over sequences, plus pooled top-k accuracy.
pub fn conditional_scores(
    p: &impl Predictor,
    seqs: &[DualTrackSequence],
    tau: usize,
    ks: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if let Some(s) = seqs.iter().find(|s| tau >= s.len()) {
        return Err(Error::param("tau", alloc::format!("prefix {tau} must be shorter than {}", s.len())));
    }
    let s = score(p, seqs, Route::Accompaniment, tau, true, ks)?;
    Ok((s.h, s.topk))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// `vocal`, `accomp`, `overall` or `vocal_cond`.
    pub label: String,
    pub h_nats: f64,
    pub ppl_at_1024: f64,
    /// Accuracies for [`TOPK`].
    pub topk: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, label: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

fn topk_array(v: &[f64]) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

/// Per-route and overall scores, plus the vocal-conditioned row when `tau` is
/// given. The overall row averages the route cross-entropies and top-k values
/// and combines perplexities geometrically.
pub fn evaluate(p: &impl Predictor, seqs: &[DualTrackSequence], tau: Option<usize>) -> Result<EvalReport> {
    let first = seqs.first().ok_or(Error::Empty("evaluation corpus"))?;
    let mut rows = Vec::new();
    for route in Route::ALL {
        let s = score(p, seqs, route, 0, false, &TOPK)?;
        let vocab = first.track(route).vocab_size() as f64;
        rows.push(ReportRow {
            label: route.name().into(),
            h_nats: s.h,
            ppl_at_1024: ppl_at_1024(s.h, vocab),
            topk: topk_array(&s.topk),
        });
    }
    let overall = ReportRow {
        label: "overall".into(),
        h_nats: (rows[0].h_nats + rows[1].h_nats) / 2.0,
        ppl_at_1024: combine_ppl(&[rows[0].ppl_at_1024, rows[1].ppl_at_1024])?,
        topk: core::array::from_fn(|i| (rows[0].topk[i] + rows[1].topk[i]) / 2.0),
    };
    rows.push(overall);
    if let Some(tau) = tau {
        let (h, topk) = conditional_scores(p, seqs, tau, &TOPK)?;
        let vocab = first.accomp().vocab_size() as f64;
        rows.push(ReportRow {
            label: "vocal_cond".into(),
            h_nats: h,
            ppl_at_1024: ppl_at_1024(h, vocab),
            topk: topk_array(&topk),
        });
    }
    Ok(EvalReport { rows })
}
