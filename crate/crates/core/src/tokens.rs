//! Token streams for the two routed tracks and bitrate arithmetic.

use alloc::vec::Vec;

use crate::{Error, Result, Route};

/// Token rate of the dual-track tokenizer, in tokens per second per track.
pub const DEFAULT_TOKEN_RATE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackTokens {
    route: Route,
    vocab_size: u32,
    rate: f32,
    indices: Vec<u32>,
}

impl TrackTokens {
    pub fn new(route: Route, vocab_size: u32, rate: f32, indices: Vec<u32>) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::param("vocab_size", "need at least 2 tokens"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::param("token rate", "must be positive"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab_size) {
            return Err(Error::IndexOutOfRange {
                index: bad as usize,
                bound: vocab_size as usize,
            });
        }
        Ok(Self {
            route,
            vocab_size,
            rate,
            indices,
        })
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn rate(&self) -> f32 {
        self.rate
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.indices.len() as f64 / self.rate as f64
    }
}

/// Synchronised vocal and accompaniment streams of equal length and rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTrackSequence {
    vocal: TrackTokens,
    accomp: TrackTokens,
}

impl DualTrackSequence {
    pub fn vocal(&self) -> &TrackTokens {
        &self.vocal
    }

    pub fn accomp(&self) -> &TrackTokens {
        &self.accomp
    }

    pub fn track(&self, route: Route) -> &TrackTokens {
        match route {
            Route::Vocal => &self.vocal,
            Route::Accompaniment => &self.accomp,
        }
    }

    pub fn len(&self) -> usize {
        self.vocal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocal.is_empty()
    }

    pub fn rate(&self) -> f32 {
        self.vocal.rate
    }

    pub fn into_tracks(self) -> (TrackTokens, TrackTokens) {
        (self.vocal, self.accomp)
    }
}

/// Pairs two tracks after checking routes, lengths and rates.
pub fn align(vocal: TrackTokens, accomp: TrackTokens) -> Result<DualTrackSequence> {
    if vocal.route != Route::Vocal {
        return Err(Error::param("vocal track", "route must be vocal"));
    }
    if accomp.route != Route::Accompaniment {
        return Err(Error::param("accompaniment track", "route must be accompaniment"));
    }
    if vocal.len() != accomp.len() {
        return Err(Error::LengthMismatch {
            vocal: vocal.len(),
            accomp: accomp.len(),
        });
    }
    if vocal.rate != accomp.rate {
        return Err(Error::RateMismatch {
            vocal: vocal.rate as f64,
            accomp: accomp.rate as f64,
        });
    }
    Ok(DualTrackSequence { vocal, accomp })
}

/// Sizes of the parallel codebooks of a tokenizer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabSpec {
    sizes: Vec<u32>,
}

impl VocabSpec {
    pub fn new(sizes: Vec<u32>) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&k| k < 2) {
            return Err(Error::param("codebook sizes", "need at least one size, all >= 2"));
        }
        Ok(Self { sizes })
    }

    /// `count` codebooks of `size` entries each (the `count × size` notation).
    pub fn repeated(count: usize, size: u32) -> Result<Self> {
        Self::new(alloc::vec![size; count])
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    /// Vocabulary seen by one prediction head. Heads of differing size have no
    /// single answer, so this is `None` for mixed specs.
    pub fn per_head(&self) -> Option<u32> {
        let first = self.sizes[0];
        self.sizes.iter().all(|&k| k == first).then_some(first)
    }

    pub fn bits_per_frame(&self) -> f64 {
        self.sizes.iter().map(|&k| libm::log2(k as f64)).sum()
    }
}

/// `rate · Σ log2(K_i) / 1000`.
pub fn bitrate_kbps(rate: f64, codebook_sizes: &[u32]) -> Result<f64> {
    let spec = VocabSpec::new(codebook_sizes.to_vec())?;
    Ok(rate * spec.bits_per_frame() / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn track_validation() {
        assert!(TrackTokens::new(Route::Vocal, 8, 25.0, vec![0, 7]).is_ok());
        assert!(matches!(
            TrackTokens::new(Route::Vocal, 8, 25.0, vec![8]),
            Err(Error::IndexOutOfRange { index: 8, bound: 8 })
        ));
        assert!(TrackTokens::new(Route::Vocal, 1, 25.0, vec![]).is_err());
        assert!(TrackTokens::new(Route::Vocal, 8, 0.0, vec![]).is_err());
    }

    #[test]
    fn align_cases() {
        let v = TrackTokens::new(Route::Vocal, 8, 25.0, vec![1; 100]).unwrap();
        let a = TrackTokens::new(Route::Accompaniment, 8, 25.0, vec![2; 100]).unwrap();
        let seq = align(v.clone(), a.clone()).unwrap();
        assert_eq!(seq.len(), 100);
        assert_eq!(seq.track(Route::Accompaniment).indices()[0], 2);

        let short = TrackTokens::new(Route::Accompaniment, 8, 25.0, vec![2; 99]).unwrap();
        let err = align(v.clone(), short).unwrap_err();
        assert_eq!(err, Error::LengthMismatch { vocal: 100, accomp: 99 });
        let msg = alloc::format!("{err}");
        assert!(msg.contains("100") && msg.contains("99"));

        let fast = TrackTokens::new(Route::Accompaniment, 8, 50.0, vec![2; 100]).unwrap();
        assert!(matches!(align(v.clone(), fast), Err(Error::RateMismatch { .. })));
        assert!(align(a, v).is_err());
    }

    #[test]
    fn bitrates() {
        assert!((bitrate_kbps(75.0, &[1024; 8]).unwrap() - 6.0).abs() < 1e-12);
        assert!((bitrate_kbps(25.0, &[32768, 32768]).unwrap() - 0.75).abs() < 1e-12);
        assert!((bitrate_kbps(40.0, &[4096]).unwrap() - 0.48).abs() < 1e-12);
        assert!(bitrate_kbps(25.0, &[1]).is_err());
    }

    #[test]
    fn vocab_spec() {
        let s = VocabSpec::repeated(2, 32768).unwrap();
        assert_eq!(s.per_head(), Some(32768));
        assert_eq!(s.bits_per_frame(), 30.0);
        assert_eq!(VocabSpec::new(vec![4, 8]).unwrap().per_head(), None);
        assert!(VocabSpec::new(vec![]).is_err());
    }
}
