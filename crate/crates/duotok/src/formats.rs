//! Little-endian binary containers.
//!
//! | magic  | payload                                                        |
//! |--------|----------------------------------------------------------------|
//! | `DTFT` | version u16, U u32, dim u32, frame_rate f32, U·dim f32         |
//! | `DTRQ` | version u16, seed u64, d_in u32, d_proj u32, K u32              |
//! | `DTCB` | version u16, K u32, d u32, K·d f64 (C), d·d f64 (W)             |
//! | `DTOK` | version u16, tracks u8, per track: route u8, K u32, rate f32, length u64, length u32 |
//! | `DTLP` | version u16, stream u8, K u32, T u32, T·K f32                   |
//!
//! A codebook bank file is a vocal `DTCB` record followed by an accompaniment one.

use std::fs;
use std::path::Path;

use duotok_core::bestrq::RandomQuantizer;
use duotok_core::lmeval::TableStream;
use duotok_core::simvq::{Codebook, DualCodebookBank};
use duotok_core::tokens::{align, DualTrackSequence, TrackTokens};
use duotok_core::{FeatureSequence, Matrix, Route};

use crate::error::{Error, Result};

pub const FEATURES_MAGIC: [u8; 4] = *b"DTFT";
pub const QUANTIZER_MAGIC: [u8; 4] = *b"DTRQ";
pub const CODEBOOK_MAGIC: [u8; 4] = *b"DTCB";
pub const TOKENS_MAGIC: [u8; 4] = *b"DTOK";
pub const LOGPROBS_MAGIC: [u8; 4] = *b"DTLP";
pub const VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn open(buf: &'a [u8], magic: [u8; 4], what: &'static str) -> Result<Self> {
        if buf.len() < 4 || buf[..4] != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found: buf[..buf.len().min(4)].to_vec(),
            });
        }
        let mut r = Reader { buf, pos: 4, what };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion { format: what, version });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                what: self.what,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    /// Checks the remaining length up front so a hostile header cannot force a
    /// huge allocation.
    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Invalid("element count overflows".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Invalid("element count overflows".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(Error::TrailingBytes(n)),
        }
    }
}

fn header(magic: [u8; 4]) -> Vec<u8> {
    let mut out = magic.to_vec();
    out.extend_from_slice(&VERSION.to_le_bytes());
    out
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Invalid(format!("{what} {n} does not fit in u32")))
}

/// Values are stored as f32; anything not exactly representable is rounded.
pub fn encode_features(f: &FeatureSequence) -> Result<Vec<u8>> {
    let mut out = header(FEATURES_MAGIC);
    out.extend_from_slice(&dim_u32(f.frames(), "frame count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(f.dim(), "feature dim")?.to_le_bytes());
    out.extend_from_slice(&(f.frame_rate() as f32).to_le_bytes());
    for &v in f.values().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(buf: &[u8]) -> Result<FeatureSequence> {
    let mut r = Reader::open(buf, FEATURES_MAGIC, "DTFT")?;
    let u = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let rate = r.f32()? as f64;
    let data = r.f32s(u.checked_mul(dim).ok_or_else(|| Error::Invalid("U·dim overflows".into()))?)?;
    r.finish()?;
    Ok(FeatureSequence::new(Matrix::from_vec(u, dim, data)?, rate)?)
}

pub fn encode_quantizer(rq: &RandomQuantizer) -> Result<Vec<u8>> {
    let mut out = header(QUANTIZER_MAGIC);
    out.extend_from_slice(&rq.seed().to_le_bytes());
    out.extend_from_slice(&dim_u32(rq.input_dim(), "d_in")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(rq.proj_dim(), "d_proj")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(rq.codebook_size(), "codebook size")?.to_le_bytes());
    Ok(out)
}

/// Matrices are regenerated from the stored seed.
pub fn decode_quantizer(buf: &[u8]) -> Result<RandomQuantizer> {
    let mut r = Reader::open(buf, QUANTIZER_MAGIC, "DTRQ")?;
    let seed = r.u64()?;
    let d_in = r.u32()? as usize;
    let d_proj = r.u32()? as usize;
    let k = r.u32()? as usize;
    r.finish()?;
    Ok(RandomQuantizer::new(seed, d_in, d_proj, k)?)
}

fn push_codebook(out: &mut Vec<u8>, cb: &Codebook) -> Result<()> {
    out.extend_from_slice(&header(CODEBOOK_MAGIC));
    out.extend_from_slice(&dim_u32(cb.size(), "codebook size")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(cb.dim(), "code dim")?.to_le_bytes());
    for m in [cb.frozen(), cb.basis()] {
        for &v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

fn read_codebook(buf: &[u8]) -> Result<(Codebook, usize)> {
    let mut r = Reader::open(buf, CODEBOOK_MAGIC, "DTCB")?;
    let k = r.u32()? as usize;
    let d = r.u32()? as usize;
    let c = r.f64s(k.checked_mul(d).ok_or_else(|| Error::Invalid("K·d overflows".into()))?)?;
    let w = r.f64s(d * d)?;
    let cb = Codebook::from_parts(Matrix::from_vec(k, d, c)?, Matrix::from_vec(d, d, w)?, 0)?;
    Ok((cb, r.pos))
}

/// The seed is not persisted; a decoded codebook reports seed 0.
pub fn encode_codebook(cb: &Codebook) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    push_codebook(&mut out, cb)?;
    Ok(out)
}

pub fn decode_codebook(buf: &[u8]) -> Result<Codebook> {
    let (cb, used) = read_codebook(buf)?;
    match buf.len() - used {
        0 => Ok(cb),
        n => Err(Error::TrailingBytes(n)),
    }
}

pub fn encode_bank(bank: &DualCodebookBank) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for route in Route::ALL {
        push_codebook(&mut out, bank.get(route))?;
    }
    Ok(out)
}

pub fn decode_bank(buf: &[u8]) -> Result<DualCodebookBank> {
    let (vocal, used) = read_codebook(buf)?;
    let accomp = decode_codebook(&buf[used..])?;
    Ok(DualCodebookBank::new(vocal, accomp)?)
}

/// A token file holds one track or a vocal/accompaniment pair.
#[derive(Debug, Clone, PartialEq)]
pub enum TokenFile {
    Single(TrackTokens),
    Dual(DualTrackSequence),
}

impl TokenFile {
    pub fn tracks(&self) -> Vec<&TrackTokens> {
        match self {
            TokenFile::Single(t) => vec![t],
            TokenFile::Dual(s) => vec![s.vocal(), s.accomp()],
        }
    }

    pub fn into_dual(self) -> Result<DualTrackSequence> {
        match self {
            TokenFile::Dual(s) => Ok(s),
            TokenFile::Single(t) => Err(Error::Invalid(format!(
                "token file holds only the {} track",
                t.route().name()
            ))),
        }
    }
}

pub fn encode_tokens(file: &TokenFile) -> Result<Vec<u8>> {
    let tracks = file.tracks();
    let mut out = header(TOKENS_MAGIC);
    out.push(tracks.len() as u8);
    for t in tracks {
        out.push(t.route().code());
        out.extend_from_slice(&t.vocab_size().to_le_bytes());
        out.extend_from_slice(&t.rate().to_le_bytes());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for &i in t.indices() {
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_tokens(buf: &[u8]) -> Result<TokenFile> {
    let mut r = Reader::open(buf, TOKENS_MAGIC, "DTOK")?;
    let count = r.u8()?;
    if !(1..=2).contains(&count) {
        return Err(Error::Invalid(format!("track count {count}, expected 1 or 2")));
    }
    let mut tracks = Vec::new();
    for _ in 0..count {
        let code = r.u8()?;
        let route = Route::from_code(code).ok_or_else(|| Error::Invalid(format!("route byte {code}")))?;
        let k = r.u32()?;
        let rate = r.f32()?;
        let len = usize::try_from(r.u64()?).map_err(|_| Error::Invalid("track length overflows".into()))?;
        let bytes = r.take(len.checked_mul(4).ok_or_else(|| Error::Invalid("track length overflows".into()))?)?;
        let indices = bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tracks.push(TrackTokens::new(route, k, rate, indices)?);
    }
    r.finish()?;
    let mut it = tracks.into_iter();
    let first = it.next().expect("count >= 1");
    Ok(match it.next() {
        None => TokenFile::Single(first),
        Some(second) => TokenFile::Dual(align(first, second)?),
    })
}

/// Per-position log-probabilities from an external model for one stream of
/// one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbTable {
    pub stream: TableStream,
    /// T × K, natural-log probabilities.
    pub values: Matrix,
}

pub fn encode_logprobs(t: &LogProbTable) -> Result<Vec<u8>> {
    let mut out = header(LOGPROBS_MAGIC);
    out.push(t.stream.code());
    out.extend_from_slice(&dim_u32(t.values.cols(), "vocabulary size")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(t.values.rows(), "position count")?.to_le_bytes());
    for &v in t.values.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_logprobs(buf: &[u8]) -> Result<LogProbTable> {
    let mut r = Reader::open(buf, LOGPROBS_MAGIC, "DTLP")?;
    let code = r.u8()?;
    let stream = TableStream::from_code(code).ok_or_else(|| Error::Invalid(format!("stream byte {code}")))?;
    let k = r.u32()? as usize;
    let t = r.u32()? as usize;
    let data = r.f32s(t.checked_mul(k).ok_or_else(|| Error::Invalid("T·K overflows".into()))?)?;
    r.finish()?;
    Ok(LogProbTable {
        stream,
        values: Matrix::from_vec(t, k, data)?,
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
