//! Builtin reference compressor.
//!
//! A byte-oriented LZSS coder with a fixed 32 KiB window and greedy
//! longest-match parsing over hash chains. The stream layout is:
//!
//! ```text
//! magic (0xC5) | version (0x01) | varint(original length) | groups...
//! group := flag byte, then up to 8 tokens (bit i set => token i is a match)
//! literal := 1 byte
//! match   := u16 LE (distance - 1) | u8 (length - MIN_MATCH)
//! ```
//!
//! Everything here is deterministic: the same input always yields the same
//! bytes, which is what the golden tests pin.

use std::fmt;

pub const WINDOW: usize = 32 * 1024;
pub const MIN_MATCH: usize = 4;
pub const MAX_MATCH: usize = MIN_MATCH + 255;

const MAGIC: u8 = 0xC5;
/// Stream format version written after the magic byte.
pub const VERSION: u8 = 0x01;
const HASH_BITS: u32 = 15;
const MAX_CHAIN: usize = 128;
const NIL: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeError(pub &'static str);

impl fmt::Display for DecodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "corrupt lzss stream: {}", self.0)
    }
}

impl std::error::Error for DecodeError {}

#[inline]
fn hash4(b: &[u8]) -> usize {
    let v = u32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    (v.wrapping_mul(0x9E37_79B1) >> (32 - HASH_BITS)) as usize
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn get_varint(input: &[u8], pos: &mut usize) -> Result<u64, DecodeError> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let byte = *input.get(*pos).ok_or(DecodeError("truncated length"))?;
        *pos += 1;
        v |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
    }
    Err(DecodeError("length varint overflow"))
}

struct MatchFinder {
    head: Vec<u32>,
    prev: Vec<u32>,
}

impl MatchFinder {
    fn new(len: usize) -> Self {
        Self {
            head: vec![NIL; 1 << HASH_BITS],
            prev: vec![NIL; len],
        }
    }

    fn insert(&mut self, data: &[u8], pos: usize) {
        if pos + MIN_MATCH <= data.len() {
            let h = hash4(&data[pos..]);
            self.prev[pos] = self.head[h];
            self.head[h] = pos as u32;
        }
    }

    /// Longest match for `pos` against earlier positions inside the window.
    /// Ties resolve to the nearest candidate.
    fn longest(&self, data: &[u8], pos: usize) -> Option<(usize, usize)> {
        if pos + MIN_MATCH > data.len() {
            return None;
        }
        let limit = (data.len() - pos).min(MAX_MATCH);
        let mut cand = self.head[hash4(&data[pos..])];
        let mut best: Option<(usize, usize)> = None;
        let mut steps = 0;
        while cand != NIL && steps < MAX_CHAIN {
            let c = cand as usize;
            let dist = pos - c;
            if dist > WINDOW {
                break;
            }
            let len = data[c..]
                .iter()
                .zip(&data[pos..pos + limit])
                .take_while(|(a, b)| a == b)
                .count();
            if len >= MIN_MATCH && best.is_none_or(|(_, l)| len > l) {
                best = Some((dist, len));
                if len == limit {
                    break;
                }
            }
            cand = self.prev[c];
            steps += 1;
        }
        best
    }
}

pub fn compress(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() / 2 + 16);
    out.push(MAGIC);
    out.push(VERSION);
    put_varint(&mut out, data.len() as u64);

    let mut finder = MatchFinder::new(data.len());
    let mut flag_at = usize::MAX;
    let mut ntok = 8;
    let mut pos = 0;
    while pos < data.len() {
        if ntok == 8 {
            flag_at = out.len();
            out.push(0);
            ntok = 0;
        }
        match finder.longest(data, pos) {
            Some((dist, len)) => {
                out[flag_at] |= 1 << ntok;
                out.extend_from_slice(&((dist - 1) as u16).to_le_bytes());
                out.push((len - MIN_MATCH) as u8);
                for p in pos..pos + len {
                    finder.insert(data, p);
                }
                pos += len;
            }
            None => {
                out.push(data[pos]);
                finder.insert(data, pos);
                pos += 1;
            }
        }
        ntok += 1;
    }
    out
}

pub fn decompress(stream: &[u8]) -> Result<Vec<u8>, DecodeError> {
    if stream.len() < 2 || stream[0] != MAGIC || stream[1] != VERSION {
        return Err(DecodeError("bad header"));
    }
    let mut pos = 2;
    let expected = get_varint(stream, &mut pos)? as usize;
    let mut out = Vec::with_capacity(expected);
    while out.len() < expected {
        let flags = *stream.get(pos).ok_or(DecodeError("missing flag byte"))?;
        pos += 1;
        for bit in 0..8 {
            if out.len() >= expected {
                break;
            }
            if flags & (1 << bit) == 0 {
                out.push(*stream.get(pos).ok_or(DecodeError("missing literal"))?);
                pos += 1;
            } else {
                let tok = stream.get(pos..pos + 3).ok_or(DecodeError("truncated match"))?;
                pos += 3;
                let dist = u16::from_le_bytes([tok[0], tok[1]]) as usize + 1;
                let len = tok[2] as usize + MIN_MATCH;
                if dist > out.len() {
                    return Err(DecodeError("distance before start of output"));
                }
                let start = out.len() - dist;
                for i in 0..len {
                    let b = out[start + i];
                    out.push(b);
                }
            }
        }
    }
    if pos != stream.len() || out.len() != expected {
        return Err(DecodeError("length mismatch"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_input_is_header_only() {
        assert_eq!(compress(b""), vec![MAGIC, VERSION, 0]);
        assert_eq!(decompress(&compress(b"")).unwrap(), b"");
    }

    #[test]
    fn golden_repeated_byte() {
        // Header 4 bytes, 5 flag bytes, one literal, 39 matches of 3 bytes.
        let data = vec![b'a'; 10_000];
        let z = compress(&data);
        assert_eq!(z.len(), 127);
        assert_eq!(decompress(&z).unwrap(), data);
    }

    #[test]
    fn golden_short_text() {
        let z = compress(b"abcabcabcabcabc");
        assert_eq!(z, vec![MAGIC, VERSION, 15, 0b1000, b'a', b'b', b'c', 2, 0, 8]);
    }

    #[test]
    fn random_data_expands_by_flag_overhead_only() {
        let mut buf = vec![0u8; 10_000];
        ChaCha8Rng::seed_from_u64(7).fill_bytes(&mut buf);
        let z = compress(&buf);
        assert!(z.len() >= 10_000 && z.len() <= 10_000 + 10_000 / 8 + 8, "{}", z.len());
    }

    #[test]
    fn rejects_corrupt_streams() {
        assert!(decompress(b"").is_err());
        assert!(decompress(&[MAGIC, VERSION, 4, 0b1, 9, 0, 0]).is_err());
        let mut z = compress(b"hello hello hello");
        z.pop();
        assert!(decompress(&z).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(data in proptest::collection::vec(0u8..4, 0..3000)) {
            prop_assert_eq!(decompress(&compress(&data)).unwrap(), data);
        }
    }
}
