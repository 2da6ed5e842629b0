//! Payload chunking and chunk identity.
//!
//! A flow's payload bytes are concatenated in packet order into a single
//! stream, and the stream is cut into chunks in one of three modes:
//!
//! * **CDC** — content-defined boundaries from a rolling Rabin
//!   fingerprint over a sliding 48-byte window. A boundary is declared
//!   after a byte when the low bits of the fingerprint are all ones
//!   (`fp & (target-1) == target-1`), subject to a minimum chunk size of
//!   `target/4` and a forced cut at `target*4`. Because the decision
//!   depends only on the preceding 48 bytes (plus the size clamps),
//!   boundaries survive insertions and deletions elsewhere in the
//!   stream — the property that makes dedup robust to shifts.
//! * **Fixed** — consecutive `target`-sized pieces.
//! * **None** — the whole stream as one chunk.
//!
//! Chunk identity is the first 20 bytes of the SHA-256 digest of the
//! chunk's raw content. At desktop-archive scale (well under 2^40
//! chunks) the truncated digest keeps accidental collision probability
//! below 2^-80, while shaving 12 bytes per in-memory index entry.

use std::fmt;
use std::sync::LazyLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::varint;

/// Degree-64 irreducible polynomial over GF(2) for the Rabin
/// fingerprint (the x^64 term is implicit).
pub const RABIN_POLY: u64 = 0xbfe6b8a5bf378d83;

/// Sliding window length in bytes.
pub const RABIN_WINDOW: usize = 48;

/// Magic byte opening every chunk record in a segment file.
pub const CHUNK_RECORD_MAGIC: u8 = 0xC4;

/// Bytes of SHA-256 digest kept as the chunk identity.
pub const CHUNK_HASH_LEN: usize = 20;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChunkHash(pub [u8; CHUNK_HASH_LEN]);

impl ChunkHash {
    pub fn of(data: &[u8]) -> ChunkHash {
        let digest = Sha256::digest(data);
        let mut out = [0u8; CHUNK_HASH_LEN];
        out.copy_from_slice(&digest[..CHUNK_HASH_LEN]);
        ChunkHash(out)
    }
}

impl fmt::Debug for ChunkHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

/// Where a chunk record lives: which segment file, and the byte offset
/// of its record within that file (after the file header). Packs into a
/// single u64 for storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChunkLocation {
    pub segment: u32,
    pub offset: u32,
}

impl ChunkLocation {
    pub fn to_u64(self) -> u64 {
        (u64::from(self.segment) << 32) | u64::from(self.offset)
    }

    pub fn from_u64(v: u64) -> ChunkLocation {
        ChunkLocation {
            segment: (v >> 32) as u32,
            offset: v as u32,
        }
    }
}

/// One payload chunk referenced by a flow: where it is stored plus its
/// uncompressed length (needed to slice the reassembled stream without
/// reading the record).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkRef {
    pub location: ChunkLocation,
    pub raw_len: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkingMode {
    Cdc,
    Fixed,
    None,
}

impl ChunkingMode {
    pub fn name(self) -> &'static str {
        match self {
            ChunkingMode::Cdc => "cdc",
            ChunkingMode::Fixed => "fixed",
            ChunkingMode::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkingConfig {
    pub mode: ChunkingMode,
    /// Target (CDC) or exact (Fixed) chunk size in bytes. Ignored for
    /// `None`.
    pub target: u32,
}

impl ChunkingConfig {
    pub fn cdc(target: u32) -> ChunkingConfig {
        ChunkingConfig { mode: ChunkingMode::Cdc, target }
    }

    pub fn fixed(target: u32) -> ChunkingConfig {
        ChunkingConfig { mode: ChunkingMode::Fixed, target }
    }

    pub fn whole() -> ChunkingConfig {
        ChunkingConfig { mode: ChunkingMode::None, target: 0 }
    }

    pub fn min_size(&self) -> usize {
        self.target as usize / 4
    }

    pub fn max_size(&self) -> usize {
        self.target as usize * 4
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            ChunkingMode::Cdc => {
                if !self.target.is_power_of_two() || self.target < 256 || self.target > 1 << 20 {
                    return Err(Error::InvalidConfig(format!(
                        "cdc target size must be a power of two in [256, 1048576], got {}",
                        self.target
                    )));
                }
            }
            ChunkingMode::Fixed => {
                if self.target == 0 || self.target > 1 << 22 {
                    return Err(Error::InvalidConfig(format!(
                        "fixed chunk size must be in [1, 4194304], got {}",
                        self.target
                    )));
                }
            }
            ChunkingMode::None => {}
        }
        Ok(())
    }

    /// Spelled form used by CLI flags and reports: `cdc:4096`,
    /// `fixed:4096`, or `none`.
    pub fn label(&self) -> String {
        match self.mode {
            ChunkingMode::None => "none".to_string(),
            m => format!("{}:{}", m.name(), self.target),
        }
    }

    pub fn parse_label(s: &str) -> Result<ChunkingConfig> {
        let bad = || Error::InvalidConfig(format!("unrecognized chunking '{s}' (expected cdc:<size>, fixed:<size>, or none)"));
        let cfg = if s == "none" {
            ChunkingConfig::whole()
        } else if let Some(rest) = s.strip_prefix("cdc:") {
            ChunkingConfig::cdc(rest.parse().map_err(|_| bad())?)
        } else if let Some(rest) = s.strip_prefix("fixed:") {
            ChunkingConfig::fixed(rest.parse().map_err(|_| bad())?)
        } else {
            return Err(bad());
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Precomputed GF(2) reduction tables. `shift_out[v]` is
/// `v * x^(8*(RABIN_WINDOW-1)) mod P`, used to cancel the byte leaving
/// the window; `shift_in[v]` is `v * x^64 mod P`, used to reduce the
/// top byte pushed out when the fingerprint is multiplied by x^8.
struct RabinTables {
    shift_in: [u64; 256],
    shift_out: [u64; 256],
}

/// Multiplies a residue by x (one left shift) modulo P.
fn shift_left_mod(mut v: u64) -> u64 {
    let carry = v >> 63;
    v <<= 1;
    if carry != 0 {
        v ^= RABIN_POLY;
    }
    v
}

static TABLES: LazyLock<RabinTables> = LazyLock::new(|| {
    // powers[i] = x^(64+i) mod P for i in 0..8
    let mut powers = [0u64; 8];
    powers[0] = RABIN_POLY; // x^64 ≡ P's low part (mod x^64 + P)
    for i in 1..8 {
        powers[i] = shift_left_mod(powers[i - 1]);
    }
    let mut shift_in = [0u64; 256];
    for v in 0..256usize {
        let mut acc = 0u64;
        for (i, p) in powers.iter().enumerate() {
            if v >> i & 1 == 1 {
                acc ^= p;
            }
        }
        shift_in[v] = acc;
    }

    // The outgoing byte is cancelled before the fingerprint is
    // multiplied by x^8, at which point its contribution sits at
    // x^(8*(WINDOW-1)). out_base holds that power; per-bit multiples
    // cover each possible outgoing byte value.
    let mut out_base = 1u64;
    for _ in 0..8 * (RABIN_WINDOW - 1) {
        out_base = shift_left_mod(out_base);
    }
    let mut out_powers = [0u64; 8];
    out_powers[0] = out_base;
    for i in 1..8 {
        out_powers[i] = shift_left_mod(out_powers[i - 1]);
    }
    let mut shift_out = [0u64; 256];
    for v in 0..256usize {
        let mut acc = 0u64;
        for (i, p) in out_powers.iter().enumerate() {
            if v >> i & 1 == 1 {
                acc ^= p;
            }
        }
        shift_out[v] = acc;
    }

    RabinTables { shift_in, shift_out }
});

/// Rolling Rabin fingerprint over the last [`RABIN_WINDOW`] bytes seen.
pub struct RollingHash {
    fp: u64,
    window: [u8; RABIN_WINDOW],
    pos: usize,
    fed: usize,
}

impl RollingHash {
    pub fn new() -> RollingHash {
        RollingHash { fp: 0, window: [0; RABIN_WINDOW], pos: 0, fed: 0 }
    }

    #[inline]
    pub fn push(&mut self, byte: u8) {
        let t = &*TABLES;
        if self.fed >= RABIN_WINDOW {
            let outgoing = self.window[self.pos];
            self.fp ^= t.shift_out[outgoing as usize];
        }
        self.fp = (self.fp << 8 | u64::from(byte)) ^ t.shift_in[(self.fp >> 56) as usize];
        self.window[self.pos] = byte;
        self.pos = (self.pos + 1) % RABIN_WINDOW;
        self.fed += 1;
    }

    pub fn fingerprint(&self) -> u64 {
        self.fp
    }
}

impl Default for RollingHash {
    fn default() -> Self {
        Self::new()
    }
}

/// Cuts `stream` into chunks per `config`, returning `(start, len)`
/// pairs that tile the stream exactly. An empty stream yields no chunks.
pub fn chunk_boundaries(stream: &[u8], config: &ChunkingConfig) -> Vec<(usize, usize)> {
    match config.mode {
        ChunkingMode::None => {
            if stream.is_empty() {
                Vec::new()
            } else {
                vec![(0, stream.len())]
            }
        }
        ChunkingMode::Fixed => {
            let size = config.target as usize;
            let mut out = Vec::with_capacity(stream.len() / size + 1);
            let mut start = 0;
            while start < stream.len() {
                let len = size.min(stream.len() - start);
                out.push((start, len));
                start += len;
            }
            out
        }
        ChunkingMode::Cdc => cdc_boundaries(stream, config),
    }
}

fn cdc_boundaries(stream: &[u8], config: &ChunkingConfig) -> Vec<(usize, usize)> {
    let mask = u64::from(config.target) - 1;
    let min = config.min_size();
    let max = config.max_size();
    let mut out = Vec::new();
    let mut hash = RollingHash::new();
    let mut chunk_start = 0usize;
    for (i, &b) in stream.iter().enumerate() {
        // The fingerprint rolls continuously across boundaries, so a
        // cut decision depends only on nearby content, not on where the
        // previous cut happened to land.
        hash.push(b);
        let len = i + 1 - chunk_start;
        let hit = len >= min && (hash.fingerprint() & mask) == mask;
        if hit || len >= max {
            out.push((chunk_start, len));
            chunk_start = i + 1;
        }
    }
    if chunk_start < stream.len() {
        out.push((chunk_start, stream.len() - chunk_start));
    }
    out
}

/// Serializes one chunk record as it lives inside a segment file:
/// magic, raw length, stored length, compressor id, stored bytes.
pub fn write_chunk_record(out: &mut Vec<u8>, raw_len: u32, compressor_id: u8, stored: &[u8]) {
    out.push(CHUNK_RECORD_MAGIC);
    varint::put_u64(out, u64::from(raw_len));
    varint::put_u64(out, stored.len() as u64);
    out.push(compressor_id);
    out.extend_from_slice(stored);
}

/// Parses just the framing of a chunk record from a prefix of its
/// bytes, returning `(raw_len, compressor_id, framing_len, stored_len)`.
/// The stored bytes occupy `[framing_len, framing_len + stored_len)`;
/// a random-access reader can size its second read exactly instead of
/// guessing the record length up front.
pub fn read_chunk_record_header(
    prefix: &[u8],
    context_offset: u64,
) -> Result<(u32, u8, usize, usize)> {
    let corrupt = |reason: &str| Error::Corrupt {
        context: "chunk record".to_string(),
        offset: context_offset,
        reason: reason.to_string(),
    };
    if prefix.first() != Some(&CHUNK_RECORD_MAGIC) {
        return Err(corrupt("bad record magic"));
    }
    let mut r = varint::Reader::new(&prefix[1..]);
    let raw_len = r.u64().map_err(|_| corrupt("truncated raw length"))?;
    let stored_len = r.u64().map_err(|_| corrupt("truncated stored length"))?;
    let compressor_id = r.byte().map_err(|_| corrupt("truncated compressor id"))?;
    if raw_len > 1 << 30 {
        return Err(corrupt("raw length implausible"));
    }
    if stored_len > raw_len {
        return Err(corrupt("stored length exceeds raw length"));
    }
    Ok((raw_len as u32, compressor_id, 1 + r.pos(), stored_len as usize))
}

/// Parses a complete chunk record starting at `bytes[0]`, returning
/// `(raw_len, compressor_id, stored_bytes, record_len)`.
pub fn read_chunk_record(bytes: &[u8], context_offset: u64) -> Result<(u32, u8, &[u8], usize)> {
    let (raw_len, compressor_id, framing_len, stored_len) =
        read_chunk_record_header(bytes, context_offset)?;
    let total = framing_len + stored_len;
    if bytes.len() < total {
        return Err(Error::Corrupt {
            context: "chunk record".to_string(),
            offset: context_offset,
            reason: "record extends past end of data".to_string(),
        });
    }
    Ok((raw_len, compressor_id, &bytes[framing_len..total], total))
}
