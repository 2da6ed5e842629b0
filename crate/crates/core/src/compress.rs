//! Final-stage dictionary compression. One compressor is chosen per
//! archive, recorded in the manifest, and stamped into every compressed
//! record, so archives remain readable even if the default changes.
//!
//! The backend is DEFLATE (via `miniz_oxide`): an LZ77-family block
//! compressor with a 32 KiB window and deterministic output for a fixed
//! input. Callers always keep the stored-uncompressed escape: when
//! compression does not shrink a record, the raw bytes are stored under
//! [`Compressor::None`].

use crate::error::{Error, Result};

/// Compression level handed to DEFLATE; fixed so output is stable.
const DEFLATE_LEVEL: u8 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compressor {
    /// Stored verbatim.
    None,
    /// DEFLATE with a 32 KiB window.
    Deflate,
}

impl Compressor {
    pub fn id(self) -> u8 {
        match self {
            Compressor::None => 0,
            Compressor::Deflate => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Compressor> {
        Some(match id {
            0 => Compressor::None,
            1 => Compressor::Deflate,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Compressor::None => "none",
            Compressor::Deflate => "deflate",
        }
    }

    pub fn from_name(name: &str) -> Option<Compressor> {
        Some(match name {
            "none" => Compressor::None,
            "deflate" => Compressor::Deflate,
            _ => return None,
        })
    }
}

/// Compresses `raw`, returning `(effective_compressor, bytes)`. Falls back
/// to `(None, raw.to_vec())` when compression would not strictly shrink
/// the data, so the output is never larger than the input.
pub fn pack(compressor: Compressor, raw: &[u8]) -> (Compressor, Vec<u8>) {
    match compressor {
        Compressor::None => (Compressor::None, raw.to_vec()),
        Compressor::Deflate => {
            let compressed = miniz_oxide::deflate::compress_to_vec(raw, DEFLATE_LEVEL);
            if compressed.len() < raw.len() {
                (Compressor::Deflate, compressed)
            } else {
                (Compressor::None, raw.to_vec())
            }
        }
    }
}

/// Inverse of [`pack`]: expands `bytes` back to exactly `raw_len` bytes.
pub fn unpack(compressor: Compressor, bytes: &[u8], raw_len: usize) -> Result<Vec<u8>> {
    let out = match compressor {
        Compressor::None => bytes.to_vec(),
        Compressor::Deflate => miniz_oxide::inflate::decompress_to_vec_with_limit(bytes, raw_len)
            .map_err(|e| Error::CaptureFormat(format!("deflate stream is corrupt: {e}")))?,
    };
    if out.len() != raw_len {
        return Err(Error::CaptureFormat(format!(
            "decompressed length {} does not match recorded length {raw_len}",
            out.len()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn id_roundtrip() {
        for c in [Compressor::None, Compressor::Deflate] {
            assert_eq!(Compressor::from_id(c.id()), Some(c));
            assert_eq!(Compressor::from_name(c.name()), Some(c));
        }
        assert_eq!(Compressor::from_id(200), None);
    }

    #[test]
    fn compressible_data_roundtrips_smaller() {
        let raw: Vec<u8> = (0..10_000u32).map(|i| (i % 7) as u8).collect();
        let (eff, packed) = pack(Compressor::Deflate, &raw);
        assert_eq!(eff, Compressor::Deflate);
        assert!(packed.len() < raw.len() / 4);
        assert_eq!(unpack(eff, &packed, raw.len()).unwrap(), raw);
    }

    #[test]
    fn incompressible_data_falls_back_to_stored() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut raw = vec![0u8; 4096];
        rng.fill(&mut raw[..]);
        let (eff, packed) = pack(Compressor::Deflate, &raw);
        assert_eq!(eff, Compressor::None);
        assert_eq!(packed, raw);
        assert_eq!(unpack(eff, &packed, raw.len()).unwrap(), raw);
    }

    #[test]
    fn deterministic_output() {
        let raw: Vec<u8> = (0..50_000u32).map(|i| (i * 31 % 251) as u8).collect();
        let a = pack(Compressor::Deflate, &raw);
        let b = pack(Compressor::Deflate, &raw);
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_stream_is_an_error_not_garbage() {
        let raw: Vec<u8> = (0..1000u32).map(|i| (i % 13) as u8).collect();
        let (eff, mut packed) = pack(Compressor::Deflate, &raw);
        assert_eq!(eff, Compressor::Deflate);
        packed[0] ^= 0xff;
        let r = unpack(eff, &packed, raw.len());
        if let Ok(out) = r {
            assert_ne!(out, raw, "corruption must not silently yield the original");
        }
    }

    #[test]
    fn wrong_length_is_an_error() {
        let raw = b"abcabcabcabcabcabc".to_vec();
        let (eff, packed) = pack(Compressor::Deflate, &raw);
        assert!(unpack(eff, &packed, raw.len() + 1).is_err());
    }
}
