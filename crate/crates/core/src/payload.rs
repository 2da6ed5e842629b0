//! Payload persistence: flow payload streams, content-defined
//! deduplication, and reassembly.
//!
//! A flow's payload bytes are concatenated in packet order into one
//! stream, cut into chunks ([`crate::chunk`]), and each chunk is stored
//! at most once per dedup window: a chunk whose hash is already in the
//! index becomes a reference to the existing copy. The flow's header
//! block keeps an ordered chunk-reference list, so reassembly is a
//! straight concatenation; per-packet payload lengths come from the
//! decoded headers.
//!
//! Chunk preparation (cutting, hashing, compressing) is pure and safe
//! to parallelize. Dedup decisions and segment appends mutate shared
//! state and must stay on a single owner; [`dedup_and_store`] is that
//! serialized step.

use crate::chunk::{ChunkHash, ChunkRef, ChunkingConfig};
use crate::chunk_index::ChunkIndex;
use crate::compress::{self, Compressor};
use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::header_codec::DecodedPacket;
use crate::store::{ArchiveWriter, ChunkReader};

/// A flow's payload bytes in packet order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PayloadStream {
    pub bytes: Vec<u8>,
    /// Payload length of each packet, in packet order. Sums to
    /// `bytes.len()`; header-only and non-IP packets contribute zero.
    pub per_packet: Vec<u32>,
}

/// Concatenates a flow's packet payloads into one stream.
pub fn assemble(flow: &Flow) -> PayloadStream {
    let mut bytes = Vec::new();
    let mut per_packet = Vec::with_capacity(flow.packets.len());
    for fp in &flow.packets {
        let payload = &fp.packet.data[fp.parsed.payload_offset()..];
        per_packet.push(payload.len() as u32);
        bytes.extend_from_slice(payload);
    }
    PayloadStream { bytes, per_packet }
}

/// One chunk cut from a payload stream, hashed and compressed, ready
/// for a dedup decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedChunk {
    pub hash: ChunkHash,
    pub raw_len: u32,
    pub compressor: Compressor,
    pub stored: Vec<u8>,
}

/// Cuts, hashes, and compresses a payload stream. Pure: no shared
/// state, deterministic for a given stream and configuration.
pub fn prepare_chunks(
    stream: &[u8],
    config: ChunkingConfig,
    compressor: Compressor,
) -> Vec<PreparedChunk> {
    crate::chunk::chunk_boundaries(stream, &config)
        .into_iter()
        .map(|(start, len)| {
            let raw = &stream[start..start + len];
            let (effective, stored) = compress::pack(compressor, raw);
            PreparedChunk {
                hash: ChunkHash::of(raw),
                raw_len: len as u32,
                compressor: effective,
                stored,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DedupOutcome {
    pub hit_chunks: u64,
    /// Raw payload bytes satisfied by chunks already in the archive.
    pub hit_bytes: u64,
    pub stored_chunks: u64,
    pub stored_raw_bytes: u64,
    /// Bytes actually appended to the bulk tier (compressed + framing
    /// excluded; this counts the stored payload bytes).
    pub stored_bytes: u64,
}

/// Commits one flow's prepared chunks: expires the index up to the
/// flow's end time, reuses any chunk the window still remembers, and
/// appends the rest to the segment owned by `epoch`. Every reference —
/// reused or fresh — pushes its segment's horizon to `epoch`.
///
/// `now` is trace time (the flow's last packet timestamp), so dedup
/// behaves identically on live capture and offline replay. A window of
/// zero disables dedup entirely: no lookups, no index growth.
pub fn dedup_and_store<I: ChunkIndex>(
    chunks: &[PreparedChunk],
    epoch: u64,
    now: u64,
    dedup_window: u64,
    index: &mut I,
    writer: &mut ArchiveWriter,
) -> Result<(Vec<ChunkRef>, DedupOutcome)> {
    let mut refs = Vec::with_capacity(chunks.len());
    let mut outcome = DedupOutcome::default();
    if dedup_window > 0 {
        index.expire(now, dedup_window);
    }
    for chunk in chunks {
        let reused = if dedup_window > 0 { index.get(&chunk.hash) } else { None };
        let location = match reused {
            Some(existing) => {
                outcome.hit_chunks += 1;
                outcome.hit_bytes += u64::from(chunk.raw_len);
                existing
            }
            None => {
                let loc =
                    writer.append_chunk(epoch, chunk.raw_len, chunk.compressor.id(), &chunk.stored)?;
                if dedup_window > 0 {
                    index.put(chunk.hash, loc, now);
                }
                outcome.stored_chunks += 1;
                outcome.stored_raw_bytes += u64::from(chunk.raw_len);
                outcome.stored_bytes += chunk.stored.len() as u64;
                loc
            }
        };
        writer.note_reference(u64::from(location.segment), epoch);
        refs.push(ChunkRef { location, raw_len: chunk.raw_len });
    }
    Ok((refs, outcome))
}

/// Reads a flow's chunk references back into its payload stream.
/// Unreachable chunks surface as [`Error::DataUnavailable`] naming the
/// segment; a length mismatch against the reference is corruption.
pub fn reassemble(refs: &[ChunkRef], reader: &mut ChunkReader<'_>) -> Result<Vec<u8>> {
    let total: usize = refs.iter().map(|r| r.raw_len as usize).sum();
    let mut stream = Vec::with_capacity(total);
    for r in refs {
        let raw = reader.read_chunk(r.location)?;
        if raw.len() != r.raw_len as usize {
            return Err(Error::Corrupt {
                context: "chunk record".to_string(),
                offset: u64::from(r.location.offset),
                reason: format!(
                    "chunk holds {} bytes, flow reference expects {}",
                    raw.len(),
                    r.raw_len
                ),
            });
        }
        stream.extend_from_slice(&raw);
    }
    Ok(stream)
}

/// Splits a reassembled stream back into per-packet payload slices,
/// ordered like `decoded`.
pub fn packet_payloads<'a>(
    stream: &'a [u8],
    decoded: &[DecodedPacket],
) -> Result<Vec<&'a [u8]>> {
    let expected: u64 = decoded.iter().map(|d| u64::from(d.payload_len)).sum();
    if expected != stream.len() as u64 {
        return Err(Error::Corrupt {
            context: "payload stream".to_string(),
            offset: 0,
            reason: format!(
                "headers expect {expected} payload bytes, stream holds {}",
                stream.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(decoded.len());
    let mut at = 0usize;
    for d in decoded {
        let next = at + d.payload_len as usize;
        out.push(&stream[at..next]);
        at = next;
    }
    Ok(out)
}
