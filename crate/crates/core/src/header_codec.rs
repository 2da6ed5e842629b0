//! Lossless header compression for a completed flow.
//!
//! Packet headers inside one flow are highly redundant: addresses,
//! ports, and protocol are constant (they live in the flow key), most
//! counters move by small increments, and several fields are fully
//! determined by values the decoder already knows. The codec exploits
//! this in three stages:
//!
//! 1. **Prediction** — each field of each packet is predicted from the
//!    previous packet of the same parse class within the flow (the
//!    first packet is predicted from protocol-typical constants, e.g.
//!    IHL 5, flags/fragment 0x4000, TCP data offset 0x50). Fields
//!    derivable from known context are predicted outright: IP total
//!    length from the packet's original length, UDP length from IP
//!    total length, the IP checksum from the rest of the IP header.
//! 2. **Residual coding** — differences between actual and predicted
//!    values are written as zigzag varints, grouped column-by-column
//!    (all timestamp deltas, then all sequence deltas, ...), so a
//!    perfectly predicted field costs one zero byte per packet and
//!    columns are long runs for the next stage. Verbatim fields
//!    (transport checksums, which cover payload bytes the header
//!    decoder does not have) and same-as-previous byte strings (link
//!    headers, options) get mode bytes instead.
//! 3. **Dictionary compression** — the concatenated columns pass
//!    through the archive's block compressor with a stored-raw escape.
//!
//! Decoding reverses the stages exactly; `decode(encode(flow))`
//! reproduces every header byte, timestamp, length, and ingest sequence
//! number. Corrupt input produces an [`Error::Corrupt`], never a panic.

use crate::chunk::{ChunkLocation, ChunkRef};
use crate::compress::{self, Compressor};
use crate::error::{Error, Result};
use crate::flow::Flow;
use crate::packet::{FlowKey, Ipv4Header, ParseClass, ParsedHeader, TcpHeader, UdpHeader, FLOW_KEY_LEN};
use crate::varint::{self, Reader};

/// First byte of every serialized header block.
pub const BLOCK_MAGIC: u8 = 0xF1;
/// Layout version stamped after the magic.
pub const BLOCK_VERSION: u8 = 1;

/// Link-layer header length for the one link type that yields
/// structured parses. Literal link headers are written without a length
/// prefix because this is invariant.
const LINK_LEN: usize = 14;

// First-packet predictions (see module docs).
const FIRST_IHL: u8 = 5;
const FIRST_FLAGS_FRAG: u16 = 0x4000; // don't-fragment, offset 0
const FIRST_TCP_OFFSET: u8 = 0x50; // 20-byte header, reserved bits clear
const FIRST_TCP_FLAGS: u8 = 0x02; // SYN opens most flows

/// TTL selector values for the first IP packet of a flow. Initial TTLs
/// cluster on a few OS defaults; other values pay one literal byte.
const TTL_COMMON: [u8; 3] = [64, 128, 255];
const TTL_LITERAL: u8 = 3;

const MODE_SAME: u8 = 0;
const MODE_LITERAL: u8 = 1;
const CHECKSUM_VALID: u8 = 0;
const CHECKSUM_LITERAL: u8 = 1;

/// One flow's compressed header record as stored in an epoch log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedHeaderBlock {
    pub key: FlowKey,
    pub packet_count: u32,
    /// Timestamp of the first ingested packet, microseconds.
    pub first_ts: u64,
    /// Payload chunks in stream order.
    pub chunk_refs: Vec<ChunkRef>,
    /// Stage-3 output: compressor id, raw length varint, stored bytes.
    pub residual: Vec<u8>,
}

impl CompressedHeaderBlock {
    /// Appends the storage encoding: magic, version, key, packet count,
    /// first timestamp, chunk references, residual length, residual.
    pub fn write(&self, out: &mut Vec<u8>) {
        out.push(BLOCK_MAGIC);
        out.push(BLOCK_VERSION);
        out.extend_from_slice(&self.key.to_bytes());
        varint::put_u64(out, u64::from(self.packet_count));
        varint::put_u64(out, self.first_ts);
        varint::put_u64(out, self.chunk_refs.len() as u64);
        for r in &self.chunk_refs {
            out.extend_from_slice(&r.location.to_u64().to_le_bytes());
            varint::put_u64(out, u64::from(r.raw_len));
        }
        varint::put_u64(out, self.residual.len() as u64);
        out.extend_from_slice(&self.residual);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out);
        out
    }

    /// Parses one block at the reader's position, leaving the reader
    /// just past it. `context_offset` only labels error messages.
    pub fn read_from(r: &mut Reader<'_>, context_offset: u64) -> Result<CompressedHeaderBlock> {
        let corrupt = |reason: String| Error::Corrupt {
            context: "header block".to_string(),
            offset: context_offset,
            reason,
        };
        let magic = r.byte().map_err(|e| corrupt(e.to_string()))?;
        if magic != BLOCK_MAGIC {
            return Err(corrupt(format!("bad block magic 0x{magic:02x}")));
        }
        let version = r.byte().map_err(|e| corrupt(e.to_string()))?;
        if version != BLOCK_VERSION {
            return Err(corrupt(format!("unsupported block version {version}")));
        }
        let key_bytes = r.bytes(FLOW_KEY_LEN).map_err(|e| corrupt(e.to_string()))?;
        let key = FlowKey::from_bytes(key_bytes.try_into().expect("fixed length"));
        let packet_count = r.u64().map_err(|e| corrupt(e.to_string()))?;
        let packet_count =
            u32::try_from(packet_count).map_err(|_| corrupt("packet count out of range".into()))?;
        let first_ts = r.u64().map_err(|e| corrupt(e.to_string()))?;
        let n_refs = r.u64().map_err(|e| corrupt(e.to_string()))?;
        if n_refs > (r.remaining() as u64) / 9 {
            // Each reference costs at least 9 bytes; reject counts that
            // cannot fit instead of attempting a huge allocation.
            return Err(corrupt(format!("chunk reference count {n_refs} exceeds block size")));
        }
        let mut chunk_refs = Vec::with_capacity(n_refs as usize);
        for _ in 0..n_refs {
            let loc = r.bytes(8).map_err(|e| corrupt(e.to_string()))?;
            let location = ChunkLocation::from_u64(u64::from_le_bytes(loc.try_into().expect("fixed length")));
            let raw_len = r.u64().map_err(|e| corrupt(e.to_string()))?;
            let raw_len =
                u32::try_from(raw_len).map_err(|_| corrupt("chunk length out of range".into()))?;
            chunk_refs.push(ChunkRef { location, raw_len });
        }
        let res_len = r.u64().map_err(|e| corrupt(e.to_string()))?;
        let res_len =
            usize::try_from(res_len).map_err(|_| corrupt("residual length out of range".into()))?;
        let residual = r.bytes(res_len).map_err(|e| corrupt(e.to_string()))?.to_vec();
        Ok(CompressedHeaderBlock { key, packet_count, first_ts, chunk_refs, residual })
    }

    /// Total payload bytes of the flow (sum of chunk reference lengths).
    pub fn payload_len(&self) -> u64 {
        self.chunk_refs.iter().map(|r| u64::from(r.raw_len)).sum()
    }
}

/// One packet reconstructed from a header block: exact header bytes
/// plus the metadata needed to rebuild its capture record. Payload
/// bytes, if wanted, are sliced from the flow's reassembled chunk
/// stream: this packet owns `payload_len` bytes of it, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedPacket {
    pub ts_micros: u64,
    /// Ingest sequence number from recording, for stable ordering.
    pub seq: u64,
    pub original_len: u32,
    pub captured_len: u32,
    pub class: ParseClass,
    pub header_bytes: Vec<u8>,
    pub payload_len: u32,
}

impl DecodedPacket {
    pub fn ts_sec(&self) -> u32 {
        (self.ts_micros / 1_000_000) as u32
    }

    pub fn ts_frac(&self) -> u32 {
        (self.ts_micros % 1_000_000) as u32
    }
}

/// Stage-1/2 output: one buffer per field, concatenated in a fixed
/// order. Kept as named columns so tests and reports can see per-field
/// costs.
pub(crate) struct ColumnSet {
    cols: Vec<(&'static str, Vec<u8>)>,
}

impl ColumnSet {
    pub(crate) fn concat(&self) -> Vec<u8> {
        let total = self.cols.iter().map(|(_, c)| c.len()).sum();
        let mut out = Vec::with_capacity(total);
        for (_, c) in &self.cols {
            out.extend_from_slice(c);
        }
        out
    }

    #[cfg(test)]
    pub(crate) fn sizes(&self) -> Vec<(&'static str, usize)> {
        self.cols.iter().map(|(n, c)| (*n, c.len())).collect()
    }
}

/// Wrapping 16-bit delta, sign-extended for zigzag coding. Used for
/// counters that wrap mod 2^16 (IP id), so 0xffff→0x0000 costs one byte.
fn delta16(value: u16, prev: u16) -> i64 {
    i64::from(value.wrapping_sub(prev) as i16)
}

/// Wrapping 32-bit delta for TCP sequence space.
fn delta32(value: u32, prev: u32) -> i64 {
    i64::from(value.wrapping_sub(prev) as i32)
}

/// Encodes stages 1 and 2 for a flow: per-class field prediction, then
/// zigzag-varint residual columns.
pub(crate) fn encode_residual_columns(flow: &Flow) -> ColumnSet {
    // Per-packet global columns.
    let mut class_col = Vec::new();
    let mut ts_col = Vec::new();
    let mut seq_col = Vec::new();
    let mut cap_col = Vec::new();
    let mut orig_col = Vec::new();
    // IP-bearing columns (one entry per Tcp/Udp/OtherIp packet).
    let mut link_col = Vec::new();
    let mut ihl_col = Vec::new();
    let mut tos_col = Vec::new();
    let mut total_len_col = Vec::new();
    let mut ip_id_col = Vec::new();
    let mut flags_frag_col = Vec::new();
    let mut ttl_col = Vec::new();
    let mut ip_ck_col = Vec::new();
    let mut ip_opt_col = Vec::new();
    // TCP columns.
    let mut tcp_seq_col = Vec::new();
    let mut tcp_ack_col = Vec::new();
    let mut tcp_off_col = Vec::new();
    let mut tcp_flags_col = Vec::new();
    let mut tcp_win_col = Vec::new();
    let mut tcp_ck_col = Vec::new();
    let mut tcp_urg_col = Vec::new();
    let mut tcp_opt_col = Vec::new();
    // UDP columns.
    let mut udp_len_col = Vec::new();
    let mut udp_ck_col = Vec::new();
    // Unstructured packets.
    let mut non_ip_col = Vec::new();

    let mut prev_ts = flow.first_ts();
    let mut prev_seq = 0u64;
    let mut prev_orig = 0i64;

    // Chain state: "previous packet of the same kind" within this flow.
    let mut ip_seen = false;
    let mut prev_link: &[u8] = &[];
    let mut prev_ihl = FIRST_IHL;
    let mut prev_tos = 0u8;
    let mut prev_ip_id = 0u16;
    let mut prev_flags_frag = FIRST_FLAGS_FRAG;
    let mut prev_ttl = 0u8;
    let mut prev_ip_opts: &[u8] = &[];
    let mut prev_tcp_seq = 0u32;
    let mut prev_tcp_ack = 0u32;
    let mut prev_tcp_off = FIRST_TCP_OFFSET;
    let mut prev_tcp_flags = FIRST_TCP_FLAGS;
    let mut prev_tcp_win = 0u16;
    let mut prev_tcp_urg = 0u16;
    let mut prev_tcp_opts: &[u8] = &[];
    let mut prev_raw: &[u8] = &[];

    for fp in &flow.packets {
        let p = &fp.packet;
        class_col.push(fp.parsed.class().as_u8());

        let t = p.ts_micros();
        varint::put_i64(&mut ts_col, t.wrapping_sub(prev_ts) as i64);
        prev_ts = t;

        varint::put_i64(&mut seq_col, p.seq.wrapping_sub(prev_seq) as i64);
        prev_seq = p.seq;

        varint::put_i64(&mut cap_col, i64::from(p.captured_len()) - i64::from(p.original_len));

        let orig = i64::from(p.original_len);
        varint::put_i64(&mut orig_col, orig - prev_orig);
        prev_orig = orig;

        let (link, ip) = match &fp.parsed {
            ParsedHeader::Tcp { link, ip, .. }
            | ParsedHeader::Udp { link, ip, .. }
            | ParsedHeader::OtherIp { link, ip } => (link.as_slice(), ip),
            ParsedHeader::NonIp { raw } => {
                if raw.as_slice() == prev_raw {
                    non_ip_col.push(MODE_SAME);
                } else {
                    non_ip_col.push(MODE_LITERAL);
                    // Length equals the captured length, already coded.
                    non_ip_col.extend_from_slice(raw);
                }
                prev_raw = raw;
                continue;
            }
        };

        // Link header: usually identical across the whole flow.
        debug_assert_eq!(link.len(), LINK_LEN);
        if link == prev_link {
            link_col.push(MODE_SAME);
        } else {
            link_col.push(MODE_LITERAL);
            link_col.extend_from_slice(link);
        }
        prev_link = link;

        varint::put_i64(&mut ihl_col, i64::from(ip.ihl) - i64::from(prev_ihl));
        prev_ihl = ip.ihl;
        varint::put_i64(&mut tos_col, i64::from(ip.tos) - i64::from(prev_tos));
        prev_tos = ip.tos;

        // IP total length is predicted from lengths the decoder already
        // knows: original length minus the link header.
        let predicted_total = (orig - LINK_LEN as i64).clamp(0, 65_535);
        varint::put_i64(&mut total_len_col, i64::from(ip.total_length) - predicted_total);

        varint::put_i64(&mut ip_id_col, delta16(ip.id, prev_ip_id));
        prev_ip_id = ip.id;
        varint::put_i64(&mut flags_frag_col, delta16(ip.flags_frag, prev_flags_frag));
        prev_flags_frag = ip.flags_frag;

        if ip_seen {
            varint::put_i64(&mut ttl_col, i64::from(ip.ttl) - i64::from(prev_ttl));
        } else if let Some(sel) = TTL_COMMON.iter().position(|&t| t == ip.ttl) {
            ttl_col.push(sel as u8);
        } else {
            ttl_col.push(TTL_LITERAL);
            ttl_col.push(ip.ttl);
        }
        prev_ttl = ip.ttl;

        // A checksum consistent with the header is one mode byte; a
        // broken one is preserved verbatim so corruption on the wire
        // survives the archive round trip.
        if ip.checksum_is_valid() {
            ip_ck_col.push(CHECKSUM_VALID);
        } else {
            ip_ck_col.push(CHECKSUM_LITERAL);
            ip_ck_col.extend_from_slice(&ip.checksum.to_be_bytes());
        }

        if ip.options.as_slice() == prev_ip_opts {
            ip_opt_col.push(MODE_SAME);
        } else {
            ip_opt_col.push(MODE_LITERAL);
            // Length is (ihl-5)*4, already coded via the IHL column.
            ip_opt_col.extend_from_slice(&ip.options);
        }
        prev_ip_opts = &ip.options;
        ip_seen = true;

        match &fp.parsed {
            ParsedHeader::Tcp { tcp, .. } => {
                varint::put_i64(&mut tcp_seq_col, delta32(tcp.seq, prev_tcp_seq));
                prev_tcp_seq = tcp.seq;
                varint::put_i64(&mut tcp_ack_col, delta32(tcp.ack, prev_tcp_ack));
                prev_tcp_ack = tcp.ack;
                varint::put_i64(&mut tcp_off_col, i64::from(tcp.offset_reserved) - i64::from(prev_tcp_off));
                prev_tcp_off = tcp.offset_reserved;
                varint::put_i64(&mut tcp_flags_col, i64::from(tcp.flags) - i64::from(prev_tcp_flags));
                prev_tcp_flags = tcp.flags;
                varint::put_i64(&mut tcp_win_col, i64::from(tcp.window) - i64::from(prev_tcp_win));
                prev_tcp_win = tcp.window;
                // The TCP checksum covers payload bytes this codec does
                // not see at decode time, so it is stored verbatim.
                tcp_ck_col.extend_from_slice(&tcp.checksum.to_be_bytes());
                varint::put_i64(&mut tcp_urg_col, i64::from(tcp.urgent) - i64::from(prev_tcp_urg));
                prev_tcp_urg = tcp.urgent;
                if tcp.options.as_slice() == prev_tcp_opts {
                    tcp_opt_col.push(MODE_SAME);
                } else {
                    tcp_opt_col.push(MODE_LITERAL);
                    tcp_opt_col.extend_from_slice(&tcp.options);
                }
                prev_tcp_opts = &tcp.options;
            }
            ParsedHeader::Udp { udp, ip, .. } => {
                // UDP length is normally IP total length minus the IP
                // header.
                let predicted = (i64::from(ip.total_length) - i64::from(ip.ihl) * 4).clamp(0, 65_535);
                varint::put_i64(&mut udp_len_col, i64::from(udp.length) - predicted);
                // Verbatim for the same reason as the TCP checksum.
                udp_ck_col.extend_from_slice(&udp.checksum.to_be_bytes());
            }
            _ => {}
        }
    }

    ColumnSet {
        cols: vec![
            ("class", class_col),
            ("ts", ts_col),
            ("ingest_seq", seq_col),
            ("captured_len", cap_col),
            ("original_len", orig_col),
            ("link", link_col),
            ("ip_ihl", ihl_col),
            ("ip_tos", tos_col),
            ("ip_total_len", total_len_col),
            ("ip_id", ip_id_col),
            ("ip_flags_frag", flags_frag_col),
            ("ip_ttl", ttl_col),
            ("ip_checksum", ip_ck_col),
            ("ip_options", ip_opt_col),
            ("tcp_seq", tcp_seq_col),
            ("tcp_ack", tcp_ack_col),
            ("tcp_offset", tcp_off_col),
            ("tcp_flags", tcp_flags_col),
            ("tcp_window", tcp_win_col),
            ("tcp_checksum", tcp_ck_col),
            ("tcp_urgent", tcp_urg_col),
            ("tcp_options", tcp_opt_col),
            ("udp_len", udp_len_col),
            ("udp_checksum", udp_ck_col),
            ("non_ip", non_ip_col),
        ],
    }
}

/// Compresses a flow's headers into a block. Chunk references are left
/// empty; the payload pipeline fills them in.
pub fn compress_headers(flow: &Flow, compressor: Compressor) -> CompressedHeaderBlock {
    let columns = encode_residual_columns(flow).concat();
    let (effective, stored) = compress::pack(compressor, &columns);
    let mut residual = Vec::with_capacity(stored.len() + 6);
    residual.push(effective.id());
    varint::put_u64(&mut residual, columns.len() as u64);
    residual.extend_from_slice(&stored);
    CompressedHeaderBlock {
        key: flow.key,
        packet_count: flow.packets.len() as u32,
        first_ts: flow.first_ts(),
        chunk_refs: Vec::new(),
        residual,
    }
}

/// Uncompressed stage-2 length recorded inside a block's residual
/// section, without expanding it.
pub fn residual_raw_len(block: &CompressedHeaderBlock) -> Result<u64> {
    let mut r = Reader::new(&block.residual);
    let _ = r.byte().map_err(|_| corrupt_residual("missing compressor id"))?;
    r.u64().map_err(|_| corrupt_residual("missing raw length"))
}

fn corrupt_residual(reason: &str) -> Error {
    Error::Corrupt { context: "header residual".to_string(), offset: 0, reason: reason.to_string() }
}

/// Expands a block back into its packets. See [`DecodedPacket`].
pub fn decompress_headers(block: &CompressedHeaderBlock) -> Result<Vec<DecodedPacket>> {
    let mut r = Reader::new(&block.residual);
    let id = r.byte().map_err(|_| corrupt_residual("missing compressor id"))?;
    let compressor = Compressor::from_id(id)
        .ok_or_else(|| corrupt_residual(&format!("unknown compressor id {id}")))?;
    let raw_len = r.u64().map_err(|_| corrupt_residual("missing raw length"))?;
    let raw_len = usize::try_from(raw_len).map_err(|_| corrupt_residual("raw length out of range"))?;
    if raw_len > (block.packet_count as usize + 1) * (70_000 + 64) {
        // A packet contributes at most its captured bytes (bounded by
        // the capture format) plus small per-field residuals.
        return Err(corrupt_residual("raw length implausible for packet count"));
    }
    let columns = compress::unpack(compressor, r.bytes(r.remaining()).expect("length checked"), raw_len)
        .map_err(|e| corrupt_residual(&e.to_string()))?;
    decode_residual_columns(&columns, block.key, block.packet_count as usize, block.first_ts)
}

fn decode_residual_columns(
    columns: &[u8],
    key: FlowKey,
    n: usize,
    first_ts: u64,
) -> Result<Vec<DecodedPacket>> {
    let corrupt = |reason: String| Error::Corrupt {
        context: "header residual".to_string(),
        offset: 0,
        reason,
    };
    let mut r = Reader::new(columns);

    // Global columns.
    let mut classes = Vec::with_capacity(n);
    for _ in 0..n {
        let b = r.byte().map_err(|e| corrupt(e.to_string()))?;
        classes.push(ParseClass::from_u8(b).ok_or_else(|| corrupt(format!("bad class byte {b}")))?);
    }
    let mut ts = Vec::with_capacity(n);
    let mut prev_ts = first_ts;
    for _ in 0..n {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev_ts = prev_ts.wrapping_add(d as u64);
        if prev_ts / 1_000_000 > u64::from(u32::MAX) {
            return Err(corrupt("timestamp out of capture range".into()));
        }
        ts.push(prev_ts);
    }
    let mut seqs = Vec::with_capacity(n);
    let mut prev_seq = 0u64;
    for _ in 0..n {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev_seq = prev_seq.wrapping_add(d as u64);
        seqs.push(prev_seq);
    }
    let mut cap_deltas = Vec::with_capacity(n);
    for _ in 0..n {
        cap_deltas.push(r.i64().map_err(|e| corrupt(e.to_string()))?);
    }
    let mut origs = Vec::with_capacity(n);
    let mut caps = Vec::with_capacity(n);
    let mut prev_orig = 0i64;
    for i in 0..n {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev_orig += d;
        let orig = u32::try_from(prev_orig).map_err(|_| corrupt("original length out of range".into()))?;
        let cap = prev_orig + cap_deltas[i];
        let cap = u32::try_from(cap).map_err(|_| corrupt("captured length out of range".into()))?;
        if cap > orig {
            return Err(corrupt("captured length exceeds original length".into()));
        }
        origs.push(orig);
        caps.push(cap);
    }

    let ip_packets: Vec<usize> =
        (0..n).filter(|&i| classes[i] != ParseClass::NonIp).collect();
    let tcp_packets: Vec<usize> = (0..n).filter(|&i| classes[i] == ParseClass::Tcp).collect();
    let udp_packets: Vec<usize> = (0..n).filter(|&i| classes[i] == ParseClass::Udp).collect();
    let non_ip_packets: Vec<usize> =
        (0..n).filter(|&i| classes[i] == ParseClass::NonIp).collect();

    // IP-bearing columns.
    let mut links: Vec<Vec<u8>> = Vec::with_capacity(ip_packets.len());
    for _ in &ip_packets {
        let mode = r.byte().map_err(|e| corrupt(e.to_string()))?;
        match mode {
            MODE_SAME => {
                let prev = links.last().cloned().unwrap_or_default();
                links.push(prev);
            }
            MODE_LITERAL => {
                links.push(r.bytes(LINK_LEN).map_err(|e| corrupt(e.to_string()))?.to_vec())
            }
            _ => return Err(corrupt(format!("bad link mode {mode}"))),
        }
    }
    let mut ihls = Vec::with_capacity(ip_packets.len());
    let mut prev = i64::from(FIRST_IHL);
    for _ in &ip_packets {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        if !(5..=15).contains(&prev) {
            return Err(corrupt(format!("ip header length {prev} words out of range")));
        }
        ihls.push(prev as u8);
    }
    let mut toses = Vec::with_capacity(ip_packets.len());
    let mut prev = 0i64;
    for _ in &ip_packets {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        let v = u8::try_from(prev).map_err(|_| corrupt("tos out of range".into()))?;
        toses.push(v);
    }
    let mut total_lens = Vec::with_capacity(ip_packets.len());
    for (pos, &i) in ip_packets.iter().enumerate() {
        let resid = r.i64().map_err(|e| corrupt(e.to_string()))?;
        let predicted = (i64::from(origs[i]) - LINK_LEN as i64).clamp(0, 65_535);
        let v = u16::try_from(predicted + resid)
            .map_err(|_| corrupt("ip total length out of range".into()))?;
        let _ = pos;
        total_lens.push(v);
    }
    let mut ip_ids = Vec::with_capacity(ip_packets.len());
    let mut prev16 = 0u16;
    for _ in &ip_packets {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev16 = prev16.wrapping_add(d as u16);
        ip_ids.push(prev16);
    }
    let mut flags_frags = Vec::with_capacity(ip_packets.len());
    let mut prev16 = FIRST_FLAGS_FRAG;
    for _ in &ip_packets {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev16 = prev16.wrapping_add(d as u16);
        flags_frags.push(prev16);
    }
    let mut ttls = Vec::with_capacity(ip_packets.len());
    let mut prev_ttl = 0i64;
    for pos in 0..ip_packets.len() {
        if pos == 0 {
            let sel = r.byte().map_err(|e| corrupt(e.to_string()))?;
            let ttl = match sel {
                0..=2 => TTL_COMMON[sel as usize],
                TTL_LITERAL => r.byte().map_err(|e| corrupt(e.to_string()))?,
                _ => return Err(corrupt(format!("bad ttl selector {sel}"))),
            };
            prev_ttl = i64::from(ttl);
        } else {
            prev_ttl += r.i64().map_err(|e| corrupt(e.to_string()))?;
        }
        let v = u8::try_from(prev_ttl).map_err(|_| corrupt("ttl out of range".into()))?;
        ttls.push(v);
    }
    let mut ip_checksums: Vec<Option<u16>> = Vec::with_capacity(ip_packets.len());
    for _ in &ip_packets {
        let mode = r.byte().map_err(|e| corrupt(e.to_string()))?;
        match mode {
            CHECKSUM_VALID => ip_checksums.push(None),
            CHECKSUM_LITERAL => {
                let b = r.bytes(2).map_err(|e| corrupt(e.to_string()))?;
                ip_checksums.push(Some(u16::from_be_bytes([b[0], b[1]])));
            }
            _ => return Err(corrupt(format!("bad checksum mode {mode}"))),
        }
    }
    let mut ip_options: Vec<Vec<u8>> = Vec::with_capacity(ip_packets.len());
    for pos in 0..ip_packets.len() {
        let mode = r.byte().map_err(|e| corrupt(e.to_string()))?;
        let want = (usize::from(ihls[pos]) - 5) * 4;
        let opts = match mode {
            MODE_SAME => ip_options.last().cloned().unwrap_or_default(),
            MODE_LITERAL => r.bytes(want).map_err(|e| corrupt(e.to_string()))?.to_vec(),
            _ => return Err(corrupt(format!("bad options mode {mode}"))),
        };
        if opts.len() != want {
            return Err(corrupt("ip options length disagrees with header length".into()));
        }
        ip_options.push(opts);
    }

    // TCP columns.
    let nt = tcp_packets.len();
    let mut tcp_seqs = Vec::with_capacity(nt);
    let mut prev32 = 0u32;
    for _ in 0..nt {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev32 = prev32.wrapping_add(d as u32);
        tcp_seqs.push(prev32);
    }
    let mut tcp_acks = Vec::with_capacity(nt);
    let mut prev32 = 0u32;
    for _ in 0..nt {
        let d = r.i64().map_err(|e| corrupt(e.to_string()))?;
        prev32 = prev32.wrapping_add(d as u32);
        tcp_acks.push(prev32);
    }
    let mut tcp_offs = Vec::with_capacity(nt);
    let mut prev = i64::from(FIRST_TCP_OFFSET);
    for _ in 0..nt {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        let v = u8::try_from(prev).map_err(|_| corrupt("tcp offset byte out of range".into()))?;
        if v >> 4 < 5 {
            return Err(corrupt("tcp data offset below minimum".into()));
        }
        tcp_offs.push(v);
    }
    let mut tcp_flags = Vec::with_capacity(nt);
    let mut prev = i64::from(FIRST_TCP_FLAGS);
    for _ in 0..nt {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        let v = u8::try_from(prev).map_err(|_| corrupt("tcp flags out of range".into()))?;
        tcp_flags.push(v);
    }
    let mut tcp_wins = Vec::with_capacity(nt);
    let mut prev = 0i64;
    for _ in 0..nt {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        let v = u16::try_from(prev).map_err(|_| corrupt("tcp window out of range".into()))?;
        tcp_wins.push(v);
    }
    let mut tcp_cks = Vec::with_capacity(nt);
    for _ in 0..nt {
        let b = r.bytes(2).map_err(|e| corrupt(e.to_string()))?;
        tcp_cks.push(u16::from_be_bytes([b[0], b[1]]));
    }
    let mut tcp_urgs = Vec::with_capacity(nt);
    let mut prev = 0i64;
    for _ in 0..nt {
        prev += r.i64().map_err(|e| corrupt(e.to_string()))?;
        let v = u16::try_from(prev).map_err(|_| corrupt("tcp urgent out of range".into()))?;
        tcp_urgs.push(v);
    }
    let mut tcp_options: Vec<Vec<u8>> = Vec::with_capacity(nt);
    for pos in 0..nt {
        let mode = r.byte().map_err(|e| corrupt(e.to_string()))?;
        let want = (usize::from(tcp_offs[pos] >> 4) - 5) * 4;
        let opts = match mode {
            MODE_SAME => tcp_options.last().cloned().unwrap_or_default(),
            MODE_LITERAL => r.bytes(want).map_err(|e| corrupt(e.to_string()))?.to_vec(),
            _ => return Err(corrupt(format!("bad options mode {mode}"))),
        };
        if opts.len() != want {
            return Err(corrupt("tcp options length disagrees with data offset".into()));
        }
        tcp_options.push(opts);
    }

    // UDP columns. The length prediction needs each UDP packet's IP
    // fields, which are already decoded.
    let ip_pos_of_packet: std::collections::HashMap<usize, usize> =
        ip_packets.iter().enumerate().map(|(pos, &i)| (i, pos)).collect();
    let mut udp_lens = Vec::with_capacity(udp_packets.len());
    for &i in &udp_packets {
        let resid = r.i64().map_err(|e| corrupt(e.to_string()))?;
        let pos = ip_pos_of_packet[&i];
        let predicted =
            (i64::from(total_lens[pos]) - i64::from(ihls[pos]) * 4).clamp(0, 65_535);
        let v = u16::try_from(predicted + resid)
            .map_err(|_| corrupt("udp length out of range".into()))?;
        udp_lens.push(v);
    }
    let mut udp_cks = Vec::with_capacity(udp_packets.len());
    for _ in &udp_packets {
        let b = r.bytes(2).map_err(|e| corrupt(e.to_string()))?;
        udp_cks.push(u16::from_be_bytes([b[0], b[1]]));
    }

    // Unstructured packets: raw bytes, usually repeating.
    let mut raws: Vec<Vec<u8>> = Vec::with_capacity(non_ip_packets.len());
    for &i in &non_ip_packets {
        let mode = r.byte().map_err(|e| corrupt(e.to_string()))?;
        let raw = match mode {
            MODE_SAME => raws.last().cloned().unwrap_or_default(),
            MODE_LITERAL => r.bytes(caps[i] as usize).map_err(|e| corrupt(e.to_string()))?.to_vec(),
            _ => return Err(corrupt(format!("bad raw mode {mode}"))),
        };
        if raw.len() != caps[i] as usize {
            return Err(corrupt("raw packet length disagrees with captured length".into()));
        }
        raws.push(raw);
    }

    if !r.is_empty() {
        return Err(corrupt(format!("{} trailing residual bytes", r.remaining())));
    }

    // Assembly: rebuild exact header bytes per packet.
    let mut out = Vec::with_capacity(n);
    let mut ip_pos = 0usize;
    let mut tcp_pos = 0usize;
    let mut udp_pos = 0usize;
    let mut raw_pos = 0usize;
    for i in 0..n {
        let header_bytes = match classes[i] {
            ParseClass::NonIp => {
                let raw = raws[raw_pos].clone();
                raw_pos += 1;
                raw
            }
            class => {
                let mut ip = Ipv4Header {
                    ihl: ihls[ip_pos],
                    tos: toses[ip_pos],
                    total_length: total_lens[ip_pos],
                    id: ip_ids[ip_pos],
                    flags_frag: flags_frags[ip_pos],
                    ttl: ttls[ip_pos],
                    protocol: key.protocol,
                    checksum: 0,
                    src: key.src_ip,
                    dst: key.dst_ip,
                    options: ip_options[ip_pos].clone(),
                };
                ip.checksum = match ip_checksums[ip_pos] {
                    Some(literal) => literal,
                    None => ip.computed_checksum(),
                };
                let link = &links[ip_pos];
                let mut hb = Vec::with_capacity(caps[i] as usize);
                hb.extend_from_slice(link);
                ip.write(&mut hb);
                match class {
                    ParseClass::Tcp => {
                        let tcp = TcpHeader {
                            src_port: key.src_port,
                            dst_port: key.dst_port,
                            seq: tcp_seqs[tcp_pos],
                            ack: tcp_acks[tcp_pos],
                            offset_reserved: tcp_offs[tcp_pos],
                            flags: tcp_flags[tcp_pos],
                            window: tcp_wins[tcp_pos],
                            checksum: tcp_cks[tcp_pos],
                            urgent: tcp_urgs[tcp_pos],
                            options: tcp_options[tcp_pos].clone(),
                        };
                        tcp.write(&mut hb);
                        tcp_pos += 1;
                    }
                    ParseClass::Udp => {
                        let udp = UdpHeader {
                            src_port: key.src_port,
                            dst_port: key.dst_port,
                            length: udp_lens[udp_pos],
                            checksum: udp_cks[udp_pos],
                        };
                        udp.write(&mut hb);
                        udp_pos += 1;
                    }
                    _ => {}
                }
                ip_pos += 1;
                hb
            }
        };
        if header_bytes.len() > caps[i] as usize {
            return Err(corrupt("header bytes exceed captured length".into()));
        }
        let payload_len = caps[i] - header_bytes.len() as u32;
        out.push(DecodedPacket {
            ts_micros: ts[i],
            seq: seqs[i],
            original_len: origs[i],
            captured_len: caps[i],
            class: classes[i],
            header_bytes,
            payload_len,
        });
    }
    Ok(out)
}
