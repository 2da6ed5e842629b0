//! Shared helpers for the end-to-end suite.
//!
//! The centerpiece is a result oracle that predicts query answers by
//! linear scan: packets are regrouped into flows, flows are pinned to
//! epochs by their end time, and each query is answered by brute-force
//! filtering. None of the index, header-log, or chunk machinery is
//! involved, so agreement with the engine is meaningful evidence.

use std::io::Cursor;
use std::net::Ipv4Addr;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use flowvault::flow::{FlowGrouper, GrouperConfig};
use flowvault::packet::{parse_headers, FlowKey, Packet};
use flowvault::pcap::PcapWriter;
use flowvault::query::{Criteria, Query, Retrieval, TimeRange};
use flowvault::recorder::{record_stream, RecordReport, RecorderConfig};

/// One flow as the oracle sees it: the grouper's emission, pinned to
/// the epoch its end time falls in.
pub struct OracleFlow {
    pub key: FlowKey,
    pub epoch: u64,
    pub packets: Vec<Packet>,
}

/// Replays grouping over a packet stream and assigns every emitted
/// flow to `end_ts / epoch_len`. This matches the recorder for any
/// monotone input; the generated workloads used here are sorted by
/// timestamp, so carried (late) flows cannot occur.
pub fn regroup(
    packets: &[Packet],
    link_type: u32,
    config: GrouperConfig,
    epoch_len: u64,
) -> Vec<OracleFlow> {
    let mut grouper = FlowGrouper::new(config);
    let mut emitted = Vec::new();
    for p in packets {
        emitted.extend(grouper.ingest(p.clone(), link_type));
    }
    emitted.extend(grouper.flush_all());
    emitted
        .into_iter()
        .map(|(flow, _cause)| OracleFlow {
            key: flow.key,
            epoch: flow.end_ts() / epoch_len,
            packets: flow.packets.into_iter().map(|fp| fp.packet).collect(),
        })
        .collect()
}

/// The header-only view of a packet: bytes up to the payload boundary,
/// with timestamp, sequence number, and original length untouched.
pub fn headers_view(p: &Packet, link_type: u32) -> Packet {
    let offset = parse_headers(&p.data, link_type).payload_offset();
    Packet {
        ts_sec: p.ts_sec,
        ts_frac: p.ts_frac,
        original_len: p.original_len,
        data: p.data[..offset].to_vec(),
        seq: p.seq,
    }
}

/// Epoch-granular time selection, recomputed from first principles:
/// epoch `id` covers `[id * len, (id + 1) * len)` and is selected when
/// that span intersects the requested range.
pub fn epoch_selected(id: u64, epoch_len: u64, last_id: u64, time: Option<TimeRange>) -> bool {
    match time.unwrap_or(TimeRange::Entire) {
        TimeRange::Entire => true,
        TimeRange::Last(span) => {
            let end = (last_id + 1) * epoch_len;
            let start = end.saturating_sub(span);
            (id + 1) * epoch_len > start
        }
        TimeRange::Interval(t0, t1) => (id + 1) * epoch_len > t0 && id * epoch_len < t1,
    }
}

/// Conjunctive criteria evaluation, written out independently.
pub fn criteria_match(c: &Criteria, k: &FlowKey) -> bool {
    fn eq<T: PartialEq>(selected: Option<T>, actual: T) -> bool {
        selected.map_or(true, |v| v == actual)
    }
    eq(c.src_ip, k.src_ip)
        && eq(c.dst_ip, k.dst_ip)
        && c.any_ip.map_or(true, |v| v == k.src_ip || v == k.dst_ip)
        && eq(c.src_port, k.src_port)
        && eq(c.dst_port, k.dst_port)
        && c.any_port.map_or(true, |v| v == k.src_port || v == k.dst_port)
        && eq(c.protocol, k.protocol)
}

/// Brute-force answer for one query: `(found, packets)`. Existence
/// queries report `found` with no packets; header queries truncate each
/// packet at its payload boundary. Packets come back globally sorted by
/// (timestamp, ingest sequence), exactly the engine's output order.
pub fn expected_outcome<'a, I>(
    flows: I,
    link_type: u32,
    epoch_len: u64,
    last_id: u64,
    query: &Query,
) -> (bool, Vec<Packet>)
where
    I: IntoIterator<Item = &'a OracleFlow>,
{
    let mut found = false;
    let mut packets = Vec::new();
    for f in flows {
        if !epoch_selected(f.epoch, epoch_len, last_id, query.time)
            || !criteria_match(&query.criteria, &f.key)
        {
            continue;
        }
        found = true;
        match query.retrieve {
            Retrieval::Existence => {}
            Retrieval::Headers => {
                packets.extend(f.packets.iter().map(|p| headers_view(p, link_type)));
            }
            Retrieval::Full => packets.extend(f.packets.iter().cloned()),
        }
    }
    packets.sort_by_key(|p| (p.ts_micros(), p.seq));
    (found, packets)
}

/// Serializes packets as a microsecond-precision capture file.
pub fn pcap_bytes(packets: &[Packet], link_type: u32) -> Vec<u8> {
    let mut w = PcapWriter::new(Vec::new(), link_type).expect("write capture header");
    for p in packets {
        w.write_packet(p).expect("write packet");
    }
    w.into_inner()
}

/// Records a packet list into `fast`/`bulk` through the same streaming
/// path the CLI uses.
pub fn record_packets(
    packets: &[Packet],
    link_type: u32,
    fast: &Path,
    bulk: &Path,
    config: RecorderConfig,
) -> RecordReport {
    let bytes = pcap_bytes(packets, link_type);
    record_stream(Cursor::new(bytes), fast, bulk, config).expect("recording succeeds")
}

/// True when at least one criterion is backed by an index (addresses
/// and ports are indexed; protocol is verify-only).
pub fn uses_index(c: &Criteria) -> bool {
    c.src_ip.is_some()
        || c.dst_ip.is_some()
        || c.any_ip.is_some()
        || c.src_port.is_some()
        || c.dst_port.is_some()
        || c.any_port.is_some()
}

/// Draws a randomized conjunctive query. Roughly 70% borrow values
/// from real flow keys (hit-biased); the rest use values absent from
/// the workload (10.255/16 addresses, port 9999, protocol 99). Time
/// ranges cycle through open, entire, trailing-window, and interval
/// forms, and the retrieval mode cycles existence/headers/full.
pub fn random_query(
    rng: &mut ChaCha8Rng,
    flows: &[OracleFlow],
    newest_end: u64,
    i: usize,
) -> Query {
    let mut c = Criteria::default();
    let pick_hit = rng.random_bool(0.7) && !flows.is_empty();
    loop {
        if pick_hit {
            let k = &flows[rng.random_range(0..flows.len())].key;
            if rng.random_bool(0.35) {
                c.src_ip = Some(k.src_ip);
            }
            if rng.random_bool(0.25) {
                c.dst_ip = Some(k.dst_ip);
            }
            if rng.random_bool(0.15) {
                c.any_ip = Some(if rng.random_bool(0.5) { k.src_ip } else { k.dst_ip });
            }
            if rng.random_bool(0.25) {
                c.src_port = Some(k.src_port);
            }
            if rng.random_bool(0.2) {
                c.dst_port = Some(k.dst_port);
            }
            if rng.random_bool(0.15) {
                c.any_port = Some(if rng.random_bool(0.5) { k.src_port } else { k.dst_port });
            }
            if rng.random_bool(0.3) {
                c.protocol = Some(k.protocol);
            }
        } else {
            if rng.random_bool(0.5) {
                c.src_ip = Some(Ipv4Addr::new(10, 255, rng.random_range(0..=255), 1));
            }
            if rng.random_bool(0.4) {
                c.dst_port = Some(9999);
            }
            if rng.random_bool(0.3) {
                c.any_ip = Some(Ipv4Addr::new(10, 255, 255, rng.random_range(0..=255)));
            }
            if rng.random_bool(0.3) {
                c.protocol = Some(99);
            }
        }
        if !c.is_empty() {
            break;
        }
    }
    // Every tenth query drops the criteria entirely (time-only scan).
    let mut time_only = false;
    if i % 10 == 7 {
        c = Criteria::default();
        time_only = true;
    }
    let time = match i % 4 {
        // A time-only query with no range would be unbounded; give it one.
        0 => time_only.then_some(TimeRange::Entire),
        1 => Some(TimeRange::Entire),
        2 => Some(TimeRange::Last(rng.random_range(1..=newest_end + newest_end / 4 + 1))),
        _ => {
            let t0 = rng.random_range(0..newest_end);
            let t1 = t0 + rng.random_range(1..=newest_end - t0);
            Some(TimeRange::Interval(t0, t1))
        }
    };
    let retrieve = match i % 3 {
        0 => Retrieval::Existence,
        1 => Retrieval::Headers,
        _ => Retrieval::Full,
    };
    Query { time, criteria: c, retrieve }
}
