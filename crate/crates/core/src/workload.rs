//! Synthetic workloads, the storage cost model, and the offline dedup
//! window sweep.
//!
//! The generator produces deterministic pcap traces from a seed, in
//! three payload models:
//!
//! * **Ramp** — packet `i` of the model carries bytes `b[j] = (j·r) mod
//!   256` with a per-packet multiplier `r` drawn uniformly from
//!   `[0, 255]`. Compressible but not identical across packets.
//! * **Random** — uniform random bytes; no two chunks should ever
//!   deduplicate against each other.
//! * **Duplicated { fraction, gap }** — a chosen fraction of flows is
//!   repeated byte-for-byte exactly `gap` later under a fresh flow key,
//!   and the generator reports the ground truth (how many payload bytes
//!   are true repeats), so dedup accuracy can be scored against it.
//!
//! Packet sizes come from either a fixed payload length or an ISP-like
//! mix (a small-packet mode around ACK/DNS sizes and a large-packet
//! mode near full frames, averaging ≈ 669 bytes on the wire).
//!
//! The sweep answers "what would a different dedup window have done?"
//! without re-recording: one chunking pass per chunking configuration
//! extracts each flow's (end timestamp, chunk hash, raw and compressed
//! sizes) sequence, then each window replays that sequence through a
//! fresh in-memory index with the exact expiry rule the recorder uses,
//! in the same flow order. Per-chunk compressed sizes are computed once
//! per distinct chunk and cached by hash.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::{ChunkHash, ChunkingConfig};
use crate::chunk_index::{ChunkIndex, InMemoryChunkIndex};
use crate::compress::{self, Compressor};
use crate::error::{Error, Result};
use crate::flow::{FlowGrouper, GrouperConfig};
use crate::header_codec;
use crate::packet::Packet;
use crate::payload;
use crate::varint;
use crate::wire::{self, TcpPacketSpec, UdpPacketSpec};
use std::net::Ipv4Addr;

/// The pinned ramp formula: `len` bytes of `(i·r) mod 256`.
pub fn ramp_payload(r: u8, len: usize) -> Vec<u8> {
    (0..len).map(|i| (i as u64 * u64::from(r)) as u8).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayloadModel {
    Ramp,
    Random,
    /// `fraction` of payload-bearing flows repeat exactly, `gap`
    /// microseconds later.
    Duplicated { fraction: f64, gap: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeModel {
    /// 45% small payloads (16–72 B), 55% large (704–1460 B); with
    /// transport headers this averages ≈ 669 B per packet.
    IspMix,
    Fixed(u32),
}

/// Relative flow-class weights; zero removes a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassMix {
    pub tcp: u32,
    pub udp: u32,
    pub other_ip: u32,
    pub non_ip: u32,
}

impl Default for ClassMix {
    fn default() -> Self {
        ClassMix { tcp: 70, udp: 20, other_ip: 7, non_ip: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenSpec {
    pub seed: u64,
    /// Trace-time microseconds of the first flow start opportunity.
    pub base_time: u64,
    /// Flow starts spread uniformly over this many microseconds.
    pub duration: u64,
    /// Number of generated flows (duplicates come on top).
    pub flows: u64,
    /// Mean packets per flow; actual counts vary uniformly around it.
    pub mean_packets: u32,
    pub payload: PayloadModel,
    pub sizes: SizeModel,
    pub mix: ClassMix,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 1,
            base_time: 0,
            duration: 10_000_000,
            flows: 100,
            mean_packets: 8,
            payload: PayloadModel::Ramp,
            sizes: SizeModel::IspMix,
            mix: ClassMix::default(),
        }
    }
}

/// What the generator knows that the archive must rediscover.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub total_payload_bytes: u64,
    /// Payload bytes belonging to deliberate byte-exact repeats.
    pub duplicated_payload_bytes: u64,
    pub duplicate_flows: u64,
}

#[derive(Debug, Clone)]
pub struct GeneratedTrace {
    /// Timestamp-ordered packets with ingest sequence numbers assigned.
    pub packets: Vec<Packet>,
    pub truth: GroundTruth,
}

#[derive(Clone, Copy)]
enum FlowClass {
    Tcp,
    Udp,
    OtherIp,
    NonIp,
}

struct FlowPlan {
    class: FlowClass,
    start: u64,
    /// Inter-packet gaps in microseconds (len = packets - 1).
    gaps: Vec<u64>,
    src: Ipv4Addr,
    dst: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    payloads: Vec<Vec<u8>>,
}

fn pick_class(rng: &mut ChaCha8Rng, mix: &ClassMix) -> FlowClass {
    let total = mix.tcp + mix.udp + mix.other_ip + mix.non_ip;
    assert!(total > 0, "class mix must keep at least one class");
    let mut roll = rng.random_range(0..total);
    for (weight, class) in [
        (mix.tcp, FlowClass::Tcp),
        (mix.udp, FlowClass::Udp),
        (mix.other_ip, FlowClass::OtherIp),
        (mix.non_ip, FlowClass::NonIp),
    ] {
        if roll < weight {
            return class;
        }
        roll -= weight;
    }
    unreachable!("weights cover the roll range")
}

fn payload_len(rng: &mut ChaCha8Rng, sizes: SizeModel) -> usize {
    match sizes {
        SizeModel::Fixed(n) => n as usize,
        SizeModel::IspMix => {
            if rng.random_range(0u32..100) < 45 {
                rng.random_range(16..=72)
            } else {
                rng.random_range(704..=1460)
            }
        }
    }
}

fn payload_bytes(rng: &mut ChaCha8Rng, model: PayloadModel, len: usize) -> Vec<u8> {
    match model {
        PayloadModel::Ramp => ramp_payload(rng.random_range(0..=255u32) as u8, len),
        // Duplicated flows carry random content; the repetition comes
        // from copying whole flows, not from the byte model.
        PayloadModel::Random | PayloadModel::Duplicated { .. } => {
            let mut v = vec![0u8; len];
            rng.fill_bytes(&mut v);
            v
        }
    }
}

/// Generates a deterministic trace from the requested knobs. Output
/// packets are sorted by timestamp (ties broken by creation order) and
/// numbered in that order.
pub fn generate(spec: &GenSpec) -> GeneratedTrace {
    assert!(spec.flows > 0, "a trace needs at least one flow");
    assert!(spec.mean_packets > 0, "flows need at least one packet");
    if let PayloadModel::Duplicated { fraction, .. } = spec.payload {
        assert!((0.0..=1.0).contains(&fraction), "duplicate fraction is a probability");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = GroundTruth::default();
    let mut plans: Vec<FlowPlan> = Vec::new();

    for flow_idx in 0..spec.flows {
        let class = pick_class(&mut rng, &spec.mix);
        let start = spec.base_time + rng.random_range(0..spec.duration.max(1));
        let count = rng.random_range(1..=2 * spec.mean_packets.max(1) - 1) as usize;
        let gaps: Vec<u64> = (1..count).map(|_| rng.random_range(200..5_000)).collect();
        let payloads: Vec<Vec<u8>> = match class {
            FlowClass::NonIp => vec![Vec::new(); count],
            _ => (0..count)
                .map(|_| {
                    let len = payload_len(&mut rng, spec.sizes);
                    payload_bytes(&mut rng, spec.payload, len)
                })
                .collect(),
        };
        let flow_payload: u64 = payloads.iter().map(|p| p.len() as u64).sum();
        truth.total_payload_bytes += flow_payload;

        let src = Ipv4Addr::new(10, (flow_idx / 251 % 31) as u8 + 1, (flow_idx % 251) as u8, 1 + (flow_idx % 200) as u8);
        let dst = Ipv4Addr::new(172, 16, (flow_idx % 4) as u8, 1 + (flow_idx % 40) as u8);
        let src_port = 1024 + ((flow_idx * 13) % 30_000) as u16;
        let dst_port = [443u16, 80, 53, 8080, 123][(flow_idx % 5) as usize];
        let plan = FlowPlan {
            class,
            start,
            gaps,
            src,
            dst,
            src_port,
            dst_port,
            payloads,
        };

        // Payload-bearing flows may get a byte-exact repeat.
        let dup = match (spec.payload, class) {
            (PayloadModel::Duplicated { fraction, gap }, FlowClass::Tcp | FlowClass::Udp | FlowClass::OtherIp) => {
                rng.random_bool(fraction).then_some(gap)
            }
            _ => None,
        };
        if let Some(gap) = dup {
            truth.duplicated_payload_bytes += flow_payload;
            truth.total_payload_bytes += flow_payload;
            truth.duplicate_flows += 1;
            let dup_gaps: Vec<u64> = (1..plan.payloads.len()).map(|_| rng.random_range(200..5_000)).collect();
            plans.push(FlowPlan {
                class,
                start: plan.start + gap,
                gaps: dup_gaps,
                src: plan.src,
                dst: plan.dst,
                // A different source port: same content, new flow.
                src_port: 32_000 + ((flow_idx * 13) % 30_000) as u16,
                dst_port: plan.dst_port,
                payloads: plan.payloads.clone(),
            });
        }
        plans.push(plan);
    }

    // Materialize packets.
    let mut timed: Vec<(u64, usize, Vec<u8>, u32)> = Vec::new(); // (ts, tiebreak, data, original_len)
    let mut tiebreak = 0usize;
    for plan in &plans {
        let mut ts = plan.start;
        for (i, payload) in plan.payloads.iter().enumerate() {
            if i > 0 {
                ts += plan.gaps[i - 1];
            }
            let data = match plan.class {
                FlowClass::Tcp => wire::tcp_packet(&TcpPacketSpec {
                    src: plan.src,
                    dst: plan.dst,
                    src_port: plan.src_port,
                    dst_port: plan.dst_port,
                    seq: (i as u32) * 1460 + 1,
                    ack: 1,
                    flags: crate::packet::TCP_FLAG_ACK,
                    window: 64_240,
                    ttl: 64,
                    ip_id: i as u16,
                    tos: 0,
                    tcp_options: &[],
                    payload,
                }),
                FlowClass::Udp => wire::udp_packet(&UdpPacketSpec {
                    src: plan.src,
                    dst: plan.dst,
                    src_port: plan.src_port,
                    dst_port: plan.dst_port,
                    ttl: 64,
                    ip_id: i as u16,
                    payload,
                }),
                FlowClass::OtherIp => wire::other_ip_packet(plan.src, plan.dst, 47, 64, i as u16, payload),
                FlowClass::NonIp => wire::arp_packet(wire::mac_for(plan.src), plan.src),
            };
            let original_len = data.len() as u32;
            timed.push((ts, tiebreak, data, original_len));
            tiebreak += 1;
        }
    }
    timed.sort_by_key(|(ts, order, _, _)| (*ts, *order));

    let packets = timed
        .into_iter()
        .enumerate()
        .map(|(seq, (ts, _, data, original_len))| {
            Packet::new(
                (ts / 1_000_000) as u32,
                (ts % 1_000_000) as u32,
                original_len,
                data,
                seq as u64,
            )
            .expect("generated packets are well-formed")
        })
        .collect();
    GeneratedTrace { packets, truth }
}

/// Prices per gigabyte-month for each tier. A gigabyte is 1e9 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub fast_price_per_gb: f64,
    pub bulk_price_per_gb: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        // NVMe-class vs object-storage-class list prices.
        CostModel { fast_price_per_gb: 0.740, bulk_price_per_gb: 0.0467 }
    }
}

/// Monthly storage cost in dollars, rounded to the cent.
pub fn storage_cost(model: &CostModel, fast_bytes: u64, bulk_bytes: u64) -> f64 {
    let dollars = fast_bytes as f64 / 1e9 * model.fast_price_per_gb
        + bulk_bytes as f64 / 1e9 * model.bulk_price_per_gb;
    (dollars * 100.0).round() / 100.0
}

/// One (chunking, window) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub chunking: String,
    /// Dedup window, microseconds.
    pub window: u64,
    pub total_raw_bytes: u64,
    /// Raw payload bytes this window would have deduplicated.
    pub hit_raw_bytes: u64,
    /// Redundancy found, before per-chunk compression (% of raw).
    pub redundancy_raw_pct: f64,
    pub total_compressed_bytes: u64,
    pub hit_compressed_bytes: u64,
    /// Redundancy found, after per-chunk compression (% of compressed).
    pub redundancy_compressed_pct: f64,
    /// Chunk-index entries the window would create.
    pub index_entries: u64,
    /// Bulk bytes stored (compressed chunks plus record framing).
    pub est_bulk_bytes: u64,
    /// Fast bytes (header blocks including chunk references).
    pub est_fast_bytes: u64,
    pub est_cost_dollars: f64,
}

struct FlowEvents {
    end_ts: u64,
    chunks: Vec<(ChunkHash, u32, u32)>, // (hash, raw_len, compressed_len)
}

/// Framing bytes a stored chunk record adds around its payload.
fn record_framing_len(raw_len: u32, stored_len: u32) -> u64 {
    let mut v = Vec::with_capacity(12);
    varint::put_u64(&mut v, u64::from(raw_len));
    varint::put_u64(&mut v, u64::from(stored_len));
    (2 + v.len()) as u64 // magic + varints + compressor id
}

/// Replays a capture under every (chunking, window) combination and
/// reports what each would have stored. Shares the recorder's grouping,
/// cutting, and expiry rules, so a point at the recorder's own settings
/// reproduces the recorder's dedup numbers.
pub fn dedup_window_sweep(
    packets: &[Packet],
    link_type: u32,
    grouper: GrouperConfig,
    chunkings: &[ChunkingConfig],
    windows: &[u64],
    compressor: Compressor,
    cost: &CostModel,
) -> Result<Vec<SweepPoint>> {
    if chunkings.is_empty() || windows.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one chunking and one window".into()));
    }
    // One grouping pass, shared by every cell.
    let mut g = FlowGrouper::new(grouper);
    let mut flows = Vec::new();
    for p in packets {
        flows.extend(g.ingest(p.clone(), link_type).into_iter().map(|(f, _)| f));
    }
    flows.extend(g.flush_all().into_iter().map(|(f, _)| f));

    let mut out = Vec::with_capacity(chunkings.len() * windows.len());
    for &chunking in chunkings {
        chunking.validate()?;
        // One chunking pass per configuration.
        let mut comp_cache: HashMap<ChunkHash, u32> = HashMap::new();
        let mut events: Vec<FlowEvents> = Vec::with_capacity(flows.len());
        let mut header_bytes = 0u64;
        let mut ref_bytes = 0u64;
        for flow in &flows {
            let stream = payload::assemble(flow);
            let mut chunks = Vec::new();
            for (start, len) in crate::chunk::chunk_boundaries(&stream.bytes, &chunking) {
                let raw = &stream.bytes[start..start + len];
                let hash = ChunkHash::of(raw);
                let comp = *comp_cache
                    .entry(hash)
                    .or_insert_with(|| compress::pack(compressor, raw).1.len() as u32);
                chunks.push((hash, len as u32, comp));
                // Each chunk costs one reference in the header block:
                // 8 location bytes plus the raw-length varint.
                let mut v = Vec::with_capacity(5);
                varint::put_u64(&mut v, len as u64);
                ref_bytes += 8 + v.len() as u64;
            }
            header_bytes +=
                header_codec::compress_headers(flow, compressor).to_bytes().len() as u64;
            events.push(FlowEvents { end_ts: flow.end_ts(), chunks });
        }
        let est_fast_bytes = header_bytes + ref_bytes;

        for &window in windows {
            let mut index = InMemoryChunkIndex::new();
            let mut point = SweepPoint {
                chunking: chunking.label(),
                window,
                total_raw_bytes: 0,
                hit_raw_bytes: 0,
                redundancy_raw_pct: 0.0,
                total_compressed_bytes: 0,
                hit_compressed_bytes: 0,
                redundancy_compressed_pct: 0.0,
                index_entries: 0,
                est_bulk_bytes: 0,
                est_fast_bytes,
                est_cost_dollars: 0.0,
            };
            let mut fake_segment = 0u32;
            for flow in &events {
                if window > 0 {
                    index.expire(flow.end_ts, window);
                }
                for &(hash, raw_len, comp_len) in &flow.chunks {
                    point.total_raw_bytes += u64::from(raw_len);
                    point.total_compressed_bytes += u64::from(comp_len);
                    let hit = if window > 0 { index.get(&hash).is_some() } else { false };
                    if hit {
                        point.hit_raw_bytes += u64::from(raw_len);
                        point.hit_compressed_bytes += u64::from(comp_len);
                    } else {
                        point.est_bulk_bytes +=
                            u64::from(comp_len) + record_framing_len(raw_len, comp_len);
                        if window > 0 {
                            // Location is irrelevant to the replay; any
                            // distinct value works.
                            index.put(
                                hash,
                                crate::chunk::ChunkLocation { segment: fake_segment, offset: 0 },
                                flow.end_ts,
                            );
                            fake_segment = fake_segment.wrapping_add(1);
                            point.index_entries += 1;
                        }
                    }
                }
            }
            point.redundancy_raw_pct = pct(point.hit_raw_bytes, point.total_raw_bytes);
            point.redundancy_compressed_pct =
                pct(point.hit_compressed_bytes, point.total_compressed_bytes);
            point.est_cost_dollars = storage_cost(cost, point.est_fast_bytes, point.est_bulk_bytes);
            out.push(point);
        }
    }
    Ok(out)
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64 * 100.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::LINKTYPE_ETHERNET;
    use crate::recorder::{record_file, RecorderConfig};
    use crate::pcap;

    #[test]
    fn ramp_formula_matches_the_worked_example() {
        assert_eq!(ramp_payload(3, 5), vec![0, 3, 6, 9, 12]);
        // Wraps modulo 256.
        assert_eq!(ramp_payload(200, 4), vec![0, 200, 144, 88]);
        assert_eq!(ramp_payload(0, 3), vec![0, 0, 0]);
    }

    #[test]
    fn generation_is_deterministic_and_ordered() {
        let spec = GenSpec { seed: 42, flows: 50, ..GenSpec::default() };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.packets, b.packets);
        assert_eq!(a.truth, b.truth);
        for (i, p) in a.packets.iter().enumerate() {
            assert_eq!(p.seq, i as u64, "sequence numbers follow sorted order");
        }
        for w in a.packets.windows(2) {
            assert!(w[0].ts_micros() <= w[1].ts_micros(), "timestamps sorted");
        }
        let c = generate(&GenSpec { seed: 43, ..spec });
        assert_ne!(a.packets, c.packets, "seed changes the trace");
    }

    #[test]
    fn duplicated_model_tracks_ground_truth() {
        let spec = GenSpec {
            seed: 7,
            flows: 200,
            payload: PayloadModel::Duplicated { fraction: 0.5, gap: 2_000_000 },
            ..GenSpec::default()
        };
        let t = generate(&spec);
        assert!(t.truth.duplicate_flows > 60, "about half of 200 flows repeat");
        assert!(t.truth.duplicate_flows < 140);
        assert!(t.truth.duplicated_payload_bytes > 0);
        assert!(t.truth.duplicated_payload_bytes < t.truth.total_payload_bytes);
    }

    #[test]
    fn ground_truth_counts_total_payload() {
        let spec = GenSpec { seed: 9, flows: 30, ..GenSpec::default() };
        let t = generate(&spec);
        let mut total = 0u64;
        for p in &t.packets {
            let parsed = crate::packet::parse_headers(&p.data, LINKTYPE_ETHERNET);
            total += (p.data.len() - parsed.payload_offset()) as u64;
        }
        assert_eq!(total, t.truth.total_payload_bytes);
    }

    #[test]
    fn storage_cost_matches_the_worked_example() {
        let model = CostModel { fast_price_per_gb: 0.740, bulk_price_per_gb: 0.0467 };
        // 6.861 GB fast + 316.2 GB bulk → $5.07714 + $14.76654 → $19.84.
        let cost = storage_cost(&model, 6_861_000_000, 316_200_000_000);
        assert_eq!(cost, 19.84);
        assert_eq!(storage_cost(&model, 0, 0), 0.0);
        assert_eq!(storage_cost(&model, 1_000_000_000, 0), 0.74);
    }

    fn sweep_fixture() -> (tempfile::TempDir, std::path::PathBuf, GeneratedTrace) {
        let dir = tempfile::tempdir().unwrap();
        let trace = generate(&GenSpec {
            seed: 11,
            flows: 120,
            duration: 8_000_000,
            payload: PayloadModel::Duplicated { fraction: 0.4, gap: 3_000_000 },
            sizes: SizeModel::Fixed(900),
            mix: ClassMix { tcp: 80, udp: 20, other_ip: 0, non_ip: 0 },
            ..GenSpec::default()
        });
        let path = dir.path().join("sweep.pcap");
        pcap::write_file(&path, LINKTYPE_ETHERNET, &trace.packets).unwrap();
        (dir, path, trace)
    }

    #[test]
    fn sweep_savings_grow_with_the_window() {
        let (_dir, _path, trace) = sweep_fixture();
        let grouper = GrouperConfig::default();
        let windows = [0u64, 1_000_000, 2_000_000, 4_000_000, 8_000_000, 60_000_000];
        let points = dedup_window_sweep(
            &trace.packets,
            LINKTYPE_ETHERNET,
            grouper,
            &[ChunkingConfig::cdc(1024)],
            &windows,
            Compressor::Deflate,
            &CostModel::default(),
        )
        .unwrap();
        assert_eq!(points.len(), windows.len());
        assert_eq!(points[0].hit_raw_bytes, 0, "window zero finds nothing");
        assert_eq!(points[0].index_entries, 0);
        for pair in points.windows(2) {
            assert!(
                pair[1].hit_raw_bytes >= pair[0].hit_raw_bytes,
                "savings must not shrink as the window grows: {} then {}",
                pair[0].hit_raw_bytes,
                pair[1].hit_raw_bytes
            );
            assert!(pair[1].est_bulk_bytes <= pair[0].est_bulk_bytes);
        }
        // The widest window catches every deliberate repeat (gap 3 s).
        let last = points.last().unwrap();
        assert!(last.hit_raw_bytes >= trace.truth.duplicated_payload_bytes);
        assert!(last.redundancy_raw_pct > 0.0);
    }

    #[test]
    fn sweep_agrees_with_a_real_record_run() {
        let (dir, path, trace) = sweep_fixture();
        let chunking = ChunkingConfig::cdc(1024);
        let window = 5_000_000u64;
        let grouper = GrouperConfig::default();
        let config = RecorderConfig {
            epoch_len: 2_000_000,
            grouper,
            chunking,
            dedup_window: window,
            workers: 1,
            ..RecorderConfig::default()
        };
        let report =
            record_file(&path, &dir.path().join("fast"), &dir.path().join("bulk"), config).unwrap();
        let points = dedup_window_sweep(
            &trace.packets,
            LINKTYPE_ETHERNET,
            grouper,
            &[chunking],
            &[window],
            Compressor::Deflate,
            &CostModel::default(),
        )
        .unwrap();
        let point = &points[0];
        assert_eq!(
            point.hit_raw_bytes, report.counters.dedup_hit_bytes,
            "replay must reproduce the recorder's dedup decisions"
        );
        assert_eq!(point.total_raw_bytes, report.counters.raw_payload_bytes);
        assert_eq!(
            point.total_raw_bytes - point.hit_raw_bytes,
            report.counters.chunk_raw_bytes_stored
        );
    }

    #[test]
    fn sweep_rejects_empty_axes() {
        let trace = generate(&GenSpec { seed: 1, flows: 3, ..GenSpec::default() });
        let err = dedup_window_sweep(
            &trace.packets,
            LINKTYPE_ETHERNET,
            GrouperConfig::default(),
            &[],
            &[0],
            Compressor::Deflate,
            &CostModel::default(),
        );
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }
}
