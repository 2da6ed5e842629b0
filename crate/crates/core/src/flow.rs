//! Flow grouping: partitions an ingest stream into direction-sensitive
//! 5-tuple flows with bounded buffering.
//!
//! A buffer is completed and emitted when any of these fire:
//!
//! * **duration** — a new packet of the same key would stretch the flow
//!   past the configured max flow duration; the buffer is flushed and the
//!   packet starts a fresh one, so an emitted flow never spans more than
//!   the bound;
//! * **TCP close** — an RST flushes immediately (RST included); after a
//!   FIN has been seen in this direction, the next ACK-bearing packet
//!   completes the flow (covering the usual FIN, ACK-of-FIN tail);
//! * **idle** — at every ingest, buffers whose last activity is older
//!   than `idle_timeout` relative to the new packet's timestamp are
//!   flushed;
//! * **memory** — if total buffered bytes would stay above
//!   `max_buffered_bytes`, buffers are force-flushed oldest-first-packet
//!   first until the total fits.
//!
//! Timestamps may regress (captures interleave multiple taps); regression
//! beyond one second only logs a warning. Input order is never reordered:
//! packets keep their ingest sequence numbers, and a flow's packet list is
//! exactly its packets in ingest order.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::packet::{
    extract_flow_key, parse_headers, FlowKey, Packet, ParsedHeader, TCP_FLAG_ACK, TCP_FLAG_FIN,
    TCP_FLAG_RST,
};

/// Tolerated backwards timestamp jump before a warning is logged (µs).
pub const REGRESSION_TOLERANCE_MICROS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy)]
pub struct GrouperConfig {
    /// Max flow duration in microseconds (emitted flows never exceed it).
    pub max_flow_duration: u64,
    /// Idle timeout in microseconds.
    pub idle_timeout: u64,
    /// Cap on total buffered captured bytes.
    pub max_buffered_bytes: u64,
}

impl Default for GrouperConfig {
    fn default() -> Self {
        GrouperConfig {
            max_flow_duration: 300 * 1_000_000,
            idle_timeout: 15 * 1_000_000,
            max_buffered_bytes: 256 << 20,
        }
    }
}

/// One packet of a flow: the capture record plus its parsed header view.
#[derive(Debug, Clone)]
pub struct FlowPacket {
    pub packet: Packet,
    pub parsed: ParsedHeader,
}

/// A completed flow: every packet of one 5-tuple between two termination
/// points, in ingest order.
#[derive(Debug, Clone)]
pub struct Flow {
    pub key: FlowKey,
    pub packets: Vec<FlowPacket>,
}

impl Flow {
    /// Timestamp of the first ingested packet (µs).
    pub fn first_ts(&self) -> u64 {
        self.packets.first().map_or(0, |p| p.packet.ts_micros())
    }

    /// Flow end time: the maximum packet timestamp (µs). Robust against
    /// minor timestamp regression inside the flow.
    pub fn end_ts(&self) -> u64 {
        self.packets.iter().map(|p| p.packet.ts_micros()).max().unwrap_or(0)
    }

    pub fn captured_bytes(&self) -> u64 {
        self.packets.iter().map(|p| u64::from(p.packet.captured_len())).sum()
    }
}

/// Why a buffer was emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlushCause {
    MaxDuration,
    FinAck,
    Rst,
    Idle,
    Memory,
    Shutdown,
}

struct Buffer {
    id: u64,
    first_ts: u64,
    last_activity: u64,
    end_ts: u64,
    bytes: u64,
    fin_seen: bool,
    packets: Vec<FlowPacket>,
}

/// Streaming grouper. Feed packets with [`FlowGrouper::ingest`]; call
/// [`FlowGrouper::flush_all`] at end of input.
pub struct FlowGrouper {
    config: GrouperConfig,
    buffers: HashMap<FlowKey, Buffer>,
    /// (last_activity, buffer id) → key, for idle flushing.
    by_activity: BTreeMap<(u64, u64), FlowKey>,
    /// (first_ts, buffer id, key), for oldest-first memory flushing.
    by_first_ts: BTreeSet<(u64, u64, FlowKey)>,
    total_buffered: u64,
    next_buffer_id: u64,
    last_ingest_ts: Option<u64>,
    regressions: u64,
}

impl FlowGrouper {
    pub fn new(config: GrouperConfig) -> Self {
        FlowGrouper {
            config,
            buffers: HashMap::new(),
            by_activity: BTreeMap::new(),
            by_first_ts: BTreeSet::new(),
            total_buffered: 0,
            next_buffer_id: 0,
            last_ingest_ts: None,
            regressions: 0,
        }
    }

    pub fn buffered_bytes(&self) -> u64 {
        self.total_buffered
    }

    pub fn open_flows(&self) -> usize {
        self.buffers.len()
    }

    /// Count of timestamp regressions beyond the tolerance.
    pub fn regressions(&self) -> u64 {
        self.regressions
    }

    /// Ingests one packet, returning any flows completed by this event in
    /// deterministic order (idle flushes first, oldest-first; then flushes
    /// triggered by the packet itself; then memory flushes).
    pub fn ingest(&mut self, packet: Packet, link_type: u32) -> Vec<(Flow, FlushCause)> {
        let parsed = parse_headers(&packet.data, link_type);
        let key = extract_flow_key(&parsed);
        let t = packet.ts_micros();
        let mut out = Vec::new();

        if let Some(prev) = self.last_ingest_ts {
            if t + REGRESSION_TOLERANCE_MICROS < prev {
                self.regressions += 1;
                log::warn!(
                    "timestamp regression: packet seq {} at {}µs is {}µs behind its predecessor; keeping input order",
                    packet.seq,
                    t,
                    prev - t
                );
            }
        }
        self.last_ingest_ts = Some(t);

        // Idle flushes, oldest activity first.
        while let Some((&(activity, id), &idle_key)) = self.by_activity.iter().next() {
            if t.saturating_sub(activity) <= self.config.idle_timeout {
                break;
            }
            let _ = id;
            let flow = self.remove_buffer(&idle_key);
            out.push((flow, FlushCause::Idle));
        }

        // A same-key buffer that the new packet would over-run flushes
        // first; the packet then starts a fresh buffer.
        if let Some(buf) = self.buffers.get(&key) {
            if t.saturating_sub(buf.first_ts) > self.config.max_flow_duration {
                let flow = self.remove_buffer(&key);
                out.push((flow, FlushCause::MaxDuration));
            }
        }

        // Append to (or create) the buffer.
        let captured = u64::from(packet.captured_len());
        let tcp_flags = parsed.tcp().map(|tcp| tcp.flags);
        let buf = match self.buffers.get_mut(&key) {
            Some(buf) => {
                self.by_activity.remove(&(buf.last_activity, buf.id));
                buf.last_activity = buf.last_activity.max(t);
                buf.end_ts = buf.end_ts.max(t);
                buf
            }
            None => {
                let id = self.next_buffer_id;
                self.next_buffer_id += 1;
                self.by_first_ts.insert((t, id, key));
                self.buffers.entry(key).or_insert(Buffer {
                    id,
                    first_ts: t,
                    last_activity: t,
                    end_ts: t,
                    bytes: 0,
                    fin_seen: false,
                    packets: Vec::new(),
                })
            }
        };
        buf.bytes += captured;
        buf.packets.push(FlowPacket { packet, parsed });
        self.by_activity.insert((buf.last_activity, buf.id), key);
        self.total_buffered += captured;

        // TCP termination.
        if let Some(flags) = tcp_flags {
            let buf = self.buffers.get_mut(&key).expect("buffer just touched");
            if flags & TCP_FLAG_RST != 0 {
                let flow = self.remove_buffer(&key);
                out.push((flow, FlushCause::Rst));
            } else {
                let completes = buf.fin_seen && flags & TCP_FLAG_ACK != 0;
                if flags & TCP_FLAG_FIN != 0 {
                    buf.fin_seen = true;
                }
                if completes {
                    let flow = self.remove_buffer(&key);
                    out.push((flow, FlushCause::FinAck));
                }
            }
        }

        // Memory cap: force-flush oldest-first-packet buffers.
        while self.total_buffered > self.config.max_buffered_bytes {
            let &(_, _, victim) = self.by_first_ts.iter().next().expect("buffers exist while bytes > 0");
            let flow = self.remove_buffer(&victim);
            out.push((flow, FlushCause::Memory));
        }

        out
    }

    /// Flushes every open buffer (end of input), ordered by first packet
    /// time.
    pub fn flush_all(&mut self) -> Vec<(Flow, FlushCause)> {
        let order: Vec<FlowKey> = self.by_first_ts.iter().map(|&(_, _, k)| k).collect();
        order
            .into_iter()
            .map(|k| (self.remove_buffer(&k), FlushCause::Shutdown))
            .collect()
    }

    fn remove_buffer(&mut self, key: &FlowKey) -> Flow {
        let buf = self.buffers.remove(key).expect("buffer exists");
        self.by_activity.remove(&(buf.last_activity, buf.id));
        self.by_first_ts.remove(&(buf.first_ts, buf.id, *key));
        self.total_buffered -= buf.bytes;
        Flow { key: *key, packets: buf.packets }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::LINKTYPE_ETHERNET;
    use crate::wire;
    use std::net::Ipv4Addr;

    fn cfg(mfd_s: u64, idle_s: u64) -> GrouperConfig {
        GrouperConfig {
            max_flow_duration: mfd_s * 1_000_000,
            idle_timeout: idle_s * 1_000_000,
            max_buffered_bytes: u64::MAX,
        }
    }

    fn udp_at(t_micros: u64, src_port: u16, seq: u64) -> Packet {
        let data = wire::udp_packet(&wire::UdpPacketSpec {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            src_port,
            dst_port: 53,
            ttl: 64,
            ip_id: seq as u16,
            payload: &[0; 8],
        });
        Packet::new(
            (t_micros / 1_000_000) as u32,
            (t_micros % 1_000_000) as u32,
            data.len() as u32,
            data,
            seq,
        )
        .unwrap()
    }

    fn tcp_at(t_micros: u64, flags: u8, seq: u64) -> Packet {
        let data = wire::tcp_packet(&wire::TcpPacketSpec { flags, ..Default::default() });
        Packet::new(
            (t_micros / 1_000_000) as u32,
            (t_micros % 1_000_000) as u32,
            data.len() as u32,
            data,
            seq,
        )
        .unwrap()
    }

    #[test]
    fn duration_bound_splits_flow() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        assert!(g.ingest(udp_at(0, 999, 0), LINKTYPE_ETHERNET).is_empty());
        assert!(g.ingest(udp_at(299_000_000, 999, 1), LINKTYPE_ETHERNET).is_empty());
        // 300.5s − 0s over-runs the 300s bound: old buffer flushes, new one starts.
        let done = g.ingest(udp_at(300_500_000, 999, 2), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 1);
        let (flow, cause) = &done[0];
        assert_eq!(*cause, FlushCause::MaxDuration);
        assert_eq!(flow.packets.len(), 2);
        assert_eq!(g.open_flows(), 1);
        // Boundary case: exactly the bound does not split.
        let rest = g.flush_all();
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].0.first_ts(), 300_500_000);
    }

    #[test]
    fn exact_duration_is_kept() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(udp_at(0, 999, 0), LINKTYPE_ETHERNET);
        let done = g.ingest(udp_at(300_000_000, 999, 1), LINKTYPE_ETHERNET);
        assert!(done.is_empty());
        let flows = g.flush_all();
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].0.packets.len(), 2);
        assert_eq!(flows[0].0.end_ts() - flows[0].0.first_ts(), 300_000_000);
    }

    #[test]
    fn idle_timeout_splits_flow() {
        let mut g = FlowGrouper::new(cfg(300, 15));
        g.ingest(udp_at(0, 7, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(5_000_000, 7, 1), LINKTYPE_ETHERNET);
        let done = g.ingest(udp_at(30_000_000, 7, 2), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].1, FlushCause::Idle);
        assert_eq!(done[0].0.packets.len(), 2);
        let rest = g.flush_all();
        assert_eq!(rest.len(), 1);
        assert_eq!(rest[0].0.packets.len(), 1);
    }

    #[test]
    fn idle_flushes_other_keys_too() {
        let mut g = FlowGrouper::new(cfg(300, 15));
        g.ingest(udp_at(0, 1, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(1_000_000, 2, 1), LINKTYPE_ETHERNET);
        // A packet on key 3 at t=20s flushes both idle buffers.
        let done = g.ingest(udp_at(20_000_000, 3, 2), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 2);
        assert!(done.iter().all(|(_, c)| *c == FlushCause::Idle));
        // Oldest activity first.
        assert_eq!(done[0].0.key.src_port, 1);
        assert_eq!(done[1].0.key.src_port, 2);
    }

    #[test]
    fn rst_flushes_immediately() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(tcp_at(0, TCP_FLAG_SYN, 0), LINKTYPE_ETHERNET);
        let done = g.ingest(tcp_at(1000, TCP_FLAG_RST, 1), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].1, FlushCause::Rst);
        assert_eq!(done[0].0.packets.len(), 2);
    }

    use crate::packet::TCP_FLAG_SYN;

    #[test]
    fn fin_then_ack_completes() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(tcp_at(0, TCP_FLAG_SYN, 0), LINKTYPE_ETHERNET);
        g.ingest(tcp_at(1000, TCP_FLAG_ACK, 1), LINKTYPE_ETHERNET);
        // FIN+ACK does not complete on its own...
        assert!(g
            .ingest(tcp_at(2000, TCP_FLAG_FIN | TCP_FLAG_ACK, 2), LINKTYPE_ETHERNET)
            .is_empty());
        // ...the following ACK does.
        let done = g.ingest(tcp_at(3000, TCP_FLAG_ACK, 3), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].1, FlushCause::FinAck);
        assert_eq!(done[0].0.packets.len(), 4);
        assert_eq!(g.open_flows(), 0);
        // Next packet of the same key starts a new flow.
        assert!(g.ingest(tcp_at(4000, TCP_FLAG_SYN, 4), LINKTYPE_ETHERNET).is_empty());
        assert_eq!(g.open_flows(), 1);
    }

    #[test]
    fn memory_cap_flushes_oldest_first_packet() {
        let mut g = FlowGrouper::new(GrouperConfig {
            max_flow_duration: u64::MAX / 2,
            idle_timeout: u64::MAX / 2,
            max_buffered_bytes: 120,
        });
        // Each UDP packet here is 50 bytes captured.
        g.ingest(udp_at(0, 1, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(1, 2, 1), LINKTYPE_ETHERNET);
        // Third packet pushes the total to 150 > 120: the oldest buffer
        // (port 1) is force-flushed.
        let done = g.ingest(udp_at(2, 3, 2), LINKTYPE_ETHERNET);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].1, FlushCause::Memory);
        assert_eq!(done[0].0.key.src_port, 1);
        assert!(g.buffered_bytes() <= 120);
    }

    #[test]
    fn interleaved_keys_keep_input_order() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(udp_at(0, 1, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(1, 2, 1), LINKTYPE_ETHERNET);
        g.ingest(udp_at(2, 1, 2), LINKTYPE_ETHERNET);
        g.ingest(udp_at(3, 2, 3), LINKTYPE_ETHERNET);
        let flows = g.flush_all();
        assert_eq!(flows.len(), 2);
        let a = &flows[0].0;
        let b = &flows[1].0;
        assert_eq!(a.key.src_port, 1);
        assert_eq!(b.key.src_port, 2);
        assert_eq!(a.packets.iter().map(|p| p.packet.seq).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(b.packets.iter().map(|p| p.packet.seq).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn flush_all_orders_by_first_ts() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(udp_at(5, 9, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(1, 8, 1), LINKTYPE_ETHERNET);
        g.ingest(udp_at(3, 7, 2), LINKTYPE_ETHERNET);
        let flows = g.flush_all();
        let ports: Vec<u16> = flows.iter().map(|(f, _)| f.key.src_port).collect();
        assert_eq!(ports, vec![8, 7, 9]);
        assert_eq!(g.buffered_bytes(), 0);
    }

    #[test]
    fn regression_is_tolerated_with_warning() {
        let mut g = FlowGrouper::new(cfg(300, 1000));
        g.ingest(udp_at(10_000_000, 1, 0), LINKTYPE_ETHERNET);
        g.ingest(udp_at(8_000_000, 1, 1), LINKTYPE_ETHERNET); // 2s back
        assert_eq!(g.regressions(), 1);
        let flows = g.flush_all();
        assert_eq!(flows.len(), 1);
        // Input order kept despite regression.
        assert_eq!(flows[0].0.packets.iter().map(|p| p.packet.seq).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(flows[0].0.end_ts(), 10_000_000);
    }

    #[test]
    fn packet_count_conservation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut g = FlowGrouper::new(cfg(10, 3));
        let mut t = 0u64;
        let mut emitted = 0usize;
        let n = 500;
        for seq in 0..n {
            t += rng.random_range(0..2_000_000);
            let port = rng.random_range(1..6u16);
            emitted += g.ingest(udp_at(t, port, seq), LINKTYPE_ETHERNET)
                .iter()
                .map(|(f, _)| f.packets.len())
                .sum::<usize>();
        }
        emitted += g.flush_all().iter().map(|(f, _)| f.packets.len()).sum::<usize>();
        assert_eq!(emitted, n as usize);
        assert_eq!(g.buffered_bytes(), 0);
    }
}
