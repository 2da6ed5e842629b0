//! Packet model: captured packets, header classification, structured
//! header parsing, and flow keys.
//!
//! Parsing is a total function over arbitrary bytes: anything that is not
//! a complete Ethernet/IPv4 structure degrades to a cruder class rather
//! than failing, and the raw bytes are always preserved so that
//! `serialize_headers(parse_headers(x))` reproduces the header region of
//! `x` exactly. Nothing in this module ever mutates or normalizes captured
//! bytes.

use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Microseconds per second; fractional timestamps must stay below this.
pub const MICROS_PER_SEC: u32 = 1_000_000;

/// pcap link type for Ethernet frames, the only one parsed structurally.
pub const LINKTYPE_ETHERNET: u32 = 1;

const ETHERNET_HEADER_LEN: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
pub const IPPROTO_TCP: u8 = 6;
pub const IPPROTO_UDP: u8 = 17;

/// One captured packet: timestamp, lengths, raw bytes, and the position
/// it occupied in the input (used to reconstruct exact input order when
/// several packets share a timestamp).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub ts_sec: u32,
    /// Microsecond fraction, always `< 1_000_000`.
    pub ts_frac: u32,
    /// Length of the packet as it appeared on the wire.
    pub original_len: u32,
    /// Captured bytes; may be shorter than `original_len` if the capture
    /// was truncated by a snapshot length.
    pub data: Vec<u8>,
    /// Ingest sequence number: 0-based position in the input stream.
    pub seq: u64,
}

impl Packet {
    pub fn new(ts_sec: u32, ts_frac: u32, original_len: u32, data: Vec<u8>, seq: u64) -> Result<Self> {
        if ts_frac >= MICROS_PER_SEC {
            return Err(Error::InvalidPacket(format!(
                "timestamp fraction {ts_frac} is not a microsecond count"
            )));
        }
        if data.len() > u32::MAX as usize || data.len() as u32 > original_len {
            return Err(Error::InvalidPacket(format!(
                "captured length {} exceeds original length {original_len}",
                data.len()
            )));
        }
        Ok(Packet { ts_sec, ts_frac, original_len, data, seq })
    }

    #[inline]
    pub fn captured_len(&self) -> u32 {
        self.data.len() as u32
    }

    /// Timestamp as microseconds since the capture epoch.
    #[inline]
    pub fn ts_micros(&self) -> u64 {
        u64::from(self.ts_sec) * u64::from(MICROS_PER_SEC) + u64::from(self.ts_frac)
    }
}

/// How much structure the parser could extract from a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParseClass {
    Tcp,
    Udp,
    /// Complete IPv4 header, but the transport protocol is neither TCP
    /// nor UDP (or its header is incomplete); everything after the IP
    /// header is treated as payload.
    OtherIp,
    /// No complete Ethernet/IPv4 structure; the whole packet is kept as
    /// an opaque literal.
    NonIp,
}

impl ParseClass {
    pub fn as_u8(self) -> u8 {
        match self {
            ParseClass::Tcp => 0,
            ParseClass::Udp => 1,
            ParseClass::OtherIp => 2,
            ParseClass::NonIp => 3,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => ParseClass::Tcp,
            1 => ParseClass::Udp,
            2 => ParseClass::OtherIp,
            3 => ParseClass::NonIp,
            _ => return None,
        })
    }
}

/// Direction-sensitive flow identity. Packets A→B and B→A form two
/// distinct flows. Non-TCP/UDP packets carry zero ports; packets with no
/// IPv4 structure all share the reserved all-zero key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub protocol: u8,
    pub src_port: u16,
    pub dst_port: u16,
}

/// Serialized size of a [`FlowKey`].
pub const FLOW_KEY_LEN: usize = 13;

impl FlowKey {
    /// The reserved key shared by all packets without IPv4 structure.
    pub const NON_IP: FlowKey = FlowKey {
        src_ip: Ipv4Addr::new(0, 0, 0, 0),
        dst_ip: Ipv4Addr::new(0, 0, 0, 0),
        protocol: 0,
        src_port: 0,
        dst_port: 0,
    };

    /// Fixed 13-byte encoding: src(4) dst(4) protocol(1) sport(2) dport(2),
    /// ports big-endian.
    pub fn to_bytes(&self) -> [u8; FLOW_KEY_LEN] {
        let mut b = [0u8; FLOW_KEY_LEN];
        b[0..4].copy_from_slice(&self.src_ip.octets());
        b[4..8].copy_from_slice(&self.dst_ip.octets());
        b[8] = self.protocol;
        b[9..11].copy_from_slice(&self.src_port.to_be_bytes());
        b[11..13].copy_from_slice(&self.dst_port.to_be_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; FLOW_KEY_LEN]) -> FlowKey {
        FlowKey {
            src_ip: Ipv4Addr::new(b[0], b[1], b[2], b[3]),
            dst_ip: Ipv4Addr::new(b[4], b[5], b[6], b[7]),
            protocol: b[8],
            src_port: u16::from_be_bytes([b[9], b[10]]),
            dst_port: u16::from_be_bytes([b[11], b[12]]),
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} proto {}",
            self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.protocol
        )
    }
}

/// Structured IPv4 header. `ihl` is the header length in 32-bit words as
/// it appeared on the wire; `options` holds the `(ihl-5)*4` option bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Header {
    pub ihl: u8,
    pub tos: u8,
    pub total_length: u16,
    pub id: u16,
    pub flags_frag: u16,
    pub ttl: u8,
    pub protocol: u8,
    pub checksum: u16,
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub options: Vec<u8>,
}

impl Ipv4Header {
    pub fn header_len(&self) -> usize {
        usize::from(self.ihl) * 4
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.push(0x40 | (self.ihl & 0x0f));
        out.push(self.tos);
        out.extend_from_slice(&self.total_length.to_be_bytes());
        out.extend_from_slice(&self.id.to_be_bytes());
        out.extend_from_slice(&self.flags_frag.to_be_bytes());
        out.push(self.ttl);
        out.push(self.protocol);
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
        out.extend_from_slice(&self.options);
    }

    /// Recomputes the header checksum from the other fields.
    pub fn computed_checksum(&self) -> u16 {
        let mut bytes = Vec::with_capacity(self.header_len());
        let mut zeroed = self.clone();
        zeroed.checksum = 0;
        zeroed.write(&mut bytes);
        internet_checksum(&bytes)
    }

    pub fn checksum_is_valid(&self) -> bool {
        self.checksum == self.computed_checksum()
    }
}

/// Structured TCP header. `offset_reserved` is byte 12 verbatim: the
/// data-offset nibble plus the reserved bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub offset_reserved: u8,
    pub flags: u8,
    pub window: u16,
    pub checksum: u16,
    pub urgent: u16,
    pub options: Vec<u8>,
}

pub const TCP_FLAG_FIN: u8 = 0x01;
pub const TCP_FLAG_SYN: u8 = 0x02;
pub const TCP_FLAG_RST: u8 = 0x04;
pub const TCP_FLAG_ACK: u8 = 0x10;

impl TcpHeader {
    pub fn data_offset(&self) -> usize {
        usize::from(self.offset_reserved >> 4)
    }

    pub fn header_len(&self) -> usize {
        self.data_offset() * 4
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.ack.to_be_bytes());
        out.push(self.offset_reserved);
        out.push(self.flags);
        out.extend_from_slice(&self.window.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
        out.extend_from_slice(&self.urgent.to_be_bytes());
        out.extend_from_slice(&self.options);
    }
}

/// Structured UDP header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub length: u16,
    pub checksum: u16,
}

impl UdpHeader {
    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&self.length.to_be_bytes());
        out.extend_from_slice(&self.checksum.to_be_bytes());
    }
}

/// Parsed header region of one packet. The variant is the parse class;
/// every variant holds enough to reproduce the header bytes exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedHeader {
    Tcp { link: Vec<u8>, ip: Ipv4Header, tcp: TcpHeader },
    Udp { link: Vec<u8>, ip: Ipv4Header, udp: UdpHeader },
    OtherIp { link: Vec<u8>, ip: Ipv4Header },
    NonIp { raw: Vec<u8> },
}

impl ParsedHeader {
    pub fn class(&self) -> ParseClass {
        match self {
            ParsedHeader::Tcp { .. } => ParseClass::Tcp,
            ParsedHeader::Udp { .. } => ParseClass::Udp,
            ParsedHeader::OtherIp { .. } => ParseClass::OtherIp,
            ParsedHeader::NonIp { .. } => ParseClass::NonIp,
        }
    }

    /// Byte offset at which the payload begins. For `NonIp` the whole
    /// packet is header, so the offset equals the captured length.
    pub fn payload_offset(&self) -> usize {
        match self {
            ParsedHeader::Tcp { link, ip, tcp } => link.len() + ip.header_len() + tcp.header_len(),
            ParsedHeader::Udp { link, ip, .. } => link.len() + ip.header_len() + 8,
            ParsedHeader::OtherIp { link, ip } => link.len() + ip.header_len(),
            ParsedHeader::NonIp { raw } => raw.len(),
        }
    }

    pub fn ip(&self) -> Option<&Ipv4Header> {
        match self {
            ParsedHeader::Tcp { ip, .. }
            | ParsedHeader::Udp { ip, .. }
            | ParsedHeader::OtherIp { ip, .. } => Some(ip),
            ParsedHeader::NonIp { .. } => None,
        }
    }

    pub fn tcp(&self) -> Option<&TcpHeader> {
        match self {
            ParsedHeader::Tcp { tcp, .. } => Some(tcp),
            _ => None,
        }
    }
}

/// Parses the header region of `data`. Total: never fails, degrading to
/// [`ParseClass::NonIp`] when the bytes lack usable structure. Only
/// Ethernet link frames (`link_type == 1`) are examined structurally.
pub fn parse_headers(data: &[u8], link_type: u32) -> ParsedHeader {
    if link_type != LINKTYPE_ETHERNET {
        return ParsedHeader::NonIp { raw: data.to_vec() };
    }
    let Some(ip_region) = data.get(ETHERNET_HEADER_LEN..) else {
        return ParsedHeader::NonIp { raw: data.to_vec() };
    };
    let ethertype = u16::from_be_bytes([data[12], data[13]]);
    if ethertype != ETHERTYPE_IPV4 {
        return ParsedHeader::NonIp { raw: data.to_vec() };
    }
    let Some(ip) = parse_ipv4(ip_region) else {
        return ParsedHeader::NonIp { raw: data.to_vec() };
    };
    let link = data[..ETHERNET_HEADER_LEN].to_vec();
    let transport_region = &ip_region[ip.header_len()..];
    match ip.protocol {
        IPPROTO_TCP => {
            if let Some(tcp) = parse_tcp(transport_region) {
                return ParsedHeader::Tcp { link, ip, tcp };
            }
        }
        IPPROTO_UDP => {
            if let Some(udp) = parse_udp(transport_region) {
                return ParsedHeader::Udp { link, ip, udp };
            }
        }
        _ => {}
    }
    ParsedHeader::OtherIp { link, ip }
}

fn parse_ipv4(data: &[u8]) -> Option<Ipv4Header> {
    if data.len() < 20 {
        return None;
    }
    let version = data[0] >> 4;
    let ihl = data[0] & 0x0f;
    if version != 4 || ihl < 5 {
        return None;
    }
    let header_len = usize::from(ihl) * 4;
    if data.len() < header_len {
        return None;
    }
    Some(Ipv4Header {
        ihl,
        tos: data[1],
        total_length: u16::from_be_bytes([data[2], data[3]]),
        id: u16::from_be_bytes([data[4], data[5]]),
        flags_frag: u16::from_be_bytes([data[6], data[7]]),
        ttl: data[8],
        protocol: data[9],
        checksum: u16::from_be_bytes([data[10], data[11]]),
        src: Ipv4Addr::new(data[12], data[13], data[14], data[15]),
        dst: Ipv4Addr::new(data[16], data[17], data[18], data[19]),
        options: data[20..header_len].to_vec(),
    })
}

fn parse_tcp(data: &[u8]) -> Option<TcpHeader> {
    if data.len() < 20 {
        return None;
    }
    let offset_reserved = data[12];
    let header_len = usize::from(offset_reserved >> 4) * 4;
    if header_len < 20 || data.len() < header_len {
        return None;
    }
    Some(TcpHeader {
        src_port: u16::from_be_bytes([data[0], data[1]]),
        dst_port: u16::from_be_bytes([data[2], data[3]]),
        seq: u32::from_be_bytes([data[4], data[5], data[6], data[7]]),
        ack: u32::from_be_bytes([data[8], data[9], data[10], data[11]]),
        offset_reserved,
        flags: data[13],
        window: u16::from_be_bytes([data[14], data[15]]),
        checksum: u16::from_be_bytes([data[16], data[17]]),
        urgent: u16::from_be_bytes([data[18], data[19]]),
        options: data[20..header_len].to_vec(),
    })
}

fn parse_udp(data: &[u8]) -> Option<UdpHeader> {
    if data.len() < 8 {
        return None;
    }
    Some(UdpHeader {
        src_port: u16::from_be_bytes([data[0], data[1]]),
        dst_port: u16::from_be_bytes([data[2], data[3]]),
        length: u16::from_be_bytes([data[4], data[5]]),
        checksum: u16::from_be_bytes([data[6], data[7]]),
    })
}

/// Reproduces the exact header-region bytes of the packet this header was
/// parsed from.
pub fn serialize_headers(h: &ParsedHeader) -> Vec<u8> {
    let mut out = Vec::with_capacity(h.payload_offset());
    match h {
        ParsedHeader::Tcp { link, ip, tcp } => {
            out.extend_from_slice(link);
            ip.write(&mut out);
            tcp.write(&mut out);
        }
        ParsedHeader::Udp { link, ip, udp } => {
            out.extend_from_slice(link);
            ip.write(&mut out);
            udp.write(&mut out);
        }
        ParsedHeader::OtherIp { link, ip } => {
            out.extend_from_slice(link);
            ip.write(&mut out);
        }
        ParsedHeader::NonIp { raw } => out.extend_from_slice(raw),
    }
    out
}

/// Derives the flow key for a parsed packet.
pub fn extract_flow_key(h: &ParsedHeader) -> FlowKey {
    match h {
        ParsedHeader::Tcp { ip, tcp, .. } => FlowKey {
            src_ip: ip.src,
            dst_ip: ip.dst,
            protocol: ip.protocol,
            src_port: tcp.src_port,
            dst_port: tcp.dst_port,
        },
        ParsedHeader::Udp { ip, udp, .. } => FlowKey {
            src_ip: ip.src,
            dst_ip: ip.dst,
            protocol: ip.protocol,
            src_port: udp.src_port,
            dst_port: udp.dst_port,
        },
        ParsedHeader::OtherIp { ip, .. } => FlowKey {
            src_ip: ip.src,
            dst_ip: ip.dst,
            protocol: ip.protocol,
            src_port: 0,
            dst_port: 0,
        },
        ParsedHeader::NonIp { .. } => FlowKey::NON_IP,
    }
}

/// RFC 1071 internet checksum over `data` (odd trailing byte padded).
pub fn internet_checksum(data: &[u8]) -> u16 {
    let mut sum = 0u32;
    let mut chunks = data.chunks_exact(2);
    for pair in &mut chunks {
        sum += u32::from(u16::from_be_bytes([pair[0], pair[1]]));
    }
    if let [last] = chunks.remainder() {
        sum += u32::from(u16::from_be_bytes([*last, 0]));
    }
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn packet_validation() {
        assert!(Packet::new(0, 0, 10, vec![0; 10], 0).is_ok());
        assert!(Packet::new(0, MICROS_PER_SEC, 10, vec![0; 10], 0).is_err());
        assert!(Packet::new(0, 0, 9, vec![0; 10], 0).is_err());
        // Truncated capture is fine.
        assert!(Packet::new(0, 0, 100, vec![0; 10], 0).is_ok());
    }

    #[test]
    fn flow_key_roundtrip_is_13_bytes() {
        let key = FlowKey {
            src_ip: Ipv4Addr::new(10, 0, 0, 1),
            dst_ip: Ipv4Addr::new(192, 168, 1, 254),
            protocol: 6,
            src_port: 443,
            dst_port: 51234,
        };
        let bytes = key.to_bytes();
        assert_eq!(bytes.len(), FLOW_KEY_LEN);
        assert_eq!(FlowKey::from_bytes(&bytes), key);
        assert_eq!(&bytes[0..4], &[10, 0, 0, 1]);
        assert_eq!(bytes[8], 6);
        assert_eq!(&bytes[9..11], &443u16.to_be_bytes());
    }

    #[test]
    fn tcp_packet_classifies_with_real_ports() {
        let data = wire::tcp_packet(&wire::TcpPacketSpec {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            src_port: 12345,
            dst_port: 80,
            seq: 1000,
            ack: 2000,
            flags: TCP_FLAG_ACK,
            window: 65535,
            ttl: 64,
            ip_id: 7,
            payload: b"hello",
            ..Default::default()
        });
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::Tcp);
        let key = extract_flow_key(&parsed);
        assert_eq!(key.protocol, 6);
        assert_eq!(key.src_port, 12345);
        assert_eq!(key.dst_port, 80);
        assert_eq!(key.src_ip, Ipv4Addr::new(10, 0, 0, 1));
        assert_eq!(parsed.payload_offset(), 14 + 20 + 20);
        assert_eq!(&data[parsed.payload_offset()..], b"hello");
    }

    #[test]
    fn udp_packet_classifies_with_real_ports() {
        let data = wire::udp_packet(&wire::UdpPacketSpec {
            src: Ipv4Addr::new(172, 16, 0, 9),
            dst: Ipv4Addr::new(8, 8, 8, 8),
            src_port: 5353,
            dst_port: 53,
            ttl: 128,
            ip_id: 1,
            payload: &[1, 2, 3, 4],
        });
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::Udp);
        let key = extract_flow_key(&parsed);
        assert_eq!(key.protocol, 17);
        assert_eq!(key.src_port, 5353);
        assert_eq!(key.dst_port, 53);
        assert_eq!(parsed.payload_offset(), 14 + 20 + 8);
    }

    #[test]
    fn icmp_packet_is_other_ip_with_zero_ports() {
        let data = wire::other_ip_packet(
            Ipv4Addr::new(10, 0, 0, 1),
            Ipv4Addr::new(10, 0, 0, 2),
            1, // ICMP
            64,
            5,
            &[8, 0, 0x12, 0x34, 0, 1, 0, 1],
        );
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::OtherIp);
        let key = extract_flow_key(&parsed);
        assert_eq!(key.protocol, 1);
        assert_eq!((key.src_port, key.dst_port), (0, 0));
        // Payload starts right after the IP header.
        assert_eq!(parsed.payload_offset(), 14 + 20);
    }

    #[test]
    fn arp_packet_is_non_ip_and_fully_literal() {
        let data = wire::arp_packet([0, 1, 2, 3, 4, 5], Ipv4Addr::new(10, 0, 0, 1));
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::NonIp);
        assert_eq!(extract_flow_key(&parsed), FlowKey::NON_IP);
        // The entire packet is the header region.
        assert_eq!(parsed.payload_offset(), data.len());
        assert_eq!(serialize_headers(&parsed), data);
    }

    #[test]
    fn unknown_link_type_is_opaque() {
        let data = wire::tcp_packet(&wire::TcpPacketSpec::default());
        let parsed = parse_headers(&data, 101 /* raw IP */);
        assert_eq!(parsed.class(), ParseClass::NonIp);
        assert_eq!(serialize_headers(&parsed), data);
    }

    #[test]
    fn truncated_tcp_header_degrades_to_other_ip() {
        let full = wire::tcp_packet(&wire::TcpPacketSpec::default());
        // Cut mid-TCP-header: 14 (eth) + 20 (ip) + 10 of 20 TCP bytes.
        let cut = &full[..44];
        let parsed = parse_headers(cut, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::OtherIp);
        let key = extract_flow_key(&parsed);
        assert_eq!(key.protocol, 6);
        assert_eq!((key.src_port, key.dst_port), (0, 0));
        assert_eq!(serialize_headers(&parsed), &cut[..34]);
    }

    #[test]
    fn truncated_ip_header_degrades_to_non_ip() {
        let full = wire::tcp_packet(&wire::TcpPacketSpec::default());
        let cut = &full[..20]; // 14 eth + 6 of 20 IP bytes
        let parsed = parse_headers(cut, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::NonIp);
        assert_eq!(serialize_headers(&parsed), cut);
    }

    #[test]
    fn ip_checksum_recomputation() {
        let data = wire::tcp_packet(&wire::TcpPacketSpec::default());
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        let ip = parsed.ip().unwrap();
        assert!(ip.checksum_is_valid());
        let mut bad = ip.clone();
        bad.checksum ^= 0x5a5a;
        assert!(!bad.checksum_is_valid());
    }

    #[test]
    fn internet_checksum_reference_vector() {
        // Worked example from RFC 1071 §3: bytes 00 01 f2 03 f4 f5 f6 f7
        // sum to ddf2 before inversion.
        let data = [0x00, 0x01, 0xf2, 0x03, 0xf4, 0xf5, 0xf6, 0xf7];
        assert_eq!(internet_checksum(&data), !0xddf2);
    }

    /// Re-serialization must reproduce the header region for arbitrary
    /// bytes, not just well-formed packets.
    #[test]
    fn parse_serialize_roundtrip_on_random_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x70ca_97ab);
        for i in 0..10_000 {
            let len = rng.random_range(0..200usize);
            let mut data = vec![0u8; len];
            rng.fill(&mut data[..]);
            // Bias a fraction toward plausible structure so the IPv4/TCP
            // paths are exercised, not just the NonIp fallback.
            if len >= 34 && i % 3 == 0 {
                data[12] = 0x08;
                data[13] = 0x00;
                data[14] = 0x45;
                if i % 6 == 0 {
                    data[23] = IPPROTO_TCP;
                } else {
                    data[23] = IPPROTO_UDP;
                }
            }
            let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
            let reserialized = serialize_headers(&parsed);
            let off = parsed.payload_offset();
            assert!(off <= data.len(), "payload offset within packet (case {i})");
            assert_eq!(reserialized, &data[..off], "roundtrip mismatch (case {i})");
        }
    }

    #[test]
    fn reserved_key_collision_mixes_classes() {
        // An IPv4 packet with src=dst=0.0.0.0 and protocol 0 maps to the
        // same key as NonIp packets; both must coexist in one flow.
        let data = wire::other_ip_packet(
            Ipv4Addr::new(0, 0, 0, 0),
            Ipv4Addr::new(0, 0, 0, 0),
            0,
            64,
            0,
            &[],
        );
        let parsed = parse_headers(&data, LINKTYPE_ETHERNET);
        assert_eq!(parsed.class(), ParseClass::OtherIp);
        assert_eq!(extract_flow_key(&parsed), FlowKey::NON_IP);
    }
}
