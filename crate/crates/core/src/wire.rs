//! Builders for well-formed packet bytes (Ethernet/IPv4/TCP/UDP/ARP),
//! used by the trace generator and by tests. All checksums are computed
//! so generated traffic looks like real captures.

use std::net::Ipv4Addr;

use crate::packet::{internet_checksum, IPPROTO_TCP, IPPROTO_UDP};

/// Deterministic locally-administered MAC derived from an IPv4 address.
pub fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn ethernet(dst: Ipv4Addr, src: Ipv4Addr, ethertype: u16, out: &mut Vec<u8>) {
    out.extend_from_slice(&mac_for(dst));
    out.extend_from_slice(&mac_for(src));
    out.extend_from_slice(&ethertype.to_be_bytes());
}

#[allow(clippy::too_many_arguments)]
fn ipv4(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    ttl: u8,
    id: u16,
    tos: u8,
    flags_frag: u16,
    payload_len: usize,
    options: &[u8],
    out: &mut Vec<u8>,
) {
    debug_assert!(options.len() % 4 == 0 && options.len() <= 40);
    let ihl = 5 + options.len() / 4;
    let total_length = (ihl * 4 + payload_len) as u16;
    let start = out.len();
    out.push(0x40 | ihl as u8);
    out.push(tos);
    out.extend_from_slice(&total_length.to_be_bytes());
    out.extend_from_slice(&id.to_be_bytes());
    out.extend_from_slice(&flags_frag.to_be_bytes());
    out.push(ttl);
    out.push(protocol);
    out.extend_from_slice(&[0, 0]); // checksum placeholder
    out.extend_from_slice(&src.octets());
    out.extend_from_slice(&dst.octets());
    out.extend_from_slice(options);
    let cksum = internet_checksum(&out[start..]);
    out[start + 10..start + 12].copy_from_slice(&cksum.to_be_bytes());
}

fn pseudo_header_sum_input(src: Ipv4Addr, dst: Ipv4Addr, protocol: u8, len: u16) -> Vec<u8> {
    let mut v = Vec::with_capacity(12);
    v.extend_from_slice(&src.octets());
    v.extend_from_slice(&dst.octets());
    v.push(0);
    v.push(protocol);
    v.extend_from_slice(&len.to_be_bytes());
    v
}

#[derive(Debug, Clone)]
pub struct TcpPacketSpec<'a> {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub ttl: u8,
    pub ip_id: u16,
    pub tos: u8,
    pub tcp_options: &'a [u8],
    pub payload: &'a [u8],
}

impl Default for TcpPacketSpec<'_> {
    fn default() -> Self {
        TcpPacketSpec {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 0, 0, 2),
            src_port: 40000,
            dst_port: 80,
            seq: 0,
            ack: 0,
            flags: crate::packet::TCP_FLAG_ACK,
            window: 65535,
            ttl: 64,
            ip_id: 0,
            tos: 0,
            tcp_options: &[],
            payload: &[],
        }
    }
}

/// Builds a complete Ethernet/IPv4/TCP packet with valid checksums.
pub fn tcp_packet(spec: &TcpPacketSpec<'_>) -> Vec<u8> {
    debug_assert!(spec.tcp_options.len() % 4 == 0 && spec.tcp_options.len() <= 40);
    let tcp_header_len = 20 + spec.tcp_options.len();
    let tcp_len = tcp_header_len + spec.payload.len();

    let mut tcp = Vec::with_capacity(tcp_len);
    tcp.extend_from_slice(&spec.src_port.to_be_bytes());
    tcp.extend_from_slice(&spec.dst_port.to_be_bytes());
    tcp.extend_from_slice(&spec.seq.to_be_bytes());
    tcp.extend_from_slice(&spec.ack.to_be_bytes());
    tcp.push(((tcp_header_len / 4) as u8) << 4);
    tcp.push(spec.flags);
    tcp.extend_from_slice(&spec.window.to_be_bytes());
    tcp.extend_from_slice(&[0, 0]); // checksum placeholder
    tcp.extend_from_slice(&0u16.to_be_bytes());
    tcp.extend_from_slice(spec.tcp_options);
    tcp.extend_from_slice(spec.payload);
    let mut sum_input = pseudo_header_sum_input(spec.src, spec.dst, IPPROTO_TCP, tcp_len as u16);
    sum_input.extend_from_slice(&tcp);
    let cksum = internet_checksum(&sum_input);
    tcp[16..18].copy_from_slice(&cksum.to_be_bytes());

    let mut out = Vec::with_capacity(14 + 20 + tcp_len);
    ethernet(spec.dst, spec.src, 0x0800, &mut out);
    ipv4(
        spec.src, spec.dst, IPPROTO_TCP, spec.ttl, spec.ip_id, spec.tos, 0x4000, tcp_len, &[],
        &mut out,
    );
    out.extend_from_slice(&tcp);
    out
}

#[derive(Debug, Clone)]
pub struct UdpPacketSpec<'a> {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub ttl: u8,
    pub ip_id: u16,
    pub payload: &'a [u8],
}

/// Builds a complete Ethernet/IPv4/UDP packet with valid checksums.
pub fn udp_packet(spec: &UdpPacketSpec<'_>) -> Vec<u8> {
    let udp_len = 8 + spec.payload.len();
    let mut udp = Vec::with_capacity(udp_len);
    udp.extend_from_slice(&spec.src_port.to_be_bytes());
    udp.extend_from_slice(&spec.dst_port.to_be_bytes());
    udp.extend_from_slice(&(udp_len as u16).to_be_bytes());
    udp.extend_from_slice(&[0, 0]);
    udp.extend_from_slice(spec.payload);
    let mut sum_input = pseudo_header_sum_input(spec.src, spec.dst, IPPROTO_UDP, udp_len as u16);
    sum_input.extend_from_slice(&udp);
    let mut cksum = internet_checksum(&sum_input);
    if cksum == 0 {
        cksum = 0xffff; // RFC 768: transmitted as all-ones when zero
    }
    udp[6..8].copy_from_slice(&cksum.to_be_bytes());

    let mut out = Vec::with_capacity(14 + 20 + udp_len);
    ethernet(spec.dst, spec.src, 0x0800, &mut out);
    ipv4(
        spec.src, spec.dst, IPPROTO_UDP, spec.ttl, spec.ip_id, 0, 0x4000, udp_len, &[], &mut out,
    );
    out.extend_from_slice(&udp);
    out
}

/// Builds an Ethernet/IPv4 packet for an arbitrary transport protocol;
/// `body` becomes the bytes after the IP header.
pub fn other_ip_packet(
    src: Ipv4Addr,
    dst: Ipv4Addr,
    protocol: u8,
    ttl: u8,
    ip_id: u16,
    body: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 20 + body.len());
    ethernet(dst, src, 0x0800, &mut out);
    ipv4(src, dst, protocol, ttl, ip_id, 0, 0x4000, body.len(), &[], &mut out);
    out.extend_from_slice(body);
    out
}

/// Builds a gratuitous ARP request frame (a non-IP packet).
pub fn arp_packet(sender_mac: [u8; 6], sender_ip: Ipv4Addr) -> Vec<u8> {
    let mut out = Vec::with_capacity(42);
    out.extend_from_slice(&[0xff; 6]); // broadcast
    out.extend_from_slice(&sender_mac);
    out.extend_from_slice(&0x0806u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes()); // htype ethernet
    out.extend_from_slice(&0x0800u16.to_be_bytes()); // ptype ipv4
    out.push(6);
    out.push(4);
    out.extend_from_slice(&1u16.to_be_bytes()); // request
    out.extend_from_slice(&sender_mac);
    out.extend_from_slice(&sender_ip.octets());
    out.extend_from_slice(&[0; 6]);
    out.extend_from_slice(&sender_ip.octets());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_packets_have_valid_ip_checksums() {
        let p = tcp_packet(&TcpPacketSpec::default());
        let ip_header = &p[14..34];
        assert_eq!(internet_checksum(ip_header), 0);
        let p = udp_packet(&UdpPacketSpec {
            src: Ipv4Addr::new(1, 2, 3, 4),
            dst: Ipv4Addr::new(5, 6, 7, 8),
            src_port: 1,
            dst_port: 2,
            ttl: 64,
            ip_id: 9,
            payload: b"xyz",
        });
        assert_eq!(internet_checksum(&p[14..34]), 0);
    }

    #[test]
    fn tcp_checksum_verifies_against_pseudo_header() {
        let spec = TcpPacketSpec { payload: b"data bytes", ..Default::default() };
        let p = tcp_packet(&spec);
        let tcp_len = p.len() - 34;
        let mut input = pseudo_header_sum_input(spec.src, spec.dst, IPPROTO_TCP, tcp_len as u16);
        input.extend_from_slice(&p[34..]);
        assert_eq!(internet_checksum(&input), 0);
    }
}
