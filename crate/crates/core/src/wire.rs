// SPDX-License-Identifier: Apache-2.0

//! IPv6 fixed header, the Segment Routing Header (routing type 4) and a
//! minimal UDP carrier, with bit-exact parsing and serialization.
//!
//! All multi-byte fields are big-endian. The SRH segment list is kept in
//! wire order: `segment_list[0]` is the final segment and
//! `segment_list[segments_left]` is the active one.

use std::fmt::Write as _;
use std::net::Ipv6Addr;

use thiserror::Error;

/// Length of the fixed IPv6 header.
pub const IPV6_HEADER_LEN: usize = 40;
/// Length of the SRH before the segment list.
pub const SRH_FIXED_LEN: usize = 8;
/// Length of one segment list entry.
pub const SEGMENT_LEN: usize = 16;
/// Length of the UDP header.
pub const UDP_HEADER_LEN: usize = 8;

/// Next-header value of an IPv6 routing extension header.
pub const PROTO_ROUTING: u8 = 43;
/// Next-header value for IPv6-in-IPv6.
pub const PROTO_IPV6: u8 = 41;
/// Next-header value for UDP.
pub const PROTO_UDP: u8 = 17;
/// "No next header".
pub const PROTO_NONE: u8 = 59;

/// Routing type of the Segment Routing Header.
pub const SRH_ROUTING_TYPE: u8 = 4;
/// Largest segment list that fits the 8-bit `hdr_ext_len`.
pub const MAX_SEGMENTS: usize = 127;

/// Hop limit written into freshly built outer headers.
pub const DEFAULT_HOP_LIMIT: u8 = 64;

/// Errors raised while parsing or serializing packets.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("truncated packet: needed {needed} bytes, {available} available")]
    TruncatedPacket { needed: usize, available: usize },
    #[error("bad IP version {0}, expected 6")]
    BadVersion(u8),
    #[error("unsupported routing type {0}, expected 4")]
    BadRoutingType(u8),
    #[error("malformed SRH: {0}")]
    MalformedSrh(String),
    #[error("packet invariant violated: {0}")]
    InvariantViolation(String),
    #[error("invalid IPv6 address {0:?}")]
    BadAddress(String),
}

/// Parses a textual IPv6 address. Hex digits are accepted in either case.
pub fn parse_address(text: &str) -> Result<Ipv6Addr, WireError> {
    text.trim()
        .parse::<Ipv6Addr>()
        .map_err(|_| WireError::BadAddress(text.to_string()))
}

/// The 40-byte IPv6 fixed header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv6Header {
    pub traffic_class: u8,
    /// 20-bit flow label; upper bits must be zero.
    pub flow_label: u32,
    pub payload_length: u16,
    pub next_header: u8,
    pub hop_limit: u8,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
}

impl Ipv6Header {
    /// Header with zero traffic class and flow label. `payload_length` is
    /// left at zero; [`Packet::new`] fills it in.
    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, next_header: u8, hop_limit: u8) -> Self {
        Self {
            traffic_class: 0,
            flow_label: 0,
            payload_length: 0,
            next_header,
            hop_limit,
            src,
            dst,
        }
    }

    /// Always 6; kept for symmetry with the wire layout.
    pub const fn version(&self) -> u8 {
        6
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        let word = (6u32 << 28) | (u32::from(self.traffic_class) << 20) | (self.flow_label & 0xF_FFFF);
        out.extend_from_slice(&word.to_be_bytes());
        out.extend_from_slice(&self.payload_length.to_be_bytes());
        out.push(self.next_header);
        out.push(self.hop_limit);
        out.extend_from_slice(&self.src.octets());
        out.extend_from_slice(&self.dst.octets());
    }
}

/// The Segment Routing Header. TLVs are not supported, so the header is
/// always exactly `8 + 16 * segment_list.len()` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentRoutingHeader {
    pub next_header: u8,
    pub hdr_ext_len: u8,
    pub routing_type: u8,
    pub segments_left: u8,
    pub last_entry: u8,
    pub flags: u8,
    pub tag: u16,
    /// Wire order: index 0 is the final segment of the path.
    pub segment_list: Vec<Ipv6Addr>,
}

impl SegmentRoutingHeader {
    /// Builds an SRH from a path given in travel order (first segment
    /// first). The first segment is active.
    pub fn from_path(path: &[Ipv6Addr], next_header: u8) -> Result<Self, WireError> {
        if path.is_empty() {
            return Err(WireError::InvariantViolation("empty segment list".into()));
        }
        let segment_list: Vec<Ipv6Addr> = path.iter().rev().copied().collect();
        Self::from_wire_list(segment_list, path.len() - 1, next_header)
    }

    /// Builds an SRH from a list already in wire order, recomputing the
    /// length fields.
    pub fn from_wire_list(
        segment_list: Vec<Ipv6Addr>,
        segments_left: usize,
        next_header: u8,
    ) -> Result<Self, WireError> {
        let n = segment_list.len();
        if n == 0 || n > MAX_SEGMENTS {
            return Err(WireError::InvariantViolation(format!(
                "segment list length {n} outside 1..={MAX_SEGMENTS}"
            )));
        }
        if segments_left >= n {
            return Err(WireError::InvariantViolation(format!(
                "segments_left {segments_left} > last_entry {}",
                n - 1
            )));
        }
        Ok(Self {
            next_header,
            hdr_ext_len: (2 * n) as u8,
            routing_type: SRH_ROUTING_TYPE,
            segments_left: segments_left as u8,
            last_entry: (n - 1) as u8,
            flags: 0,
            tag: 0,
            segment_list,
        })
    }

    /// `segment_list[segments_left]`.
    pub fn active_segment(&self) -> Ipv6Addr {
        self.segment_list[usize::from(self.segments_left)]
    }

    /// Segments still to be visited, in travel order, starting with the
    /// active one.
    pub fn remaining(&self) -> Vec<Ipv6Addr> {
        self.segment_list[..=usize::from(self.segments_left)]
            .iter()
            .rev()
            .copied()
            .collect()
    }

    /// Serialized length in bytes.
    pub fn wire_len(&self) -> usize {
        SRH_FIXED_LEN + SEGMENT_LEN * self.segment_list.len()
    }

    /// Checks the SRH structural invariants.
    pub fn validate(&self) -> Result<(), WireError> {
        let n = self.segment_list.len();
        let fail = |msg: String| Err(WireError::InvariantViolation(msg));
        if self.routing_type != SRH_ROUTING_TYPE {
            return fail(format!("routing_type {}", self.routing_type));
        }
        if n == 0 || n > MAX_SEGMENTS {
            return fail(format!("segment list length {n}"));
        }
        if usize::from(self.last_entry) != n - 1 {
            return fail(format!("last_entry {} with {n} segments", self.last_entry));
        }
        if usize::from(self.hdr_ext_len) != 2 * n {
            return fail(format!("hdr_ext_len {} with {n} segments", self.hdr_ext_len));
        }
        if self.segments_left > self.last_entry {
            return fail(format!(
                "segments_left {} > last_entry {}",
                self.segments_left, self.last_entry
            ));
        }
        Ok(())
    }

    fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[
            self.next_header,
            self.hdr_ext_len,
            self.routing_type,
            self.segments_left,
            self.last_entry,
            self.flags,
        ]);
        out.extend_from_slice(&self.tag.to_be_bytes());
        for seg in &self.segment_list {
            out.extend_from_slice(&seg.octets());
        }
    }

    fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        need(bytes, SRH_FIXED_LEN)?;
        let routing_type = bytes[2];
        if routing_type != SRH_ROUTING_TYPE {
            return Err(WireError::BadRoutingType(routing_type));
        }
        let hdr_ext_len = bytes[1];
        let segments_left = bytes[3];
        let last_entry = bytes[4];
        if !hdr_ext_len.is_multiple_of(2) {
            return Err(WireError::MalformedSrh(format!("odd hdr_ext_len {hdr_ext_len}")));
        }
        let n = usize::from(hdr_ext_len / 2);
        if n != usize::from(last_entry) + 1 {
            return Err(WireError::MalformedSrh(format!(
                "hdr_ext_len {hdr_ext_len} inconsistent with last_entry {last_entry}"
            )));
        }
        if segments_left > last_entry {
            return Err(WireError::MalformedSrh(format!(
                "segments_left {segments_left} > last_entry {last_entry}"
            )));
        }
        need(bytes, SRH_FIXED_LEN + SEGMENT_LEN * n)?;
        let segment_list = bytes[SRH_FIXED_LEN..SRH_FIXED_LEN + SEGMENT_LEN * n]
            .chunks_exact(SEGMENT_LEN)
            .map(addr_at)
            .collect();
        Ok(Self {
            next_header: bytes[0],
            hdr_ext_len,
            routing_type,
            segments_left,
            last_entry,
            flags: bytes[5],
            tag: u16::from_be_bytes([bytes[6], bytes[7]]),
            segment_list,
        })
    }
}

/// An IPv6 packet with an optional SRH.
///
/// Equality compares the wire content only; `uid` is simulator metadata.
#[derive(Debug, Clone, Eq)]
pub struct Packet {
    pub header: Ipv6Header,
    pub srh: Option<SegmentRoutingHeader>,
    /// Bytes after the fixed header and SRH. For IPv6-in-IPv6 this is a
    /// serialized inner packet.
    pub payload: Vec<u8>,
    /// Simulator-assigned identifier, never serialized.
    pub uid: u64,
}

impl PartialEq for Packet {
    fn eq(&self, other: &Self) -> bool {
        self.header == other.header && self.srh == other.srh && self.payload == other.payload
    }
}

impl Packet {
    /// Assembles a packet and makes `payload_length` and the next-header
    /// chain consistent with its parts.
    pub fn new(mut header: Ipv6Header, srh: Option<SegmentRoutingHeader>, payload: Vec<u8>) -> Self {
        if srh.is_some() {
            header.next_header = PROTO_ROUTING;
        }
        let mut p = Self {
            header,
            srh,
            payload,
            uid: 0,
        };
        p.refresh_length();
        p
    }

    /// A UDP datagram inside a plain IPv6 packet.
    pub fn udp(src: Ipv6Addr, dst: Ipv6Addr, src_port: u16, dst_port: u16, data: &[u8]) -> Self {
        let datagram = UdpDatagram {
            src_port,
            dst_port,
            data: data.to_vec(),
        };
        Self::new(
            Ipv6Header::new(src, dst, PROTO_UDP, DEFAULT_HOP_LIMIT),
            None,
            datagram.to_bytes(),
        )
    }

    /// Recomputes `payload_length` from the SRH and payload.
    pub fn refresh_length(&mut self) {
        let len = self.srh.as_ref().map_or(0, SegmentRoutingHeader::wire_len) + self.payload.len();
        self.header.payload_length = u16::try_from(len).unwrap_or(u16::MAX);
    }

    /// Protocol of `payload`: the SRH next-header when present, else the
    /// fixed header's.
    pub fn payload_protocol(&self) -> u8 {
        self.srh
            .as_ref()
            .map_or(self.header.next_header, |s| s.next_header)
    }

    /// Serialized length in bytes.
    pub fn wire_len(&self) -> usize {
        IPV6_HEADER_LEN + self.srh.as_ref().map_or(0, SegmentRoutingHeader::wire_len) + self.payload.len()
    }

    /// Checks header, SRH and length invariants.
    pub fn validate(&self) -> Result<(), WireError> {
        if self.header.flow_label > 0xF_FFFF {
            return Err(WireError::InvariantViolation(format!(
                "flow label {:#x} exceeds 20 bits",
                self.header.flow_label
            )));
        }
        if let Some(srh) = &self.srh {
            srh.validate()?;
            if self.header.next_header != PROTO_ROUTING {
                return Err(WireError::InvariantViolation(format!(
                    "SRH present but next_header is {}",
                    self.header.next_header
                )));
            }
        }
        let body = self.wire_len() - IPV6_HEADER_LEN;
        if usize::from(self.header.payload_length) != body {
            return Err(WireError::InvariantViolation(format!(
                "payload_length {} but {body} bytes follow the header",
                self.header.payload_length
            )));
        }
        Ok(())
    }
}

/// Parses one IPv6 packet. Bytes beyond `40 + payload_length` are ignored.
pub fn parse_packet(bytes: &[u8]) -> Result<Packet, WireError> {
    need(bytes, IPV6_HEADER_LEN)?;
    let version = bytes[0] >> 4;
    if version != 6 {
        return Err(WireError::BadVersion(version));
    }
    let word = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let payload_length = u16::from_be_bytes([bytes[4], bytes[5]]);
    let header = Ipv6Header {
        traffic_class: ((word >> 20) & 0xFF) as u8,
        flow_label: word & 0xF_FFFF,
        payload_length,
        next_header: bytes[6],
        hop_limit: bytes[7],
        src: addr_at(&bytes[8..24]),
        dst: addr_at(&bytes[24..40]),
    };
    let total = IPV6_HEADER_LEN + usize::from(payload_length);
    need(bytes, total)?;
    let body = &bytes[IPV6_HEADER_LEN..total];
    let (srh, payload) = if header.next_header == PROTO_ROUTING {
        let srh = SegmentRoutingHeader::parse(body)?;
        let rest = body[srh.wire_len()..].to_vec();
        (Some(srh), rest)
    } else {
        (None, body.to_vec())
    };
    Ok(Packet {
        header,
        srh,
        payload,
        uid: 0,
    })
}

/// Serializes a packet in network byte order.
pub fn serialize_packet(p: &Packet) -> Result<Vec<u8>, WireError> {
    p.validate()?;
    let mut out = Vec::with_capacity(p.wire_len());
    p.header.write_to(&mut out);
    if let Some(srh) = &p.srh {
        srh.write_to(&mut out);
    }
    out.extend_from_slice(&p.payload);
    Ok(out)
}

/// The active segment of an SRH, `segment_list[segments_left]`.
pub fn active_segment(srh: &SegmentRoutingHeader) -> Result<Ipv6Addr, WireError> {
    srh.validate()?;
    Ok(srh.active_segment())
}

/// UDP header plus opaque data. The checksum is written as zero and never
/// verified.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpDatagram {
    pub src_port: u16,
    pub dst_port: u16,
    pub data: Vec<u8>,
}

impl UdpDatagram {
    pub fn to_bytes(&self) -> Vec<u8> {
        let len = u16::try_from(UDP_HEADER_LEN + self.data.len()).unwrap_or(u16::MAX);
        let mut out = Vec::with_capacity(UDP_HEADER_LEN + self.data.len());
        out.extend_from_slice(&self.src_port.to_be_bytes());
        out.extend_from_slice(&self.dst_port.to_be_bytes());
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&self.data);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, WireError> {
        need(bytes, UDP_HEADER_LEN)?;
        let len = usize::from(u16::from_be_bytes([bytes[4], bytes[5]]));
        if len < UDP_HEADER_LEN {
            return Err(WireError::InvariantViolation(format!("UDP length {len}")));
        }
        need(bytes, len)?;
        Ok(Self {
            src_port: u16::from_be_bytes([bytes[0], bytes[1]]),
            dst_port: u16::from_be_bytes([bytes[2], bytes[3]]),
            data: bytes[UDP_HEADER_LEN..len].to_vec(),
        })
    }
}

/// Hex dump with an 8-digit offset, 16 bytes per line and an ASCII gutter.
pub fn hexdump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (line, chunk) in bytes.chunks(16).enumerate() {
        let _ = write!(out, "{:08x} ", line * 16);
        for i in 0..16 {
            match chunk.get(i) {
                Some(b) => {
                    let _ = write!(out, " {b:02x}");
                }
                None => out.push_str("   "),
            }
        }
        out.push_str("  |");
        out.extend(chunk.iter().map(|&b| {
            if b.is_ascii_graphic() || b == b' ' {
                char::from(b)
            } else {
                '.'
            }
        }));
        out.push_str("|\n");
    }
    out
}

fn need(bytes: &[u8], needed: usize) -> Result<(), WireError> {
    if bytes.len() < needed {
        Err(WireError::TruncatedPacket {
            needed,
            available: bytes.len(),
        })
    } else {
        Ok(())
    }
}

fn addr_at(bytes: &[u8]) -> Ipv6Addr {
    let mut octets = [0u8; 16];
    octets.copy_from_slice(&bytes[..16]);
    Ipv6Addr::from(octets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Ipv6Addr {
        parse_address(s).unwrap()
    }

    #[test]
    fn minimal_header_without_payload() {
        let mut bytes = vec![0u8; 40];
        bytes[0] = 0x60;
        bytes[6] = PROTO_NONE;
        bytes[7] = 64;
        let p = parse_packet(&bytes).unwrap();
        assert!(p.srh.is_none());
        assert!(p.payload.is_empty());
        assert_eq!(serialize_packet(&p).unwrap(), bytes);
    }

    #[test]
    fn routing_type_zero_is_rejected() {
        let mut bytes = vec![0u8; 40 + 24];
        bytes[0] = 0x60;
        bytes[5] = 24;
        bytes[6] = PROTO_ROUTING;
        bytes[40] = PROTO_NONE;
        bytes[41] = 2;
        bytes[42] = 0;
        assert_eq!(parse_packet(&bytes), Err(WireError::BadRoutingType(0)));
    }

    #[test]
    fn wrong_version_and_truncation() {
        let mut bytes = vec![0u8; 40];
        bytes[0] = 0x40;
        assert_eq!(parse_packet(&bytes), Err(WireError::BadVersion(4)));
        assert!(matches!(
            parse_packet(&bytes[..20]),
            Err(WireError::TruncatedPacket { needed: 40, available: 20 })
        ));
        bytes[0] = 0x60;
        bytes[5] = 10;
        assert!(matches!(
            parse_packet(&bytes),
            Err(WireError::TruncatedPacket { needed: 50, .. })
        ));
    }

    #[test]
    fn odd_or_inconsistent_hdr_ext_len() {
        let p = Packet::new(
            Ipv6Header::new(a("AAAA::2"), a("BBBB::2"), PROTO_ROUTING, 64),
            Some(SegmentRoutingHeader::from_path(&[a("BBBB::2"), a("CCCC::2")], PROTO_NONE).unwrap()),
            Vec::new(),
        );
        let good = serialize_packet(&p).unwrap();
        let mut odd = good.clone();
        odd[41] = 3;
        assert!(matches!(parse_packet(&odd), Err(WireError::MalformedSrh(_))));
        let mut skew = good;
        skew[44] = 0;
        assert!(matches!(parse_packet(&skew), Err(WireError::MalformedSrh(_))));
    }

    #[test]
    fn active_segment_follows_segments_left() {
        let srh = SegmentRoutingHeader::from_path(&[a("BBBB::2"), a("CCCC::2")], PROTO_IPV6).unwrap();
        assert_eq!(srh.segment_list, vec![a("CCCC::2"), a("BBBB::2")]);
        assert_eq!(active_segment(&srh).unwrap(), a("BBBB::2"));
        let mut last = srh.clone();
        last.segments_left = 0;
        assert_eq!(active_segment(&last).unwrap(), a("CCCC::2"));
        let single = SegmentRoutingHeader::from_path(&[a("CCCC::2")], PROTO_IPV6).unwrap();
        assert_eq!(active_segment(&single).unwrap(), a("CCCC::2"));
    }

    #[test]
    fn serialize_length_arithmetic() {
        let mut p = Packet::new(
            Ipv6Header::new(a("EEEE::2"), a("DDDD::2"), PROTO_UDP, 64),
            None,
            vec![7; 8],
        );
        let bytes = serialize_packet(&p).unwrap();
        assert_eq!(bytes.len(), 48);
        assert_eq!(u16::from_be_bytes([bytes[4], bytes[5]]), 8);
        p.header.payload_length = 9;
        assert!(matches!(serialize_packet(&p), Err(WireError::InvariantViolation(_))));
    }

    #[test]
    fn segments_left_beyond_last_entry_is_invariant_violation() {
        let mut srh = SegmentRoutingHeader::from_path(&[a("BBBB::2"), a("CCCC::2")], PROTO_NONE).unwrap();
        srh.segments_left = 2;
        let p = Packet::new(Ipv6Header::new(a("::1"), a("::2"), PROTO_ROUTING, 1), Some(srh), vec![]);
        assert!(matches!(serialize_packet(&p), Err(WireError::InvariantViolation(_))));
    }

    #[test]
    fn uppercase_addresses_parse() {
        assert_eq!(a("AAAA::2"), a("aaaa::2"));
        assert_eq!(a("AAAA::2").to_string(), "aaaa::2");
        assert!(parse_address("junk").is_err());
    }

    #[test]
    fn udp_carrier_round_trip() {
        let d = UdpDatagram {
            src_port: 5001,
            dst_port: 5201,
            data: b"hello".to_vec(),
        };
        let bytes = d.to_bytes();
        assert_eq!(&bytes[4..8], &[0, 13, 0, 0]);
        assert_eq!(UdpDatagram::parse(&bytes).unwrap(), d);
    }

    #[test]
    fn hexdump_layout() {
        let dump = hexdump(b"0123456789abcdefXY");
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "00000000  30 31 32 33 34 35 36 37 38 39 61 62 63 64 65 66  |0123456789abcdef|"
        );
        assert!(lines[1].starts_with("00000010  58 59   "));
        assert!(lines[1].ends_with("|XY|"));
    }
}
