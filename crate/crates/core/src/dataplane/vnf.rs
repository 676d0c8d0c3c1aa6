// SPDX-License-Identifier: Apache-2.0

//! Virtual network functions and what they may do to a packet.

use std::fmt;
use std::net::Ipv6Addr;
use std::sync::Arc;

use crate::chain::{Sid, SidKind};
use crate::prefix::Ipv6Prefix;
use crate::wire::{self, Packet, UdpDatagram, PROTO_IPV6, PROTO_UDP};

use super::cost::VnfKind;

/// Result of a VNF processing one packet.
#[derive(Debug, Clone, PartialEq)]
pub enum VnfAction {
    Forward(Packet),
    Modified(Packet),
    Drop,
    /// Only SR-aware VNFs may return this.
    EditChain(Packet, SegmentListEdit),
}

/// A change to the segments still to be visited.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentListEdit {
    /// Insert right after the current VNF, before the active segment.
    InsertAfterCurrent(Vec<Ipv6Addr>),
    /// Insert before remaining segment `position` (0 = active segment).
    InsertAt(usize, Vec<Ipv6Addr>),
    /// Replace the whole remaining list.
    Replace(Vec<Ipv6Addr>),
}

/// How far a VNF may rewrite the segment list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum VnfPermission {
    #[default]
    InsertNextOnly,
    InsertAnywhere,
    FullRewrite,
}

impl VnfPermission {
    pub fn allows(self, edit: &SegmentListEdit) -> bool {
        match edit {
            SegmentListEdit::InsertAfterCurrent(_) => true,
            SegmentListEdit::InsertAt(..) => self >= VnfPermission::InsertAnywhere,
            SegmentListEdit::Replace(_) => self == VnfPermission::FullRewrite,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VnfPermission::InsertNextOnly => "next",
            VnfPermission::InsertAnywhere => "anywhere",
            VnfPermission::FullRewrite => "rewrite",
        }
    }
}

impl std::str::FromStr for VnfPermission {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "next" | "insert-next" => Ok(VnfPermission::InsertNextOnly),
            "anywhere" | "insert-anywhere" => Ok(VnfPermission::InsertAnywhere),
            "rewrite" | "full" | "full-rewrite" => Ok(VnfPermission::FullRewrite),
            _ => Err(format!("unknown permission {s:?}")),
        }
    }
}

/// Packet processing logic of a VNF.
pub trait VnfBehavior: fmt::Debug + Send + Sync {
    fn process(&self, packet: Packet) -> VnfAction;
}

/// Sends every packet back unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct PassThroughRouter;

impl VnfBehavior for PassThroughRouter {
    fn process(&self, packet: Packet) -> VnfAction {
        VnfAction::Forward(packet)
    }
}

/// Drops packets whose destination falls in `prefix`. For an encapsulated
/// packet the inner destination is matched.
#[derive(Debug, Clone, Copy)]
pub struct PrefixFilter {
    pub prefix: Ipv6Prefix,
}

impl VnfBehavior for PrefixFilter {
    fn process(&self, packet: Packet) -> VnfAction {
        let dst = if packet.payload_protocol() == PROTO_IPV6 {
            wire::parse_packet(&packet.payload).map_or(packet.header.dst, |inner| inner.header.dst)
        } else {
            packet.header.dst
        };
        if self.prefix.contains(dst) {
            VnfAction::Drop
        } else {
            VnfAction::Forward(packet)
        }
    }
}

/// Overwrites the first application byte with `value`: the first UDP data
/// byte when there is one, otherwise the first payload byte. Encapsulated
/// packets are stamped on the inner packet.
#[derive(Debug, Clone, Copy)]
pub struct PayloadStamper {
    pub value: u8,
}

impl PayloadStamper {
    fn stamp(&self, mut packet: Packet) -> Packet {
        match packet.payload_protocol() {
            PROTO_IPV6 => {
                if let Ok(mut inner) = wire::parse_packet(&packet.payload) {
                    inner = self.stamp(inner);
                    if let Ok(bytes) = wire::serialize_packet(&inner) {
                        packet.payload = bytes;
                    }
                }
            }
            PROTO_UDP => match UdpDatagram::parse(&packet.payload) {
                Ok(mut udp) if !udp.data.is_empty() => {
                    udp.data[0] = self.value;
                    packet.payload = udp.to_bytes();
                }
                _ => stamp_first(&mut packet.payload, self.value),
            },
            _ => stamp_first(&mut packet.payload, self.value),
        }
        packet.refresh_length();
        packet
    }
}

fn stamp_first(bytes: &mut [u8], value: u8) {
    if let Some(b) = bytes.first_mut() {
        *b = value;
    }
}

impl VnfBehavior for PayloadStamper {
    fn process(&self, packet: Packet) -> VnfAction {
        VnfAction::Modified(self.stamp(packet))
    }
}

/// Requests the same segment-list edit for every packet.
#[derive(Debug, Clone)]
pub struct ChainEditor {
    pub edit: SegmentListEdit,
}

impl VnfBehavior for ChainEditor {
    fn process(&self, packet: Packet) -> VnfAction {
        VnfAction::EditChain(packet, self.edit.clone())
    }
}

/// A VNF instance bound to its SID.
#[derive(Debug, Clone)]
pub struct Vnf {
    pub sid: Sid,
    pub permission: VnfPermission,
    pub behavior: Arc<dyn VnfBehavior>,
}

impl Vnf {
    pub fn new(sid: Sid, permission: VnfPermission, behavior: impl VnfBehavior + 'static) -> Self {
        Self {
            sid,
            permission,
            behavior: Arc::new(behavior),
        }
    }

    /// `None` for egress endpoints, which are not VNFs.
    pub fn kind(&self) -> Option<VnfKind> {
        match self.sid.kind {
            SidKind::SrAware => Some(VnfKind::SrAware),
            SidKind::SrUnaware => Some(VnfKind::SrUnaware),
            SidKind::EgressEndpoint => None,
        }
    }
}
