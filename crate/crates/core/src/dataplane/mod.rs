// SPDX-License-Identifier: Apache-2.0

//! Per-node SRv6 packet processing: encapsulation at the ingress edge,
//! segment advance, the SR/VNF connector, segment-list edits, egress
//! decapsulation and f/d/e cost accounting.

use std::net::Ipv6Addr;

use thiserror::Error;

use crate::chain::{ChainError, ChainRegistry, Interface, VnfChain};
use crate::wire::{self, Ipv6Header, Packet, SegmentRoutingHeader, WireError, DEFAULT_HOP_LIMIT, PROTO_IPV6};

pub mod connector;
pub mod cost;
pub mod vnf;

pub use connector::{connector_process, egress_process, reencap_unaware, ConnectorOutput, NodeContext, Verdict};
pub use cost::{predicted_cost, predicted_counts, CostLedger, OpCounts, UnitCosts, VnfKind};
pub use vnf::{
    ChainEditor, PassThroughRouter, PayloadStamper, PrefixFilter, SegmentListEdit, Vnf, VnfAction, VnfBehavior,
    VnfPermission,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataplaneError {
    #[error("chain {0:?} has no segments")]
    EmptyChain(String),
    #[error("packet does not carry an IPv6-in-IPv6 payload")]
    NotEncapsulated,
    #[error("packet has no SRH")]
    NoSrh,
    #[error("segments_left is already 0")]
    AlreadyAtLastSegment,
    #[error("{0} is not a SID hosted on this node")]
    UnknownSid(Ipv6Addr),
    #[error("permission {permission:?} does not allow {edit:?}")]
    EditPermissionDenied {
        permission: VnfPermission,
        edit: SegmentListEdit,
    },
    #[error("insert position {position} outside the {remaining} remaining segments")]
    PositionOutOfRange { position: usize, remaining: usize },
    #[error("edit references unknown SID {0}")]
    UnknownSidInEdit(Ipv6Addr),
    #[error("replacement segment list is empty")]
    EmptyReplacement,
    #[error("no chain is mapped to traffic leaving {sid} ({interface:?})")]
    UnivocalMappingMissing {
        sid: Ipv6Addr,
        interface: Option<Interface>,
    },
    #[error("segments_left is {0} at the egress endpoint")]
    NotLastSegment(u8),
    #[error("SR-unaware VNF {0} tried to edit the segment list")]
    UnawareEditChain(Ipv6Addr),
    #[error("VNF {sid} returned an unusable packet: {reason}")]
    InvalidVnfOutput { sid: Ipv6Addr, reason: String },
    #[error("no route to {0}")]
    NoRoute(Ipv6Addr),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Tunnel-mode encapsulation: `inner` becomes the payload of a new IPv6
/// packet from `chain.ingress_source` to the first segment, carrying the
/// whole chain in its SRH.
pub fn encapsulate(inner: &Packet, chain: &VnfChain) -> Result<Packet, DataplaneError> {
    let path = chain.addresses();
    let Some(&first) = path.first() else {
        return Err(DataplaneError::EmptyChain(chain.chain_id.clone()));
    };
    let srh = SegmentRoutingHeader::from_path(&path, PROTO_IPV6)?;
    let header = Ipv6Header::new(chain.ingress_source, first, wire::PROTO_ROUTING, DEFAULT_HOP_LIMIT);
    let mut outer = Packet::new(header, Some(srh), wire::serialize_packet(inner)?);
    outer.uid = inner.uid;
    Ok(outer)
}

/// Removes one layer of IPv6-in-IPv6 encapsulation.
pub fn decapsulate(outer: &Packet) -> Result<Packet, DataplaneError> {
    if outer.payload_protocol() != PROTO_IPV6 {
        return Err(DataplaneError::NotEncapsulated);
    }
    let mut inner = wire::parse_packet(&outer.payload)?;
    inner.uid = outer.uid;
    Ok(inner)
}

/// Decrements `segments_left` and points the destination at the new
/// active segment.
pub fn advance_segment(mut p: Packet) -> Result<Packet, DataplaneError> {
    let srh = p.srh.as_mut().ok_or(DataplaneError::NoSrh)?;
    if srh.segments_left == 0 {
        return Err(DataplaneError::AlreadyAtLastSegment);
    }
    srh.segments_left -= 1;
    p.header.dst = srh.active_segment();
    Ok(p)
}

/// Applies a VNF-requested segment-list edit after checking it against
/// the VNF's permission and the SID registry.
pub fn apply_edit(
    mut p: Packet,
    edit: &SegmentListEdit,
    permission: VnfPermission,
    registry: &ChainRegistry,
) -> Result<Packet, DataplaneError> {
    if !permission.allows(edit) {
        return Err(DataplaneError::EditPermissionDenied {
            permission,
            edit: edit.clone(),
        });
    }
    let srh = p.srh.as_ref().ok_or(DataplaneError::NoSrh)?;
    let remaining = srh.remaining();
    let (new_remaining, inserted): (Vec<Ipv6Addr>, &[Ipv6Addr]) = match edit {
        SegmentListEdit::InsertAfterCurrent(sids) => {
            (sids.iter().chain(&remaining).copied().collect(), sids)
        }
        SegmentListEdit::InsertAt(position, sids) => {
            if *position >= remaining.len() {
                return Err(DataplaneError::PositionOutOfRange {
                    position: *position,
                    remaining: remaining.len(),
                });
            }
            let mut list = remaining[..*position].to_vec();
            list.extend_from_slice(sids);
            list.extend_from_slice(&remaining[*position..]);
            (list, sids)
        }
        SegmentListEdit::Replace(sids) => {
            if sids.is_empty() {
                return Err(DataplaneError::EmptyReplacement);
            }
            (sids.clone(), sids)
        }
    };
    if let Some(&unknown) = inserted.iter().find(|&&s| registry.sid(s).is_none()) {
        return Err(DataplaneError::UnknownSidInEdit(unknown));
    }
    let traversed = &srh.segment_list[usize::from(srh.segments_left) + 1..];
    let wire_list: Vec<Ipv6Addr> = new_remaining.iter().rev().chain(traversed).copied().collect();
    let mut new_srh = SegmentRoutingHeader::from_wire_list(wire_list, new_remaining.len() - 1, srh.next_header)?;
    new_srh.flags = srh.flags;
    new_srh.tag = srh.tag;
    p.header.dst = new_remaining[0];
    p.srh = Some(new_srh);
    p.refresh_length();
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Sid, SidKind};

    fn a(s: &str) -> Ipv6Addr {
        s.parse().unwrap()
    }

    fn testbed_chain() -> VnfChain {
        VnfChain::new("c1", [a("BBBB::2"), a("CCCC::2")], a("AAAA::2"))
    }

    fn inner() -> Packet {
        Packet::udp(a("EEEE::2"), a("DDDD::2"), 5001, 5201, &[0xAB; 16])
    }

    #[test]
    fn encapsulate_testbed_packet() {
        let outer = encapsulate(&inner(), &testbed_chain()).unwrap();
        assert_eq!(outer.header.src, a("AAAA::2"));
        assert_eq!(outer.header.dst, a("BBBB::2"));
        assert_eq!(outer.header.next_header, wire::PROTO_ROUTING);
        assert_eq!(outer.header.hop_limit, 64);
        let srh = outer.srh.as_ref().unwrap();
        assert_eq!(srh.segment_list, vec![a("CCCC::2"), a("BBBB::2")]);
        assert_eq!(srh.segments_left, 1);
        assert_eq!(srh.last_entry, 1);
        assert_eq!(srh.next_header, PROTO_IPV6);
        assert_eq!(decapsulate(&outer).unwrap(), inner());
    }

    #[test]
    fn single_segment_chain() {
        let chain = VnfChain::new("c", [a("CCCC::2")], a("AAAA::2"));
        let outer = encapsulate(&inner(), &chain).unwrap();
        assert_eq!(outer.header.dst, a("CCCC::2"));
        assert_eq!(outer.srh.unwrap().segments_left, 0);
        let empty = VnfChain::new("e", [], a("AAAA::2"));
        assert_eq!(encapsulate(&inner(), &empty), Err(DataplaneError::EmptyChain("e".into())));
    }

    #[test]
    fn decapsulate_removes_one_layer_only() {
        assert_eq!(decapsulate(&inner()), Err(DataplaneError::NotEncapsulated));
        let once = encapsulate(&inner(), &testbed_chain()).unwrap();
        let twice = encapsulate(&once, &testbed_chain()).unwrap();
        assert_eq!(decapsulate(&twice).unwrap(), once);
    }

    #[test]
    fn advance_moves_to_next_segment() {
        let outer = encapsulate(&inner(), &testbed_chain()).unwrap();
        let advanced = advance_segment(outer.clone()).unwrap();
        assert_eq!(advanced.header.dst, a("CCCC::2"));
        assert_eq!(advanced.srh.as_ref().unwrap().segments_left, 0);
        assert_eq!(advanced.payload, outer.payload);
        assert_eq!(advance_segment(advanced), Err(DataplaneError::AlreadyAtLastSegment));
        assert_eq!(advance_segment(inner()), Err(DataplaneError::NoSrh));
    }

    fn edit_fixture() -> (ChainRegistry, Packet) {
        let mut reg = ChainRegistry::new();
        for (s, k) in [
            ("a::", SidKind::SrAware),
            ("b::", SidKind::SrAware),
            ("c::", SidKind::SrAware),
            ("f::", SidKind::EgressEndpoint),
        ] {
            reg.add_sid(Sid::new(a(s), k, "n")).unwrap();
        }
        let chain = VnfChain::new("c", [a("a::"), a("b::"), a("f::")], a("e::"));
        let at_a = advance_segment(encapsulate(&inner(), &chain).unwrap()).unwrap();
        (reg, at_a)
    }

    fn remaining(p: &Packet) -> Vec<Ipv6Addr> {
        p.srh.as_ref().unwrap().remaining()
    }

    #[test]
    fn insert_after_current() {
        let (reg, p) = edit_fixture();
        assert_eq!(remaining(&p), vec![a("b::"), a("f::")]);
        let edit = SegmentListEdit::InsertAfterCurrent(vec![a("c::")]);
        let out = apply_edit(p, &edit, VnfPermission::InsertNextOnly, &reg).unwrap();
        assert_eq!(remaining(&out), vec![a("c::"), a("b::"), a("f::")]);
        assert_eq!(out.header.dst, a("c::"));
        let srh = out.srh.as_ref().unwrap();
        assert_eq!(srh.segment_list, vec![a("f::"), a("b::"), a("c::"), a("a::")]);
        assert!(out.validate().is_ok());
    }

    #[test]
    fn insert_at_needs_permission_and_range() {
        let (reg, p) = edit_fixture();
        let edit = SegmentListEdit::InsertAt(1, vec![a("c::")]);
        assert!(matches!(
            apply_edit(p.clone(), &edit, VnfPermission::InsertNextOnly, &reg),
            Err(DataplaneError::EditPermissionDenied { .. })
        ));
        let out = apply_edit(p.clone(), &edit, VnfPermission::InsertAnywhere, &reg).unwrap();
        assert_eq!(remaining(&out), vec![a("b::"), a("c::"), a("f::")]);
        assert_eq!(out.header.dst, a("b::"));
        let far = SegmentListEdit::InsertAt(2, vec![a("c::")]);
        assert_eq!(
            apply_edit(p, &far, VnfPermission::InsertAnywhere, &reg),
            Err(DataplaneError::PositionOutOfRange { position: 2, remaining: 2 })
        );
    }

    #[test]
    fn replace_and_unknown_sid() {
        let (reg, p) = edit_fixture();
        let to_egress = SegmentListEdit::Replace(vec![a("f::")]);
        assert!(apply_edit(p.clone(), &to_egress, VnfPermission::InsertAnywhere, &reg).is_err());
        let out = apply_edit(p.clone(), &to_egress, VnfPermission::FullRewrite, &reg).unwrap();
        assert_eq!(remaining(&out), vec![a("f::")]);
        assert_eq!(out.srh.as_ref().unwrap().segments_left, 0);
        assert_eq!(out.header.dst, a("f::"));
        let bogus = SegmentListEdit::InsertAfterCurrent(vec![a("9::")]);
        assert_eq!(
            apply_edit(p.clone(), &bogus, VnfPermission::FullRewrite, &reg),
            Err(DataplaneError::UnknownSidInEdit(a("9::")))
        );
        assert_eq!(
            apply_edit(p, &SegmentListEdit::Replace(vec![]), VnfPermission::FullRewrite, &reg),
            Err(DataplaneError::EmptyReplacement)
        );
    }
}
