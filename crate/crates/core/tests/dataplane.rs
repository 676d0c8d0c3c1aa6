// SPDX-License-Identifier: Apache-2.0

mod common;

use std::net::Ipv6Addr;

use common::a;
use proptest::prelude::*;
use segchain::chain::{ChainRegistry, Sid, SidKind, VnfChain};
use segchain::dataplane::*;
use segchain::wire::Packet;

fn pool(i: usize) -> Ipv6Addr {
    a(&format!("b::{:x}", i + 1))
}

fn registry() -> ChainRegistry {
    let mut r = ChainRegistry::new();
    for i in 0..8 {
        r.add_sid(Sid::new(pool(i), SidKind::SrAware, "NFV")).unwrap();
    }
    r.add_sid(Sid::new(a("cccc::2"), SidKind::EgressEndpoint, "ER2")).unwrap();
    r
}

fn inner() -> Packet {
    Packet::udp(a("eeee::2"), a("dddd::2"), 5001, 5201, b"payload")
}

/// Packet sitting at VNF `pool(0)` with `<pool(1), egress>` still to go.
fn at_first_vnf() -> Packet {
    let c = VnfChain::new("c", [pool(0), pool(1), a("cccc::2")], a("aaaa::2"));
    advance_segment(encapsulate(&inner(), &c).unwrap()).unwrap()
}

#[test]
fn insert_next_only_case() {
    let p = apply_edit(
        at_first_vnf(),
        &SegmentListEdit::InsertAfterCurrent(vec![pool(5)]),
        VnfPermission::InsertNextOnly,
        &registry(),
    )
    .unwrap();
    assert_eq!(p.srh.as_ref().unwrap().remaining(), vec![pool(5), pool(1), a("cccc::2")]);
    assert_eq!(p.header.dst, pool(5));
}

#[test]
fn insert_at_needs_wider_permission() {
    let edit = SegmentListEdit::InsertAt(1, vec![pool(5)]);
    assert!(matches!(
        apply_edit(at_first_vnf(), &edit, VnfPermission::InsertNextOnly, &registry()),
        Err(DataplaneError::EditPermissionDenied { .. })
    ));
    let p = apply_edit(at_first_vnf(), &edit, VnfPermission::InsertAnywhere, &registry()).unwrap();
    assert_eq!(p.srh.as_ref().unwrap().remaining(), vec![pool(1), pool(5), a("cccc::2")]);
}

#[test]
fn full_rewrite_to_egress_only() {
    let p = apply_edit(
        at_first_vnf(),
        &SegmentListEdit::Replace(vec![a("cccc::2")]),
        VnfPermission::FullRewrite,
        &registry(),
    )
    .unwrap();
    assert_eq!(p.srh.as_ref().unwrap().remaining(), vec![a("cccc::2")]);
    assert_eq!(p.header.dst, a("cccc::2"));
    assert_eq!(decapsulate(&p).unwrap(), inner());
}

#[test]
fn unknown_sid_in_edit_is_rejected() {
    assert!(matches!(
        apply_edit(
            at_first_vnf(),
            &SegmentListEdit::InsertAfterCurrent(vec![a("9::9")]),
            VnfPermission::FullRewrite,
            &registry(),
        ),
        Err(DataplaneError::UnknownSidInEdit(_))
    ));
}

#[test]
fn encapsulation_examples() {
    let c = VnfChain::new("c1", [a("bbbb::2"), a("cccc::2")], a("aaaa::2"));
    let outer = encapsulate(&inner(), &c).unwrap();
    assert_eq!(outer.header.src, a("aaaa::2"));
    assert_eq!(outer.header.dst, a("bbbb::2"));
    let srh = outer.srh.as_ref().unwrap();
    assert_eq!(srh.segment_list, vec![a("cccc::2"), a("bbbb::2")]);
    assert_eq!(srh.segments_left, 1);

    let advanced = advance_segment(outer.clone()).unwrap();
    assert_eq!(advanced.srh.as_ref().unwrap().segments_left, 0);
    assert_eq!(advanced.header.dst, a("cccc::2"));
    assert_eq!(advanced.payload, outer.payload);
    assert_eq!(advance_segment(advanced), Err(DataplaneError::AlreadyAtLastSegment));

    let single = VnfChain::new("e", [a("cccc::2")], a("aaaa::2"));
    let o = encapsulate(&inner(), &single).unwrap();
    assert_eq!(o.header.dst, a("cccc::2"));
    assert_eq!(o.srh.unwrap().segments_left, 0);
}

#[test]
fn decapsulation_removes_one_layer() {
    let c = VnfChain::new("c1", [a("bbbb::2"), a("cccc::2")], a("aaaa::2"));
    let once = encapsulate(&inner(), &c).unwrap();
    let twice = encapsulate(&once, &c).unwrap();
    assert_eq!(decapsulate(&twice).unwrap(), once);
    assert_eq!(decapsulate(&inner()), Err(DataplaneError::NotEncapsulated));
}

#[test]
fn predicted_costs() {
    let u = UnitCosts::default();
    assert_eq!(predicted_cost(1, VnfKind::SrAware, &u), 3.0 * u.f);
    assert_eq!(predicted_cost(1, VnfKind::SrUnaware, &u), u.d + 3.0 * u.f + u.e);
    let unit_f = UnitCosts { f: 1.0, ..u };
    assert_eq!(predicted_cost(3, VnfKind::SrAware, &unit_f), 5.0);
}

fn edit_strategy() -> impl Strategy<Value = SegmentListEdit> {
    let sids = prop::collection::vec((0usize..8).prop_map(pool), 0..4);
    prop_oneof![
        sids.clone().prop_map(SegmentListEdit::InsertAfterCurrent),
        (0usize..5, sids.clone()).prop_map(|(p, s)| SegmentListEdit::InsertAt(p, s)),
        sids.prop_map(SegmentListEdit::Replace),
    ]
}

fn permission_strategy() -> impl Strategy<Value = VnfPermission> {
    prop_oneof![
        Just(VnfPermission::InsertNextOnly),
        Just(VnfPermission::InsertAnywhere),
        Just(VnfPermission::FullRewrite),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// Anything a permission allows, every stronger permission allows too.
    #[test]
    fn permissions_are_monotone(edit in edit_strategy(), p in permission_strategy(), q in permission_strategy()) {
        if p <= q && p.allows(&edit) {
            prop_assert!(q.allows(&edit));
        }
    }

    /// Accepted edits keep the SRH well formed and only touch the
    /// segments not yet visited.
    #[test]
    fn accepted_edits_keep_srh_invariants(
        path in prop::collection::vec((0usize..8).prop_map(pool), 1..4),
        hops in 0usize..3,
        edit in edit_strategy(),
        perm in permission_strategy(),
    ) {
        let mut full = path.clone();
        full.push(a("cccc::2"));
        let chain = VnfChain::new("c", full, a("aaaa::2"));
        let mut p = encapsulate(&inner(), &chain).unwrap();
        for _ in 0..hops.min(path.len() - 1) {
            p = advance_segment(p).unwrap();
        }
        let before = p.srh.clone().unwrap();
        let traversed = before.segment_list[usize::from(before.segments_left) + 1..].to_vec();
        let remaining = before.remaining();
        match apply_edit(p.clone(), &edit, perm, &registry()) {
            Ok(out) => {
                prop_assert!(perm.allows(&edit));
                out.validate().unwrap();
                let srh = out.srh.as_ref().unwrap();
                srh.validate().unwrap();
                prop_assert!(srh.segments_left <= srh.last_entry);
                prop_assert_eq!(usize::from(srh.hdr_ext_len), 2 * srh.segment_list.len());
                prop_assert_eq!(&srh.segment_list[usize::from(srh.segments_left) + 1..], &traversed[..]);
                let expected: Vec<Ipv6Addr> = match &edit {
                    SegmentListEdit::InsertAfterCurrent(s) => s.iter().chain(&remaining).copied().collect(),
                    SegmentListEdit::InsertAt(i, s) => {
                        remaining[..*i].iter().chain(s).chain(&remaining[*i..]).copied().collect()
                    }
                    SegmentListEdit::Replace(s) => s.clone(),
                };
                prop_assert_eq!(srh.remaining(), expected.clone());
                prop_assert_eq!(out.header.dst, expected[0]);
                prop_assert_eq!(out.payload, p.payload);
            }
            Err(DataplaneError::EditPermissionDenied { .. }) => prop_assert!(!perm.allows(&edit)),
            Err(DataplaneError::PositionOutOfRange { .. }) => {
                prop_assert!(matches!(edit, SegmentListEdit::InsertAt(i, _) if i >= remaining.len()))
            }
            Err(DataplaneError::EmptyReplacement) => {
                prop_assert!(matches!(&edit, SegmentListEdit::Replace(s) if s.is_empty()))
            }
            Err(e) => prop_assert!(false, "unexpected {e:?}"),
        }
    }
}
