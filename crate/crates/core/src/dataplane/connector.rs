// SPDX-License-Identifier: Apache-2.0

//! The SR/VNF connector of an NFV node.
//!
//! A packet whose destination is a SID hosted here is consumed segment by
//! segment until it leaves the node. SR-aware VNFs see the encapsulated
//! packet; SR-unaware VNFs get the inner packet and the outer header is
//! rebuilt from the chain registry when the packet comes back.
//!
//! Operation counts follow the node cost model:
//! - every hand-off into a VNF is one `f`, whether it comes from the
//!   connector or from the previous VNF;
//! - a packet leaving an SR-aware run goes back to the connector (`f`);
//! - a packet leaving an SR-unaware VNF returns to the connector (`f`);
//! - decapsulation is `d`, re-encapsulation `e`; consecutive SR-unaware
//!   VNFs on the same node share one `d` and one `e`;
//! - the final forward to the next hop is one `f`.

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use crate::chain::{next_after, ChainRegistry, Interface, NodeId, SidKind};
use crate::prefix::PrefixTable;
use crate::trace::EventKind;
use crate::wire::{self, Ipv6Header, Packet, SegmentRoutingHeader, DEFAULT_HOP_LIMIT, PROTO_IPV6};

use super::cost::{OpCounts, VnfKind};
use super::vnf::{Vnf, VnfAction};
use super::{advance_segment, apply_edit, decapsulate, DataplaneError};

/// Read-only view of the node a packet is being processed on.
#[derive(Debug, Clone, Copy)]
pub struct NodeContext<'a> {
    pub node_id: &'a str,
    pub registry: &'a ChainRegistry,
    pub vnfs: &'a BTreeMap<Ipv6Addr, Vnf>,
    pub routes: &'a PrefixTable<NodeId>,
}

impl NodeContext<'_> {
    fn vnf(&self, sid: Ipv6Addr) -> Option<&Vnf> {
        self.vnfs.get(&sid).filter(|v| v.kind().is_some())
    }

    pub fn hosts_vnf(&self, sid: Ipv6Addr) -> bool {
        self.vnf(sid).is_some()
    }

    pub fn hosts_egress(&self, sid: Ipv6Addr) -> bool {
        self.registry
            .sid(sid)
            .is_some_and(|s| s.kind == SidKind::EgressEndpoint && s.host_node == self.node_id)
    }

    pub fn next_hop(&self, dst: Ipv6Addr) -> Result<NodeId, DataplaneError> {
        self.routes.lookup(dst).cloned().ok_or(DataplaneError::NoRoute(dst))
    }

    /// Interface a VNF emits the packet on. Physically this is fixed by
    /// which side of the VNF the packet enters; here it is read off the
    /// chain whose path the incoming SRH carries.
    fn exit_interface(&self, vnf: &Vnf, srh: &SegmentRoutingHeader) -> Interface {
        let sid = vnf.sid.address;
        let mapped: Vec<(Interface, Vec<Ipv6Addr>)> = [Interface::Single, Interface::West, Interface::East]
            .into_iter()
            .filter_map(|i| self.registry.chain_for(sid, i).map(|c| (i, c.addresses())))
            .collect();
        match mapped.as_slice() {
            [(only, _)] => *only,
            many => many
                .iter()
                .find(|(_, path)| path.iter().rev().eq(srh.segment_list.iter()))
                .map_or(vnf.sid.interface, |(i, _)| *i),
        }
    }
}

/// Where the connector sends the packet next.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Forward { packet: Packet, next_hop: NodeId },
    /// The new active segment is a non-VNF SID of this node (its egress
    /// endpoint); the node handles it again.
    Local(Packet),
    Dropped { by: Ipv6Addr },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorOutput {
    pub verdict: Verdict,
    /// Operations spent on this packet at this node.
    pub counts: OpCounts,
    pub events: Vec<(EventKind, Option<String>)>,
}

struct Run {
    counts: OpCounts,
    events: Vec<(EventKind, Option<String>)>,
}

impl Run {
    fn event(&mut self, kind: EventKind, detail: impl Into<String>) {
        self.events.push((kind, Some(detail.into())));
    }

    fn finish(self, verdict: Verdict) -> ConnectorOutput {
        ConnectorOutput {
            verdict,
            counts: self.counts,
            events: self.events,
        }
    }
}

/// Runs `packet`, addressed to a SID hosted on this node, through the
/// local VNFs until it leaves the node or is dropped.
pub fn connector_process(ctx: &NodeContext<'_>, packet: Packet) -> Result<ConnectorOutput, DataplaneError> {
    let mut run = Run {
        counts: OpCounts::ZERO,
        events: Vec::new(),
    };
    let mut pkt = packet;
    loop {
        let sid = pkt.header.dst;
        let vnf = ctx.vnf(sid).ok_or(DataplaneError::UnknownSid(sid))?;
        pkt = advance_segment(pkt)?;
        let srh = pkt.srh.as_ref().ok_or(DataplaneError::NoSrh)?;
        run.event(
            EventKind::SegmentAdvanced,
            format!("sid={sid} segments_left={} dst={}", srh.segments_left, pkt.header.dst),
        );

        match vnf.kind() {
            Some(VnfKind::SrAware) => {
                run.counts.f += 1;
                run.event(EventKind::VnfDelivered, sid.to_string());
                pkt = match vnf.behavior.process(pkt) {
                    VnfAction::Drop => return Ok(run.finish(Verdict::Dropped { by: sid })),
                    VnfAction::Forward(p) | VnfAction::Modified(p) => p,
                    VnfAction::EditChain(p, edit) => apply_edit(p, &edit, vnf.permission, ctx.registry)?,
                };
                if pkt.srh.is_none() {
                    return Err(DataplaneError::InvalidVnfOutput {
                        sid,
                        reason: "SRH removed by an SR-aware VNF".into(),
                    });
                }
                pkt.validate().map_err(|e| DataplaneError::InvalidVnfOutput {
                    sid,
                    reason: e.to_string(),
                })?;
                run.event(EventKind::VnfReturned, sid.to_string());
                if ctx.hosts_vnf(pkt.header.dst) {
                    continue;
                }
                // back to the connector
                run.counts.f += 1;
            }
            Some(VnfKind::SrUnaware) => {
                let mut interface = ctx.exit_interface(vnf, srh);
                let mut current = vnf;
                run.counts.d += 1;
                let mut inner = decapsulate(&pkt)?;
                run.event(EventKind::Decapsulated, format!("inner dst={}", inner.header.dst));
                loop {
                    let at = current.sid.address;
                    run.counts.f += 1;
                    run.event(EventKind::VnfDelivered, format!("{at} via {interface}"));
                    let returned = match current.behavior.process(inner) {
                        VnfAction::Drop => return Ok(run.finish(Verdict::Dropped { by: at })),
                        VnfAction::Forward(p) | VnfAction::Modified(p) => p,
                        VnfAction::EditChain(..) => return Err(DataplaneError::UnawareEditChain(at)),
                    };
                    run.counts.f += 1;
                    run.event(EventKind::VnfReturned, format!("{at} via {interface}"));

                    let chain = ctx
                        .registry
                        .chain_for(at, interface)
                        .ok_or(DataplaneError::UnivocalMappingMissing {
                            sid: at,
                            interface: Some(interface),
                        })?;
                    let next = next_after(chain, at)?;
                    if let Some(next_vnf) = ctx.vnf(next).filter(|v| v.kind() == Some(VnfKind::SrUnaware)) {
                        interface = ctx
                            .registry
                            .hop_interfaces(chain)?
                            .into_iter()
                            .find_map(|(s, i)| (s == next).then_some(i))
                            .unwrap_or(next_vnf.sid.interface);
                        current = next_vnf;
                        inner = returned;
                        continue;
                    }
                    run.counts.e += 1;
                    pkt = reencap_unaware(ctx, returned, (at, interface))?;
                    run.event(
                        EventKind::ReEncapsulated,
                        format!("chain={} dst={}", chain.chain_id, pkt.header.dst),
                    );
                    break;
                }
                if ctx.hosts_vnf(pkt.header.dst) {
                    continue;
                }
            }
            None => return Err(DataplaneError::UnknownSid(sid)),
        }

        if ctx.hosts_egress(pkt.header.dst) {
            return Ok(run.finish(Verdict::Local(pkt)));
        }
        let next_hop = ctx.next_hop(pkt.header.dst)?;
        run.counts.f += 1;
        return Ok(run.finish(Verdict::Forward { packet: pkt, next_hop }));
    }
}

/// Rebuilds the outer header and SRH for a packet returning from an
/// SR-unaware VNF, using the single chain mapped to the interface it came
/// out of. No per-packet state is consulted, so VNFs may rewrite the
/// packet freely.
pub fn reencap_unaware(
    ctx: &NodeContext<'_>,
    returned: Packet,
    from: (Ipv6Addr, Interface),
) -> Result<Packet, DataplaneError> {
    let (sid, interface) = from;
    let missing = || DataplaneError::UnivocalMappingMissing {
        sid,
        interface: Some(interface),
    };
    let chain = ctx.registry.chain_for(sid, interface).ok_or_else(missing)?;
    let path = chain.addresses();
    let next_idx = chain.position(sid).ok_or_else(missing)? + 1;
    let &next = path.get(next_idx).ok_or_else(missing)?;
    let srh = SegmentRoutingHeader::from_wire_list(
        path.iter().rev().copied().collect(),
        path.len() - 1 - next_idx,
        PROTO_IPV6,
    )?;
    let header = Ipv6Header::new(chain.ingress_source, next, wire::PROTO_ROUTING, DEFAULT_HOP_LIMIT);
    let mut outer = Packet::new(header, Some(srh), wire::serialize_packet(&returned)?);
    outer.uid = returned.uid;
    Ok(outer)
}

/// Removes the SR encapsulation at the last segment.
pub fn egress_process(ctx: &NodeContext<'_>, p: &Packet) -> Result<Packet, DataplaneError> {
    if !ctx.hosts_egress(p.header.dst) {
        return Err(DataplaneError::UnknownSid(p.header.dst));
    }
    let srh = p.srh.as_ref().ok_or(DataplaneError::NoSrh)?;
    if srh.segments_left > 0 {
        return Err(DataplaneError::NotLastSegment(srh.segments_left));
    }
    decapsulate(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Sid, VnfChain};
    use crate::dataplane::vnf::{PassThroughRouter, PayloadStamper, PrefixFilter, VnfPermission};
    use crate::dataplane::{encapsulate, predicted_counts};
    use crate::wire::UdpDatagram;

    fn a(s: &str) -> Ipv6Addr {
        s.parse().unwrap()
    }

    struct Fixture {
        registry: ChainRegistry,
        vnfs: BTreeMap<Ipv6Addr, Vnf>,
        routes: PrefixTable<NodeId>,
    }

    impl Fixture {
        fn new(kind: SidKind) -> Self {
            let mut registry = ChainRegistry::new();
            let sid = Sid::new(a("BBBB::2"), kind, "NFV");
            registry.add_sid(sid.clone()).unwrap();
            registry
                .add_sid(Sid::new(a("CCCC::2"), SidKind::EgressEndpoint, "ER2"))
                .unwrap();
            registry
                .register_chain(VnfChain::new("c1", [a("BBBB::2"), a("CCCC::2")], a("AAAA::2")))
                .unwrap();
            let mut vnfs = BTreeMap::new();
            vnfs.insert(sid.address, Vnf::new(sid, VnfPermission::default(), PassThroughRouter));
            let mut routes = PrefixTable::new();
            routes.push("CCCC::/64".parse().unwrap(), "ER2".to_string());
            Self { registry, vnfs, routes }
        }

        fn ctx(&self) -> NodeContext<'_> {
            NodeContext {
                node_id: "NFV",
                registry: &self.registry,
                vnfs: &self.vnfs,
                routes: &self.routes,
            }
        }

        fn packet(&self) -> Packet {
            let inner = Packet::udp(a("EEEE::2"), a("DDDD::2"), 1, 2, b"payload");
            encapsulate(&inner, self.registry.chain("c1").unwrap()).unwrap()
        }
    }

    #[test]
    fn unaware_single_vnf_costs_d_3f_e() {
        let fx = Fixture::new(SidKind::SrUnaware);
        let out = connector_process(&fx.ctx(), fx.packet()).unwrap();
        assert_eq!(out.counts, OpCounts::new(3, 1, 1));
        assert_eq!(out.counts, predicted_counts(1, VnfKind::SrUnaware));
        let Verdict::Forward { packet, next_hop } = out.verdict else {
            panic!("expected forward");
        };
        assert_eq!(next_hop, "ER2");
        assert_eq!(packet.header.dst, a("CCCC::2"));
        assert_eq!(packet.srh.as_ref().unwrap().segments_left, 0);
        let kinds: Vec<EventKind> = out.events.iter().map(|e| e.0).collect();
        assert_eq!(
            kinds,
            [
                EventKind::SegmentAdvanced,
                EventKind::Decapsulated,
                EventKind::VnfDelivered,
                EventKind::VnfReturned,
                EventKind::ReEncapsulated
            ]
        );
    }

    #[test]
    fn aware_single_vnf_costs_3f() {
        let fx = Fixture::new(SidKind::SrAware);
        let before = fx.packet();
        let out = connector_process(&fx.ctx(), before.clone()).unwrap();
        assert_eq!(out.counts, OpCounts::new(3, 0, 0));
        let Verdict::Forward { packet, .. } = out.verdict else {
            panic!("expected forward");
        };
        assert_eq!(packet, advance_segment(before).unwrap());
    }

    #[test]
    fn drop_skips_reencapsulation() {
        let mut fx = Fixture::new(SidKind::SrUnaware);
        let vnf = fx.vnfs.get_mut(&a("BBBB::2")).unwrap();
        vnf.behavior = std::sync::Arc::new(PrefixFilter {
            prefix: "DDDD::/64".parse().unwrap(),
        });
        let out = connector_process(&fx.ctx(), fx.packet()).unwrap();
        assert_eq!(out.verdict, Verdict::Dropped { by: a("BBBB::2") });
        assert_eq!(out.counts.e, 0);
    }

    #[test]
    fn reencap_targets_next_segment() {
        let fx = Fixture::new(SidKind::SrUnaware);
        let inner = Packet::udp(a("EEEE::2"), a("DDDD::2"), 1, 2, b"x");
        let outer = reencap_unaware(&fx.ctx(), inner.clone(), (a("BBBB::2"), Interface::Single)).unwrap();
        assert_eq!(outer.header.src, a("AAAA::2"));
        assert_eq!(outer.header.dst, a("CCCC::2"));
        assert_eq!(outer.srh.as_ref().unwrap().segments_left, 0);
        assert_eq!(decapsulate(&outer).unwrap(), inner);
        assert!(matches!(
            reencap_unaware(&fx.ctx(), inner, (a("BBBB::9"), Interface::Single)),
            Err(DataplaneError::UnivocalMappingMissing { .. })
        ));
    }

    #[test]
    fn reencap_carries_modified_payload() {
        let mut fx = Fixture::new(SidKind::SrUnaware);
        fx.vnfs.get_mut(&a("BBBB::2")).unwrap().behavior = std::sync::Arc::new(PayloadStamper { value: b'#' });
        let out = connector_process(&fx.ctx(), fx.packet()).unwrap();
        let Verdict::Forward { packet, .. } = out.verdict else {
            panic!("expected forward");
        };
        let inner = decapsulate(&packet).unwrap();
        assert_eq!(UdpDatagram::parse(&inner.payload).unwrap().data, b"#ayload");
    }

    #[test]
    fn egress_requires_last_segment() {
        let fx = Fixture::new(SidKind::SrAware);
        let mut p = fx.packet();
        p.header.dst = a("CCCC::2");
        let ctx = NodeContext { node_id: "ER2", ..fx.ctx() };
        assert_eq!(egress_process(&ctx, &p), Err(DataplaneError::NotLastSegment(1)));
        let at_egress = advance_segment(fx.packet()).unwrap();
        let inner = egress_process(&ctx, &at_egress).unwrap();
        assert_eq!(inner.header.dst, a("DDDD::2"));
    }
}
