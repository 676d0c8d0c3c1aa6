// SPDX-License-Identifier: Apache-2.0

//! Deterministic packet-at-a-time walk over a small topology.
//!
//! Each node handles a packet in this order:
//! 1. SRH present and destination is a local VNF SID: SR/VNF connector.
//! 2. SRH present and destination is a local egress SID: decapsulate and
//!    handle the inner packet on the same node.
//! 3. Destination is one of the node's addresses: delivered.
//! 4. Edge node, plain packet not yet classified, a rule matches:
//!    encapsulate into the chain.
//! 5. Otherwise forward along the routing table.

use std::collections::BTreeMap;
use std::net::Ipv6Addr;

use thiserror::Error;

use crate::chain::{classify, NodeId};
use crate::dataplane::{self, connector_process, egress_process, CostLedger, DataplaneError, OpCounts, Verdict};
use crate::trace::{EventKind, Trace, TraceEvent, TraceLevel};
use crate::wire::{self, Packet};

mod network;

pub use network::{Network, Node, NodeRole};

/// Inter-node hops after which a packet is declared looping.
pub const MAX_HOPS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("network has no nodes")]
    EmptyNetwork,
    #[error("node {0:?} defined twice")]
    DuplicateNode(String),
    #[error("reference to unknown node {0:?}")]
    UnknownNodeRef(String),
    #[error("node {node:?} routes via {next_hop:?}, which is not a neighbor")]
    UnreachableNextHop { node: String, next_hop: String },
    #[error("SID {sid} and node {node:?} disagree about where it is hosted")]
    HostMismatch { node: String, sid: Ipv6Addr },
    #[error("node {0:?} is not an edge router but has classifier rules")]
    RulesOnCoreNode(String),
    #[error("rule references unknown chain {0:?}")]
    UnknownChain(String),
    #[error("no ingress node owns source address {0}")]
    NoIngress(Ipv6Addr),
    #[error("flow packet count must be at least 1")]
    EmptyFlow,
}

/// Why a packet did not reach its destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    DroppedByVnf(Ipv6Addr),
    HopLimitExceeded,
    RoutingLoop,
    NoRoute(Ipv6Addr),
    Dataplane(DataplaneError),
}

impl DropReason {
    /// Stable short label used in summaries and exit messages.
    pub fn label(&self) -> &'static str {
        match self {
            DropReason::DroppedByVnf(_) => "vnf-drop",
            DropReason::HopLimitExceeded => "hop-limit",
            DropReason::RoutingLoop => "routing-loop",
            DropReason::NoRoute(_) => "no-route",
            DropReason::Dataplane(_) => "dataplane-error",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DropReason::DroppedByVnf(sid) => write!(f, "dropped by VNF {sid}"),
            DropReason::HopLimitExceeded => f.write_str("hop limit exceeded"),
            DropReason::RoutingLoop => write!(f, "more than {MAX_HOPS} hops"),
            DropReason::NoRoute(dst) => write!(f, "no route to {dst}"),
            DropReason::Dataplane(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Delivered { packet: Packet, node: NodeId },
    Dropped { node: NodeId, reason: DropReason },
}

impl Outcome {
    pub fn is_delivered(&self) -> bool {
        matches!(self, Outcome::Delivered { .. })
    }
}

/// Serialized packet as it crossed a link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireCapture {
    pub from: NodeId,
    pub to: NodeId,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InjectOptions {
    pub level: TraceLevel,
    pub capture_wire: bool,
}

#[derive(Debug, Clone)]
pub struct Injection {
    pub outcome: Outcome,
    pub trace: Trace,
    /// Operations each node spent on this packet.
    pub costs: BTreeMap<NodeId, OpCounts>,
    pub captures: Vec<WireCapture>,
}

struct Walk<'a> {
    uid: u64,
    opts: InjectOptions,
    trace: Trace,
    costs: BTreeMap<NodeId, OpCounts>,
    captures: Vec<WireCapture>,
    node: &'a str,
}

impl Walk<'_> {
    fn event(&mut self, kind: EventKind, detail: Option<String>) {
        let event = TraceEvent {
            packet_uid: self.uid,
            node: self.node.to_string(),
            event: kind,
            detail,
        };
        self.trace.push(self.opts.level, event);
    }

    fn charge(&mut self, counts: OpCounts) {
        if !counts.is_zero() {
            *self.costs.entry(self.node.to_string()).or_default() += counts;
        }
    }

    fn finish(mut self, outcome: Outcome) -> Injection {
        let (kind, detail) = match &outcome {
            Outcome::Delivered { packet, .. } => (EventKind::Delivered, format!("dst={}", packet.header.dst)),
            Outcome::Dropped { reason, .. } => (EventKind::Dropped, reason.to_string()),
        };
        self.event(kind, Some(detail));
        Injection {
            outcome,
            trace: self.trace,
            costs: self.costs,
            captures: self.captures,
        }
    }
}

/// Walks one packet from `ingress` until it is delivered or dropped.
pub fn inject(network: &Network, ingress: &str, packet: Packet, opts: InjectOptions) -> Result<Injection, SimError> {
    let start = network
        .node(ingress)
        .ok_or_else(|| SimError::UnknownNodeRef(ingress.to_string()))?;
    let mut walk = Walk {
        uid: packet.uid,
        opts,
        trace: Trace::default(),
        costs: BTreeMap::new(),
        captures: Vec::new(),
        node: &start.node_id,
    };
    let mut node = start;
    let mut pkt = packet;
    let mut classified = false;
    let mut hops = 0u32;

    loop {
        walk.node = &node.node_id;
        let ctx = network.context(node);
        let dst = pkt.header.dst;
        let drop = |walk: Walk<'_>, reason| {
            walk.finish(Outcome::Dropped {
                node: node.node_id.clone(),
                reason,
            })
        };

        let next_hop = if pkt.srh.is_some() && ctx.hosts_vnf(dst) {
            match connector_process(&ctx, pkt) {
                Ok(out) => {
                    for (kind, detail) in out.events {
                        walk.event(kind, detail);
                    }
                    walk.charge(out.counts);
                    match out.verdict {
                        Verdict::Forward { packet, next_hop } => {
                            pkt = packet;
                            next_hop
                        }
                        Verdict::Local(packet) => {
                            pkt = packet;
                            continue;
                        }
                        Verdict::Dropped { by } => return Ok(drop(walk, DropReason::DroppedByVnf(by))),
                    }
                }
                Err(e) => return Ok(drop(walk, DropReason::Dataplane(e))),
            }
        } else if pkt.srh.is_some() && ctx.hosts_egress(dst) {
            match egress_process(&ctx, &pkt) {
                Ok(inner) => {
                    walk.charge(OpCounts::new(0, 1, 0));
                    walk.event(EventKind::Decapsulated, Some(format!("inner dst={}", inner.header.dst)));
                    pkt = inner;
                    continue;
                }
                Err(e) => return Ok(drop(walk, DropReason::Dataplane(e))),
            }
        } else if node.owns(dst) {
            let node_id = node.node_id.clone();
            return Ok(walk.finish(Outcome::Delivered { packet: pkt, node: node_id }));
        } else {
            let chain = (!classified && pkt.srh.is_none() && node.role.is_edge())
                .then(|| classify(&node.rules, dst))
                .flatten()
                .and_then(|id| network.registry().chain(id));
            if let Some(chain) = chain {
                classified = true;
                walk.event(EventKind::Classified, Some(format!("chain={}", chain.chain_id)));
                match dataplane::encapsulate(&pkt, chain) {
                    Ok(outer) => {
                        walk.charge(OpCounts::new(0, 0, 1));
                        walk.event(
                            EventKind::Encapsulated,
                            Some(format!("src={} dst={}", outer.header.src, outer.header.dst)),
                        );
                        pkt = outer;
                        continue;
                    }
                    Err(e) => return Ok(drop(walk, DropReason::Dataplane(e))),
                }
            }
            match ctx.next_hop(dst) {
                Ok(hop) => {
                    walk.charge(OpCounts::new(1, 0, 0));
                    hop
                }
                Err(_) => return Ok(drop(walk, DropReason::NoRoute(dst))),
            }
        };

        // transmit
        if pkt.header.hop_limit <= 1 {
            return Ok(drop(walk, DropReason::HopLimitExceeded));
        }
        hops += 1;
        if hops > MAX_HOPS {
            return Ok(drop(walk, DropReason::RoutingLoop));
        }
        pkt.header.hop_limit -= 1;
        walk.event(EventKind::Forwarded, Some(format!("to={next_hop} dst={}", pkt.header.dst)));
        if opts.capture_wire {
            let bytes = wire::serialize_packet(&pkt).unwrap_or_default();
            walk.captures.push(WireCapture {
                from: node.node_id.clone(),
                to: next_hop.clone(),
                bytes,
            });
        }
        node = match network.node(&next_hop) {
            Some(n) => n,
            None => return Ok(drop(walk, DropReason::NoRoute(dst))),
        };
    }
}

/// A batch of identical-shape UDP packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    /// Injection node; defaults to the node owning `src`.
    pub ingress: Option<NodeId>,
    pub src: Ipv6Addr,
    pub dst: Ipv6Addr,
    pub src_port: u16,
    pub dst_port: u16,
    /// UDP data bytes per packet.
    pub payload_size: usize,
    pub count: u64,
    pub first_uid: u64,
}

impl Flow {
    pub fn new(src: Ipv6Addr, dst: Ipv6Addr, count: u64) -> Self {
        Self {
            ingress: None,
            src,
            dst,
            src_port: 5001,
            dst_port: 5201,
            payload_size: 1024,
            count,
            first_uid: 1,
        }
    }

    /// The `i`-th packet of the flow. Payload bytes depend on the uid so
    /// that packets are distinguishable.
    pub fn packet(&self, i: u64) -> Packet {
        let uid = self.first_uid + i;
        let data: Vec<u8> = (0..self.payload_size)
            .map(|j| (uid.wrapping_mul(31).wrapping_add(j as u64) & 0xFF) as u8)
            .collect();
        let mut p = Packet::udp(self.src, self.dst, self.src_port, self.dst_port, &data);
        p.uid = uid;
        p
    }

    pub fn ingress_node<'a>(&'a self, network: &'a Network) -> Result<&'a str, SimError> {
        match &self.ingress {
            Some(id) => Ok(id),
            None => network
                .owner_of(self.src)
                .map(|n| n.node_id.as_str())
                .ok_or(SimError::NoIngress(self.src)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlowSummary {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// Delivered packets that differ from what was injected.
    pub modified: u64,
    pub drop_reasons: BTreeMap<&'static str, u64>,
    pub ledgers: BTreeMap<NodeId, CostLedger>,
    pub trace: Trace,
}

impl FlowSummary {
    pub fn ledger(&self, node: &str) -> Option<&CostLedger> {
        self.ledgers.get(node)
    }
}

/// Injects every packet of `flow` and aggregates outcomes and costs.
pub fn run_flow(network: &Network, flow: &Flow, level: TraceLevel) -> Result<FlowSummary, SimError> {
    if flow.count == 0 {
        return Err(SimError::EmptyFlow);
    }
    let ingress = flow.ingress_node(network)?;
    let mut summary = FlowSummary {
        sent: flow.count,
        ..FlowSummary::default()
    };
    let opts = InjectOptions {
        level,
        capture_wire: false,
    };
    for i in 0..flow.count {
        let packet = flow.packet(i);
        let uid = packet.uid;
        let injected = packet.clone();
        let result = inject(network, ingress, packet, opts)?;
        match &result.outcome {
            Outcome::Delivered { packet, .. } => {
                summary.delivered += 1;
                if *packet != injected {
                    summary.modified += 1;
                }
            }
            Outcome::Dropped { reason, .. } => {
                summary.dropped += 1;
                *summary.drop_reasons.entry(reason.label()).or_default() += 1;
            }
        }
        for (node, counts) in result.costs {
            summary
                .ledgers
                .entry(node)
                .or_insert_with(|| CostLedger::new(network.unit_costs))
                .record(uid, counts);
        }
        summary.trace.extend(result.trace);
    }
    Ok(summary)
}
