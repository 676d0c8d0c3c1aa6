// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use crate::chain::{ChainRegistry, ClassifierRule, NodeId, SidKind};
use crate::dataplane::{NodeContext, UnitCosts, Vnf};
use crate::prefix::PrefixTable;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    IngressEdge,
    EgressEdge,
    NfvNode,
    PlainRouter,
}

impl NodeRole {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::IngressEdge => "ingress",
            NodeRole::EgressEdge => "egress",
            NodeRole::NfvNode => "nfv",
            NodeRole::PlainRouter => "router",
        }
    }

    pub fn is_edge(self) -> bool {
        matches!(self, NodeRole::IngressEdge | NodeRole::EgressEdge)
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ingress" => Ok(NodeRole::IngressEdge),
            "egress" => Ok(NodeRole::EgressEdge),
            "nfv" => Ok(NodeRole::NfvNode),
            "router" => Ok(NodeRole::PlainRouter),
            _ => Err(format!("unknown node role {s:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub node_id: NodeId,
    pub role: NodeRole,
    /// Addresses packets are delivered to locally.
    pub addresses: Vec<Ipv6Addr>,
    pub hosted_vnfs: BTreeMap<Ipv6Addr, Vnf>,
    /// Classifier rules; only edge nodes classify.
    pub rules: Vec<ClassifierRule>,
    pub routing_table: PrefixTable<NodeId>,
}

impl Node {
    pub fn new(node_id: impl Into<NodeId>, role: NodeRole) -> Self {
        Self {
            node_id: node_id.into(),
            role,
            addresses: Vec::new(),
            hosted_vnfs: BTreeMap::new(),
            rules: Vec::new(),
            routing_table: PrefixTable::new(),
        }
    }

    pub fn owns(&self, addr: Ipv6Addr) -> bool {
        self.addresses.contains(&addr)
    }
}

/// Nodes, undirected links and the chain registry shared by every node.
#[derive(Debug, Clone)]
pub struct Network {
    nodes: BTreeMap<NodeId, Node>,
    links: BTreeSet<(NodeId, NodeId)>,
    registry: ChainRegistry,
    pub unit_costs: UnitCosts,
}

fn link_key(a: &str, b: &str) -> (NodeId, NodeId) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl Network {
    /// Checks every cross reference and builds the network.
    pub fn new(
        nodes: impl IntoIterator<Item = Node>,
        links: impl IntoIterator<Item = (NodeId, NodeId)>,
        registry: ChainRegistry,
    ) -> Result<Self, SimError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if map.contains_key(&node.node_id) {
                return Err(SimError::DuplicateNode(node.node_id));
            }
            map.insert(node.node_id.clone(), node);
        }
        if map.is_empty() {
            return Err(SimError::EmptyNetwork);
        }
        let mut link_set = BTreeSet::new();
        for (a, b) in links {
            for end in [&a, &b] {
                if !map.contains_key(end) {
                    return Err(SimError::UnknownNodeRef(end.clone()));
                }
            }
            link_set.insert(link_key(&a, &b));
        }
        let net = Self {
            nodes: map,
            links: link_set,
            registry,
            unit_costs: UnitCosts::default(),
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<(), SimError> {
        for node in self.nodes.values() {
            for (_, hop) in node.routing_table.iter() {
                if !self.nodes.contains_key(hop) {
                    return Err(SimError::UnknownNodeRef(hop.clone()));
                }
                if !self.linked(&node.node_id, hop) {
                    return Err(SimError::UnreachableNextHop {
                        node: node.node_id.clone(),
                        next_hop: hop.clone(),
                    });
                }
            }
            for (addr, vnf) in &node.hosted_vnfs {
                if vnf.sid.host_node != node.node_id || vnf.sid.address != *addr {
                    return Err(SimError::HostMismatch {
                        node: node.node_id.clone(),
                        sid: *addr,
                    });
                }
                if vnf.sid.kind == SidKind::EgressEndpoint {
                    return Err(SimError::HostMismatch {
                        node: node.node_id.clone(),
                        sid: *addr,
                    });
                }
            }
            if !node.rules.is_empty() && !node.role.is_edge() {
                return Err(SimError::RulesOnCoreNode(node.node_id.clone()));
            }
            for rule in &node.rules {
                if self.registry.chain(&rule.chain_id).is_none() {
                    return Err(SimError::UnknownChain(rule.chain_id.clone()));
                }
            }
        }
        for sid in self.registry.sids() {
            let Some(host) = self.nodes.get(&sid.host_node) else {
                return Err(SimError::UnknownNodeRef(sid.host_node.clone()));
            };
            if sid.kind != SidKind::EgressEndpoint && !host.hosted_vnfs.contains_key(&sid.address) {
                return Err(SimError::HostMismatch {
                    node: host.node_id.clone(),
                    sid: sid.address,
                });
            }
        }
        Ok(())
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn links(&self) -> impl Iterator<Item = &(NodeId, NodeId)> {
        self.links.iter()
    }

    pub fn linked(&self, a: &str, b: &str) -> bool {
        self.links.contains(&link_key(a, b))
    }

    pub fn registry(&self) -> &ChainRegistry {
        &self.registry
    }

    /// The node owning `addr`, if any.
    pub fn owner_of(&self, addr: Ipv6Addr) -> Option<&Node> {
        self.nodes.values().find(|n| n.owns(addr))
    }

    pub fn context<'a>(&'a self, node: &'a Node) -> NodeContext<'a> {
        NodeContext {
            node_id: &node.node_id,
            registry: &self.registry,
            vnfs: &node.hosted_vnfs,
            routes: &node.routing_table,
        }
    }
}
