// SPDX-License-Identifier: Apache-2.0

//! VNF chains, the SID registry, and the univocal-mapping bookkeeping that
//! lets the connector re-encapsulate traffic returning from SR-unaware
//! VNFs without keeping per-packet state.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use thiserror::Error;

use crate::prefix::Ipv6Prefix;

pub type NodeId = String;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("chain {0:?} has no segments")]
    EmptyChain(String),
    #[error("SID {sid} appears twice in chain {chain:?}")]
    DuplicateSidInChain { chain: String, sid: Ipv6Addr },
    #[error("unknown SID {0}")]
    UnknownSid(Ipv6Addr),
    #[error("SID {0} is already registered with different attributes")]
    DuplicateSid(Ipv6Addr),
    #[error("chain {chain:?} must end at an egress endpoint, {sid} is not one")]
    MissingEgress { chain: String, sid: Ipv6Addr },
    #[error("egress endpoint {sid} is not the last segment of chain {chain:?}")]
    MisplacedEgress { chain: String, sid: Ipv6Addr },
    #[error(
        "SR-unaware interface {sid} ({interface}) already carries chain {existing:?}; \
         chain {chain:?} would make it not univocally mappable"
    )]
    UnivocalMappingViolation {
        sid: Ipv6Addr,
        interface: Interface,
        existing: String,
        chain: String,
    },
    #[error("chain {chain:?} ({direction}) uses {sid} via interface {interface}")]
    InterfaceMismatch {
        chain: String,
        direction: Direction,
        sid: Ipv6Addr,
        interface: Interface,
    },
    #[error("SID {sid} is not part of chain {chain:?}")]
    SidNotInChain { chain: String, sid: Ipv6Addr },
    #[error("SID {sid} is the last segment of chain {chain:?}")]
    SidIsLast { chain: String, sid: Ipv6Addr },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SidKind {
    SrAware,
    SrUnaware,
    EgressEndpoint,
}

impl SidKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SidKind::SrAware => "aware",
            SidKind::SrUnaware => "unaware",
            SidKind::EgressEndpoint => "egress",
        }
    }
}

impl FromStr for SidKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aware" | "sr-aware" => Ok(SidKind::SrAware),
            "unaware" | "sr-unaware" => Ok(SidKind::SrUnaware),
            "egress" => Ok(SidKind::EgressEndpoint),
            _ => Err(format!("unknown SID kind {s:?}")),
        }
    }
}

/// The VNF interface traffic leaves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Interface {
    Single,
    West,
    East,
}

impl Interface {
    pub fn as_str(self) -> &'static str {
        match self {
            Interface::Single => "single",
            Interface::West => "W",
            Interface::East => "E",
        }
    }
}

impl fmt::Display for Interface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interface {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "s" => Ok(Interface::Single),
            "w" | "west" => Ok(Interface::West),
            "e" | "east" => Ok(Interface::East),
            _ => Err(format!("unknown interface {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Unidirectional,
    Eastbound,
    Westbound,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Unidirectional => "uni",
            Direction::Eastbound => "east",
            Direction::Westbound => "west",
        }
    }

    /// Interface every VNF hop of a chain in this direction exits from.
    fn required_interface(self) -> Option<Interface> {
        match self {
            Direction::Unidirectional => None,
            Direction::Eastbound => Some(Interface::East),
            Direction::Westbound => Some(Interface::West),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uni" | "unidirectional" => Ok(Direction::Unidirectional),
            "east" | "eastbound" => Ok(Direction::Eastbound),
            "west" | "westbound" => Ok(Direction::Westbound),
            _ => Err(format!("unknown chain direction {s:?}")),
        }
    }
}

/// A segment identifier: one VNF instance (or the egress router) named by
/// an IPv6 address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sid {
    pub address: Ipv6Addr,
    pub kind: SidKind,
    pub host_node: NodeId,
    /// Exit interface used when the SID appears in a unidirectional chain
    /// without an explicit interface.
    pub interface: Interface,
}

impl Sid {
    pub fn new(address: Ipv6Addr, kind: SidKind, host_node: impl Into<NodeId>) -> Self {
        Self {
            address,
            kind,
            host_node: host_node.into(),
            interface: Interface::Single,
        }
    }
}

/// One position of a chain. `interface` overrides the default derived from
/// the chain direction or the SID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainHop {
    pub sid: Ipv6Addr,
    pub interface: Option<Interface>,
}

impl From<Ipv6Addr> for ChainHop {
    fn from(sid: Ipv6Addr) -> Self {
        Self { sid, interface: None }
    }
}

/// A rendered service path `<v-1, ..., v-n>`; the final entry is the
/// egress edge router.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VnfChain {
    pub chain_id: String,
    pub segments: Vec<ChainHop>,
    pub ingress_source: Ipv6Addr,
    pub direction: Direction,
}

impl VnfChain {
    pub fn new(
        chain_id: impl Into<String>,
        segments: impl IntoIterator<Item = Ipv6Addr>,
        ingress_source: Ipv6Addr,
    ) -> Self {
        Self {
            chain_id: chain_id.into(),
            segments: segments.into_iter().map(ChainHop::from).collect(),
            ingress_source,
            direction: Direction::Unidirectional,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Segment addresses in travel order.
    pub fn addresses(&self) -> Vec<Ipv6Addr> {
        self.segments.iter().map(|h| h.sid).collect()
    }

    pub fn position(&self, sid: Ipv6Addr) -> Option<usize> {
        self.segments.iter().position(|h| h.sid == sid)
    }
}

/// Successor of `sid` in `chain`.
pub fn next_after(chain: &VnfChain, sid: Ipv6Addr) -> Result<Ipv6Addr, ChainError> {
    let idx = chain.position(sid).ok_or_else(|| ChainError::SidNotInChain {
        chain: chain.chain_id.clone(),
        sid,
    })?;
    chain
        .segments
        .get(idx + 1)
        .map(|h| h.sid)
        .ok_or_else(|| ChainError::SidIsLast {
            chain: chain.chain_id.clone(),
            sid,
        })
}

/// Static chain configuration: chains, SIDs, and the `(SID, interface) ->
/// chain` map for SR-unaware interfaces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainRegistry {
    chains: BTreeMap<String, VnfChain>,
    sid_table: BTreeMap<Ipv6Addr, Sid>,
    mapping: BTreeMap<(Ipv6Addr, Interface), String>,
}

impl ChainRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sid(&mut self, sid: Sid) -> Result<(), ChainError> {
        match self.sid_table.get(&sid.address) {
            Some(existing) if *existing != sid => Err(ChainError::DuplicateSid(sid.address)),
            Some(_) => Ok(()),
            None => {
                self.sid_table.insert(sid.address, sid);
                Ok(())
            }
        }
    }

    pub fn sid(&self, address: Ipv6Addr) -> Option<&Sid> {
        self.sid_table.get(&address)
    }

    pub fn sids(&self) -> impl Iterator<Item = &Sid> {
        self.sid_table.values()
    }

    pub fn chain(&self, chain_id: &str) -> Option<&VnfChain> {
        self.chains.get(chain_id)
    }

    pub fn chains(&self) -> impl Iterator<Item = &VnfChain> {
        self.chains.values()
    }

    /// Chain mapped to traffic leaving `sid` through `interface`.
    pub fn chain_for(&self, sid: Ipv6Addr, interface: Interface) -> Option<&VnfChain> {
        self.mapping
            .get(&(sid, interface))
            .and_then(|id| self.chains.get(id))
    }

    /// Mapping entries, for inspection and tests.
    pub fn mapping(&self) -> &BTreeMap<(Ipv6Addr, Interface), String> {
        &self.mapping
    }

    /// Resolved exit interface of every VNF hop in `chain`.
    pub fn hop_interfaces(&self, chain: &VnfChain) -> Result<Vec<(Ipv6Addr, Interface)>, ChainError> {
        let mut out = Vec::with_capacity(chain.segments.len());
        for hop in &chain.segments {
            let sid = self.sid(hop.sid).ok_or(ChainError::UnknownSid(hop.sid))?;
            let interface = hop
                .interface
                .or(chain.direction.required_interface())
                .unwrap_or(sid.interface);
            out.push((hop.sid, interface));
        }
        Ok(out)
    }

    /// Adds a chain after checking it against the univocal-mapping rule.
    /// Re-registering an identical chain is a no-op; a changed chain with
    /// the same id replaces the old one.
    pub fn register_chain(&mut self, chain: VnfChain) -> Result<(), ChainError> {
        if let Some(existing) = self.chains.get(&chain.chain_id) {
            if *existing == chain {
                return Ok(());
            }
            let old = self.unregister_chain(&chain.chain_id);
            let result = self.insert_checked(chain);
            if result.is_err() {
                if let Some(old) = old {
                    self.insert_checked(old)
                        .expect("previously registered chain must re-register");
                }
            }
            return result;
        }
        self.insert_checked(chain)
    }

    /// Registers the two halves of a bidirectional chain atomically.
    pub fn register_bidirectional(&mut self, east: VnfChain, west: VnfChain) -> Result<(), ChainError> {
        for (chain, want) in [(&east, Direction::Eastbound), (&west, Direction::Westbound)] {
            if chain.direction != want {
                let hop = chain.segments.first().map_or(Ipv6Addr::UNSPECIFIED, |h| h.sid);
                return Err(ChainError::InterfaceMismatch {
                    chain: chain.chain_id.clone(),
                    direction: chain.direction,
                    sid: hop,
                    interface: want.required_interface().unwrap_or(Interface::Single),
                });
            }
        }
        let before = self.clone();
        let result = self
            .register_chain(east)
            .and_then(|()| self.register_chain(west));
        if result.is_err() {
            *self = before;
        }
        result
    }

    /// Removes a chain and its mapping entries.
    pub fn unregister_chain(&mut self, chain_id: &str) -> Option<VnfChain> {
        let chain = self.chains.remove(chain_id)?;
        self.mapping.retain(|_, id| id != chain_id);
        Some(chain)
    }

    fn insert_checked(&mut self, chain: VnfChain) -> Result<(), ChainError> {
        let keys = self.validate(&chain)?;
        for key in keys {
            self.mapping.insert(key, chain.chain_id.clone());
        }
        self.chains.insert(chain.chain_id.clone(), chain);
        Ok(())
    }

    /// Checks `chain` and returns the mapping keys it would claim.
    fn validate(&self, chain: &VnfChain) -> Result<Vec<(Ipv6Addr, Interface)>, ChainError> {
        let id = &chain.chain_id;
        let Some(last) = chain.segments.last() else {
            return Err(ChainError::EmptyChain(id.clone()));
        };
        for (i, hop) in chain.segments.iter().enumerate() {
            if chain.segments[..i].iter().any(|h| h.sid == hop.sid) {
                return Err(ChainError::DuplicateSidInChain {
                    chain: id.clone(),
                    sid: hop.sid,
                });
            }
        }
        let hops = self.hop_interfaces(chain)?;
        let n = hops.len();
        let mut keys = Vec::new();
        for (i, (address, interface)) in hops.into_iter().enumerate() {
            let kind = self.sid_table[&address].kind;
            match (kind, i + 1 == n) {
                (SidKind::EgressEndpoint, false) => {
                    return Err(ChainError::MisplacedEgress {
                        chain: id.clone(),
                        sid: address,
                    })
                }
                (SidKind::EgressEndpoint, true) => continue,
                (_, true) => {
                    return Err(ChainError::MissingEgress {
                        chain: id.clone(),
                        sid: last.sid,
                    })
                }
                _ => {}
            }
            if let Some(required) = chain.direction.required_interface() {
                if interface != required {
                    return Err(ChainError::InterfaceMismatch {
                        chain: id.clone(),
                        direction: chain.direction,
                        sid: address,
                        interface,
                    });
                }
            }
            if kind == SidKind::SrUnaware {
                if let Some(existing) = self.mapping.get(&(address, interface)) {
                    if existing != id {
                        return Err(ChainError::UnivocalMappingViolation {
                            sid: address,
                            interface,
                            existing: existing.clone(),
                            chain: id.clone(),
                        });
                    }
                }
                keys.push((address, interface));
            }
        }
        Ok(keys)
    }
}

/// Steers packets whose destination falls in `prefix` into `chain_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierRule {
    pub prefix: Ipv6Prefix,
    pub chain_id: String,
}

impl ClassifierRule {
    pub fn new(prefix: Ipv6Prefix, chain_id: impl Into<String>) -> Self {
        Self {
            prefix,
            chain_id: chain_id.into(),
        }
    }
}

/// Longest-prefix match over `rules`; at equal length the earliest rule
/// wins. `None` means the packet is forwarded as plain IPv6.
pub fn classify(rules: &[ClassifierRule], dst: Ipv6Addr) -> Option<&str> {
    let mut best: Option<&ClassifierRule> = None;
    for rule in rules {
        if rule.prefix.contains(dst) && best.is_none_or(|b| rule.prefix.len() > b.prefix.len()) {
            best = Some(rule);
        }
    }
    best.map(|r| r.chain_id.as_str())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> Ipv6Addr {
        s.parse().unwrap()
    }

    /// Fig. 2 shape: two flows, two egress routers, one SR-unaware VNF in
    /// the middle of both paths.
    fn fig2_registry(duplicate_instances: bool) -> (ChainRegistry, VnfChain, VnfChain) {
        let mut reg = ChainRegistry::new();
        for (addr, kind) in [
            ("a::1", SidKind::SrAware),
            ("b::1", SidKind::SrAware),
            ("1::1", SidKind::SrUnaware),
            ("1::2", SidKind::SrUnaware),
            ("f::1", SidKind::EgressEndpoint),
            ("f::2", SidKind::EgressEndpoint),
        ] {
            reg.add_sid(Sid::new(a(addr), kind, "n")).unwrap();
        }
        let shared2 = if duplicate_instances { "1::2" } else { "1::1" };
        let c1 = VnfChain::new("c1", [a("a::1"), a("1::1"), a("f::1")], a("e::1"));
        let c2 = VnfChain::new("c2", [a("b::1"), a(shared2), a("f::2")], a("e::2"));
        (reg, c1, c2)
    }

    #[test]
    fn shared_unaware_vnf_is_rejected() {
        let (mut reg, c1, c2) = fig2_registry(false);
        reg.register_chain(c1).unwrap();
        let err = reg.register_chain(c2).unwrap_err();
        assert!(matches!(err, ChainError::UnivocalMappingViolation { existing, .. } if existing == "c1"));
        assert!(reg.chain("c2").is_none());
    }

    #[test]
    fn duplicated_instances_are_accepted() {
        let (mut reg, c1, c2) = fig2_registry(true);
        reg.register_chain(c1).unwrap();
        reg.register_chain(c2).unwrap();
        assert_eq!(reg.mapping().len(), 2);
    }

    #[test]
    fn shared_aware_vnf_is_exempt() {
        let (mut reg, c1, _) = fig2_registry(false);
        reg.register_chain(c1).unwrap();
        let c3 = VnfChain::new("c3", [a("a::1"), a("f::2")], a("e::3"));
        reg.register_chain(c3).unwrap();
    }

    #[test]
    fn identical_reregistration_is_idempotent() {
        let (mut reg, c1, _) = fig2_registry(false);
        reg.register_chain(c1.clone()).unwrap();
        let snapshot = reg.clone();
        reg.register_chain(c1).unwrap();
        assert_eq!(reg, snapshot);
    }

    #[test]
    fn chain_shape_errors() {
        let (mut reg, _, _) = fig2_registry(false);
        let dup = VnfChain::new("d", [a("a::1"), a("a::1"), a("f::1")], a("e::1"));
        assert!(matches!(reg.register_chain(dup), Err(ChainError::DuplicateSidInChain { .. })));
        let unknown = VnfChain::new("u", [a("9::9"), a("f::1")], a("e::1"));
        assert_eq!(reg.register_chain(unknown), Err(ChainError::UnknownSid(a("9::9"))));
        let no_egress = VnfChain::new("x", [a("a::1")], a("e::1"));
        assert!(matches!(reg.register_chain(no_egress), Err(ChainError::MissingEgress { .. })));
        let empty = VnfChain::new("e", [], a("e::1"));
        assert!(matches!(reg.register_chain(empty), Err(ChainError::EmptyChain(_))));
        let mid = VnfChain::new("m", [a("f::2"), a("f::1")], a("e::1"));
        assert!(matches!(reg.register_chain(mid), Err(ChainError::MisplacedEgress { .. })));
    }

    #[test]
    fn unregister_restores_mapping() {
        let (mut reg, c1, c2) = fig2_registry(true);
        reg.register_chain(c1).unwrap();
        let before = reg.clone();
        reg.register_chain(c2).unwrap();
        reg.unregister_chain("c2").unwrap();
        assert_eq!(reg, before);
    }

    fn fig3_registry() -> ChainRegistry {
        let mut reg = ChainRegistry::new();
        for addr in ["1::1", "2::1"] {
            reg.add_sid(Sid::new(a(addr), SidKind::SrUnaware, "nfv")).unwrap();
        }
        reg.add_sid(Sid::new(a("d::1"), SidKind::EgressEndpoint, "D")).unwrap();
        reg.add_sid(Sid::new(a("5::1"), SidKind::EgressEndpoint, "S")).unwrap();
        reg
    }

    #[test]
    fn bidirectional_pair_shares_instances() {
        let mut reg = fig3_registry();
        let east = VnfChain::new("east", [a("1::1"), a("2::1"), a("d::1")], a("5::1"))
            .with_direction(Direction::Eastbound);
        let west = VnfChain::new("west", [a("2::1"), a("1::1"), a("5::1")], a("d::1"))
            .with_direction(Direction::Westbound);
        reg.register_bidirectional(east, west).unwrap();
        assert_eq!(reg.chain_for(a("1::1"), Interface::East).unwrap().chain_id, "east");
        assert_eq!(reg.chain_for(a("1::1"), Interface::West).unwrap().chain_id, "west");

        let again = VnfChain::new("east2", [a("1::1"), a("d::1")], a("5::1"))
            .with_direction(Direction::Eastbound);
        assert!(matches!(
            reg.register_chain(again),
            Err(ChainError::UnivocalMappingViolation { interface: Interface::East, .. })
        ));
    }

    #[test]
    fn bidirectional_interface_mismatch() {
        let mut reg = fig3_registry();
        let mut east = VnfChain::new("east", [a("1::1"), a("2::1"), a("d::1")], a("5::1"))
            .with_direction(Direction::Eastbound);
        east.segments[0].interface = Some(Interface::West);
        let west = VnfChain::new("west", [a("2::1"), a("1::1"), a("5::1")], a("d::1"))
            .with_direction(Direction::Westbound);
        let before = reg.clone();
        assert!(matches!(
            reg.register_bidirectional(east, west),
            Err(ChainError::InterfaceMismatch { interface: Interface::West, .. })
        ));
        assert_eq!(reg, before);
    }

    #[test]
    fn classify_longest_prefix() {
        let rules = vec![
            ClassifierRule::new("DDDD::/64".parse().unwrap(), "C1"),
            ClassifierRule::new("DDDD::2/128".parse().unwrap(), "C2"),
        ];
        assert_eq!(classify(&rules[..1], a("DDDD::2")), Some("C1"));
        assert_eq!(classify(&rules, a("DDDD::2")), Some("C2"));
        assert_eq!(classify(&rules, a("FFFF::1")), None);
    }

    #[test]
    fn successor_lookup() {
        let c = VnfChain::new("c", [a("BBBB::2"), a("CCCC::2")], a("AAAA::2"));
        assert_eq!(next_after(&c, a("BBBB::2")), Ok(a("CCCC::2")));
        assert!(matches!(next_after(&c, a("CCCC::2")), Err(ChainError::SidIsLast { .. })));
        assert!(matches!(next_after(&c, a("1::1")), Err(ChainError::SidNotInChain { .. })));
        let abc = VnfChain::new("abc", [a("a::"), a("b::"), a("c::")], a("AAAA::2"));
        assert_eq!(next_after(&abc, a("b::")), Ok(a("c::")));
    }
}
