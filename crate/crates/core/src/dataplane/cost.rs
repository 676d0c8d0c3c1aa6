// SPDX-License-Identifier: Apache-2.0

//! Forwarding (f), decapsulation (d) and re-encapsulation (e) accounting.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

/// Kind of VNF a packet is handed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VnfKind {
    SrAware,
    SrUnaware,
}

/// Cost units charged per operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitCosts {
    pub f: f64,
    pub d: f64,
    pub e: f64,
}

impl Default for UnitCosts {
    fn default() -> Self {
        Self { f: 1.0, d: 0.5, e: 0.5 }
    }
}

/// Operation counters for one packet or an aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct OpCounts {
    pub f: u64,
    pub d: u64,
    pub e: u64,
}

impl OpCounts {
    pub const ZERO: Self = Self { f: 0, d: 0, e: 0 };

    pub fn new(f: u64, d: u64, e: u64) -> Self {
        Self { f, d, e }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    pub fn cost(&self, unit: &UnitCosts) -> f64 {
        self.f as f64 * unit.f + self.d as f64 * unit.d + self.e as f64 * unit.e
    }
}

impl Add for OpCounts {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            f: self.f + rhs.f,
            d: self.d + rhs.d,
            e: self.e + rhs.e,
        }
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for OpCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, Add::add)
    }
}

/// Per-packet and aggregate operation counters of one node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostLedger {
    pub unit: UnitCosts,
    per_packet: BTreeMap<u64, OpCounts>,
    total: OpCounts,
}

impl CostLedger {
    pub fn new(unit: UnitCosts) -> Self {
        Self {
            unit,
            per_packet: BTreeMap::new(),
            total: OpCounts::ZERO,
        }
    }

    /// Adds `counts` to packet `uid` and to the aggregate.
    pub fn record(&mut self, uid: u64, counts: OpCounts) {
        if counts.is_zero() {
            return;
        }
        *self.per_packet.entry(uid).or_default() += counts;
        self.total += counts;
    }

    pub fn packet(&self, uid: u64) -> OpCounts {
        self.per_packet.get(&uid).copied().unwrap_or_default()
    }

    pub fn packets(&self) -> impl Iterator<Item = (u64, OpCounts)> + '_ {
        self.per_packet.iter().map(|(&uid, &c)| (uid, c))
    }

    pub fn total(&self) -> OpCounts {
        self.total
    }

    pub fn total_cost(&self) -> f64 {
        self.total.cost(&self.unit)
    }

    /// Folds another ledger in. Packet ids present in both are summed.
    pub fn merge(&mut self, other: &CostLedger) {
        for (uid, counts) in other.packets() {
            self.record(uid, counts);
        }
    }

    /// Whether the aggregate equals the sum of the per-packet records.
    pub fn is_consistent(&self) -> bool {
        self.per_packet.values().copied().sum::<OpCounts>() == self.total
    }
}

/// Operation counts an NFV node spends on one packet that visits `n` VNFs
/// of one kind.
pub fn predicted_counts(n: u64, kind: VnfKind) -> OpCounts {
    match (n, kind) {
        (0, _) => OpCounts::new(1, 0, 0),
        (n, VnfKind::SrAware) => OpCounts::new(n + 2, 0, 0),
        (n, VnfKind::SrUnaware) => OpCounts::new(2 * n + 1, 1, 1),
    }
}

/// `(n+2)f` for SR-aware VNFs, `d + (2n+1)f + e` for SR-unaware ones, and
/// `f` for a plain router (`n = 0`).
pub fn predicted_cost(n: u64, kind: VnfKind, unit: &UnitCosts) -> f64 {
    let f = unit.f;
    match (n, kind) {
        (0, _) => f,
        (n, VnfKind::SrAware) => (n as f64 + 2.0) * f,
        (n, VnfKind::SrUnaware) => unit.d + (2.0 * n as f64 + 1.0) * f + unit.e,
    }
}
