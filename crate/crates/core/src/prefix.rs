// SPDX-License-Identifier: Apache-2.0

//! IPv6 prefixes and a small longest-prefix-match table.

use std::fmt;
use std::net::Ipv6Addr;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad IPv6 prefix {0:?}")]
pub struct BadPrefix(pub String);

/// An IPv6 prefix. Host bits beyond `len` are kept as written so that
/// `DDDD::2/64` prints back unchanged, but they never affect matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv6Prefix {
    addr: Ipv6Addr,
    len: u8,
}

impl Ipv6Prefix {
    pub fn new(addr: Ipv6Addr, len: u8) -> Result<Self, BadPrefix> {
        if len > 128 {
            return Err(BadPrefix(format!("{addr}/{len}")));
        }
        Ok(Self { addr, len })
    }

    /// A /128 covering exactly one address.
    pub fn host(addr: Ipv6Addr) -> Self {
        Self { addr, len: 128 }
    }

    pub fn addr(&self) -> Ipv6Addr {
        self.addr
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> u8 {
        self.len
    }

    pub fn is_default(&self) -> bool {
        self.len == 0
    }

    fn mask(&self) -> u128 {
        if self.len == 0 {
            0
        } else {
            u128::MAX << (128 - u32::from(self.len))
        }
    }

    pub fn contains(&self, addr: Ipv6Addr) -> bool {
        let mask = self.mask();
        (u128::from(self.addr) & mask) == (u128::from(addr) & mask)
    }

    /// Same network and length, ignoring host bits.
    pub fn same_network(&self, other: &Self) -> bool {
        self.len == other.len && self.contains(other.addr)
    }
}

impl fmt::Display for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.len)
    }
}

impl FromStr for Ipv6Prefix {
    type Err = BadPrefix;

    /// Accepts `ADDR/LEN` or a bare address (taken as /128).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || BadPrefix(s.to_string());
        match s.split_once('/') {
            Some((addr, len)) => {
                let addr = addr.parse::<Ipv6Addr>().map_err(|_| bad())?;
                let len = len.parse::<u8>().map_err(|_| bad())?;
                Self::new(addr, len).map_err(|_| bad())
            }
            None => s.parse::<Ipv6Addr>().map(Self::host).map_err(|_| bad()),
        }
    }
}

/// Longest-prefix-match table. Among entries of equal length the one
/// inserted first wins.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTable<T> {
    entries: Vec<(Ipv6Prefix, T)>,
}

impl<T> Default for PrefixTable<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T> PrefixTable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, prefix: Ipv6Prefix, value: T) {
        self.entries.push((prefix, value));
    }

    pub fn lookup(&self, addr: Ipv6Addr) -> Option<&T> {
        let mut best: Option<&(Ipv6Prefix, T)> = None;
        for entry in &self.entries {
            if entry.0.contains(addr) && best.is_none_or(|b| entry.0.len() > b.0.len()) {
                best = Some(entry);
            }
        }
        best.map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Ipv6Prefix, T)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T> FromIterator<(Ipv6Prefix, T)> for PrefixTable<T> {
    fn from_iter<I: IntoIterator<Item = (Ipv6Prefix, T)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
