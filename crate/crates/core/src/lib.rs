// SPDX-License-Identifier: Apache-2.0

//! SRv6 service function chaining in userspace.
//!
//! - [`wire`]: IPv6 / SRH parsing and serialization.
//! - [`chain`]: VNF chains, SIDs and the univocal-mapping registry.
//! - [`dataplane`]: encapsulation, the SR/VNF connector and cost accounting.
//! - [`sim`]: a deterministic packet-walking topology simulator.
//! - [`bench`]: rate sweeps, region classification and linear regression.
//! - [`config`] and [`cli`]: scenario files and the command surface.

pub mod chain;
pub mod dataplane;
pub mod prefix;
pub mod trace;
pub mod wire;
pub mod sim;
pub mod bench;
pub mod config;
pub mod cli;
