// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::net::Ipv6Addr;
use std::path::PathBuf;

use segchain::config::ScenarioConfig;

pub fn a(s: &str) -> Ipv6Addr {
    s.parse().unwrap()
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn testbed() -> ScenarioConfig {
    segchain::config::load_config(&scenario_path("testbed.cfg")).unwrap()
}

/// SID of the `i`-th VNF (0-based) in generated chains.
pub fn vnf_sid(i: usize) -> Ipv6Addr {
    a(&format!("bbbb::{:x}", i + 2))
}

/// The testbed topology with `n` VNFs of `kind` chained on the NFV node.
/// `behavior(i)` gives the VNF line for VNF `i`.
pub fn chain_config_with(n: usize, kind: &str, behavior: impl Fn(usize) -> String) -> String {
    let mut s = String::from(
        "[nodes]\nER1 ingress aaaa::2 eeee::2\nNFV nfv aaaa::1 cccc::1\nER2 egress cccc::2 dddd::2\n\n\
         [links]\nER1 NFV\nNFV ER2\n\n\
         [routes]\nER1 ::/0 NFV\nNFV cccc::/64 ER2\nNFV dddd::/64 ER2\nNFV aaaa::/64 ER1\nNFV eeee::/64 ER1\nER2 ::/0 NFV\n\n[sids]\n",
    );
    for i in 0..n {
        s += &format!("{} {kind} NFV\n", vnf_sid(i));
    }
    s += "cccc::2 egress ER2\n\n[vnfs]\n";
    for i in 0..n {
        s += &format!("{} {}\n", vnf_sid(i), behavior(i));
    }
    s += "\n[chains]\nc1 uni aaaa::2";
    for i in 0..n {
        s += &format!(" {}", vnf_sid(i));
    }
    s += " cccc::2\n\n[rules]\nER1 dddd::/64 c1\n\n[bench]\nflow eeee::2 dddd::2\nnode NFV\n";
    s
}

pub fn chain_config(n: usize, kind: &str) -> ScenarioConfig {
    ScenarioConfig::parse(&chain_config_with(n, kind, |_| "pass".into())).unwrap()
}

/// Builds the expected bytes field by field, big endian, straight from the
/// header layouts. Shares no code with the crate's serializer.
pub fn oracle_encapsulated(data: &[u8]) -> Vec<u8> {
    let seg = |s: &str| a(s).octets();
    let udp_len = 8 + data.len();
    let inner_len = 40 + udp_len;
    let srh_len = 8 + 2 * 16;
    let mut b = Vec::new();
    // outer IPv6: version 6, tc 0, flow 0
    b.extend([0x60, 0, 0, 0]);
    b.extend(((srh_len + inner_len) as u16).to_be_bytes());
    b.push(43); // routing header follows
    b.push(64);
    b.extend(seg("aaaa::2"));
    b.extend(seg("bbbb::2")); // active segment
    // SRH
    b.push(41); // IPv6 inside
    b.push(4); // hdr_ext_len: 8-octet units beyond the first 8 bytes
    b.push(4); // routing type
    b.push(1); // segments_left
    b.push(1); // last_entry
    b.push(0); // flags
    b.extend([0, 0]); // tag
    b.extend(seg("cccc::2")); // [0] = last segment
    b.extend(seg("bbbb::2")); // [1] = first segment
    // inner IPv6
    b.extend([0x60, 0, 0, 0]);
    b.extend((udp_len as u16).to_be_bytes());
    b.push(17);
    b.push(64);
    b.extend(seg("eeee::2"));
    b.extend(seg("dddd::2"));
    // UDP, checksum left at zero
    b.extend(5001u16.to_be_bytes());
    b.extend(5201u16.to_be_bytes());
    b.extend((udp_len as u16).to_be_bytes());
    b.extend([0, 0]);
    b.extend(data);
    b
}
