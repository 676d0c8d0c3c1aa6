// SPDX-License-Identifier: Apache-2.0

//! Line-oriented scenario files.
//!
//! A scenario is a list of `[section]` blocks with one entry per line and
//! `#` comments. See `docs/config-grammar.md` for the full grammar. Parse
//! errors carry a line and column; validation errors name the entity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::net::Ipv6Addr;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::bench::{CapacityModel, Scenario, SweepConfig, Thresholds};
use crate::chain::{ChainHop, ChainRegistry, ClassifierRule, Direction, Interface, NodeId, Sid, SidKind, VnfChain};
use crate::dataplane::{
    ChainEditor, PassThroughRouter, PayloadStamper, PrefixFilter, SegmentListEdit, UnitCosts, Vnf, VnfPermission,
};
use crate::prefix::Ipv6Prefix;
use crate::sim::{Flow, Network, Node, NodeRole};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

fn join_lines<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", join_lines(.0))]
    Parse(Vec<ParseIssue>),
    #[error("{}", join_lines(.0))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeDecl {
    pub id: NodeId,
    pub role: NodeRole,
    pub addresses: Vec<Ipv6Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteDecl {
    pub node: NodeId,
    pub prefix: Ipv6Prefix,
    pub next_hop: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BehaviorDecl {
    Pass,
    Filter(Ipv6Prefix),
    Stamp(u8),
    Edit(SegmentListEdit),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VnfDecl {
    pub sid: Ipv6Addr,
    pub behavior: BehaviorDecl,
    pub permission: VnfPermission,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecl {
    pub node: NodeId,
    pub prefix: Ipv6Prefix,
    pub chain: String,
}

/// How the capacity model of a scenario is declared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Capacity { capacity: f64, k0: f64 },
    /// Capacity chosen so that the measured node shows this utilization
    /// line (percent, R in kpps).
    Line { slope: f64, intercept: f64 },
}

impl ModelSpec {
    pub fn resolve(&self, per_packet_cost: f64) -> Result<CapacityModel, crate::bench::BenchError> {
        match *self {
            ModelSpec::Capacity { capacity, k0 } => CapacityModel::new(capacity, k0),
            ModelSpec::Line { slope, intercept } => CapacityModel::calibrated(per_packet_cost, slope, intercept),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    pub flow: Option<(Ipv6Addr, Ipv6Addr)>,
    /// Node charged against the capacity model; defaults to the only NFV node.
    pub node: Option<NodeId>,
    pub packets: u64,
    pub payload: usize,
    pub rates: Vec<f64>,
    pub runs: u32,
    pub noise: f64,
    pub seed: u64,
    pub s_threshold: f64,
    pub u_threshold: f64,
    pub models: BTreeMap<Scenario, ModelSpec>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            flow: None,
            node: None,
            packets: sweep.packets_per_point,
            payload: 1024,
            rates: sweep.rates_pps,
            runs: sweep.runs,
            noise: sweep.noise,
            seed: sweep.seed,
            s_threshold: sweep.thresholds.success,
            u_threshold: sweep.thresholds.utilization,
            models: BTreeMap::new(),
        }
    }
}

impl BenchSettings {
    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            rates_pps: self.rates.clone(),
            runs: self.runs,
            seed: self.seed,
            noise: self.noise,
            thresholds: Thresholds {
                success: self.s_threshold,
                utilization: self.u_threshold,
            },
            packets_per_point: self.packets,
        }
    }
}

/// A whole scenario document.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioConfig {
    pub nodes: Vec<NodeDecl>,
    pub links: Vec<(NodeId, NodeId)>,
    pub routes: Vec<RouteDecl>,
    pub sids: Vec<Sid>,
    pub vnfs: Vec<VnfDecl>,
    pub chains: Vec<VnfChain>,
    /// `(east, west)` chain ids registered as one bidirectional chain.
    pub pairs: Vec<(String, String)>,
    pub rules: Vec<RuleDecl>,
    pub costs: UnitCosts,
    pub bench: BenchSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Nodes,
    Links,
    Routes,
    Sids,
    Vnfs,
    Chains,
    Pairs,
    Rules,
    Costs,
    Bench,
}

impl FromStr for Section {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "nodes" => Section::Nodes,
            "links" => Section::Links,
            "routes" => Section::Routes,
            "sids" => Section::Sids,
            "vnfs" => Section::Vnfs,
            "chains" => Section::Chains,
            "pairs" => Section::Pairs,
            "rules" => Section::Rules,
            "costs" => Section::Costs,
            "bench" => Section::Bench,
            _ => return Err(()),
        })
    }
}

/// Whitespace-separated token with its 1-based column.
#[derive(Debug, Clone, Copy)]
struct Tok<'a> {
    col: usize,
    text: &'a str,
}

fn tokenize(line: &str) -> Vec<Tok<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(Tok {
                    col: line[..s].chars().count() + 1,
                    text: &line[s..i],
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Tok {
            col: line[..s].chars().count() + 1,
            text: &line[s..],
        });
    }
    out
}

/// Parse failure at a token: (column, message).
type LineResult<T> = Result<T, (usize, String)>;

fn field<T: FromStr>(tok: Tok<'_>, what: &str) -> LineResult<T>
where
    T::Err: fmt::Display,
{
    tok.text
        .parse()
        .map_err(|e: T::Err| (tok.col, format!("bad {what} {:?}: {e}", tok.text)))
}

fn addr(tok: Tok<'_>) -> LineResult<Ipv6Addr> {
    tok.text
        .parse()
        .map_err(|_| (tok.col, format!("bad IPv6 address {:?}", tok.text)))
}

fn need<'a>(toks: &[Tok<'a>], i: usize, end_col: usize, what: &str) -> LineResult<Tok<'a>> {
    toks.get(i).copied().ok_or((end_col, format!("missing {what}")))
}

fn exact(toks: &[Tok<'_>], n: usize) -> LineResult<()> {
    match toks.get(n) {
        Some(t) => Err((t.col, format!("unexpected {:?}", t.text))),
        None => Ok(()),
    }
}

fn parse_edit(toks: &[Tok<'_>], end: usize) -> LineResult<SegmentListEdit> {
    let mode = need(toks, 0, end, "edit mode (after, at or replace)")?;
    type Build = fn(Option<usize>, Vec<Ipv6Addr>) -> SegmentListEdit;
    let (rest, edit): (&[Tok<'_>], Build) = match mode.text {
        "after" => (&toks[1..], |_, s| SegmentListEdit::InsertAfterCurrent(s)),
        "at" => (&toks[2.min(toks.len())..], |p, s| SegmentListEdit::InsertAt(p.unwrap_or(0), s)),
        "replace" => (&toks[1..], |_, s| SegmentListEdit::Replace(s)),
        other => return Err((mode.col, format!("unknown edit mode {other:?}"))),
    };
    let position = if mode.text == "at" {
        Some(field::<usize>(need(toks, 1, end, "edit position")?, "edit position")?)
    } else {
        None
    };
    let sids = rest.iter().map(|t| addr(*t)).collect::<LineResult<Vec<_>>>()?;
    if sids.is_empty() {
        return Err((end, "edit needs at least one SID".into()));
    }
    Ok(edit(position, sids))
}

fn parse_hop(tok: Tok<'_>) -> LineResult<ChainHop> {
    match tok.text.split_once('@') {
        Some((a, iface)) => Ok(ChainHop {
            sid: addr(Tok { col: tok.col, text: a })?,
            interface: Some(iface.parse().map_err(|e: String| (tok.col + a.len() + 1, e))?),
        }),
        None => Ok(ChainHop::from(addr(tok)?)),
    }
}

/// Parses a rate in pps; a `k` or `kpps` suffix means thousands.
pub fn parse_rate(s: &str) -> Result<f64, String> {
    let lower = s.trim().to_ascii_lowercase();
    let (num, scale) = if let Some(n) = lower.strip_suffix("kpps") {
        (n, 1000.0)
    } else if let Some(n) = lower.strip_suffix('k') {
        (n, 1000.0)
    } else if let Some(n) = lower.strip_suffix("pps") {
        (n, 1.0)
    } else {
        (lower.as_str(), 1.0)
    };
    match num.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v * scale),
        _ => Err(format!("bad rate {s:?}")),
    }
}

impl ScenarioConfig {
    /// Parses a scenario document, reporting every malformed line.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        let mut issues = Vec::new();
        let mut section: Option<Section> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let toks = tokenize(content);
            let Some(first) = toks.first() else { continue };
            if first.text.starts_with('[') {
                let name = content.trim();
                match name
                    .strip_prefix('[')
                    .and_then(|n| n.strip_suffix(']'))
                    .map(|n| n.trim().parse::<Section>())
                {
                    Some(Ok(s)) => section = Some(s),
                    _ => issues.push(ParseIssue {
                        line: line_no,
                        column: first.col,
                        message: format!("unknown section {name}"),
                    }),
                }
                continue;
            }
            let end = content.trim_end().chars().count() + 1;
            let result = match section {
                None => Err((first.col, "entry outside of any section".to_string())),
                Some(s) => cfg.parse_entry(s, &toks, end),
            };
            if let Err((column, message)) = result {
                issues.push(ParseIssue {
                    line: line_no,
                    column,
                    message,
                });
            }
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Parse(issues))
        }
    }

    fn parse_entry(&mut self, section: Section, t: &[Tok<'_>], end: usize) -> LineResult<()> {
        match section {
            Section::Nodes => {
                let id = t[0].text.to_string();
                let role = field(need(t, 1, end, "node role")?, "node role")?;
                let addresses = t[2..].iter().map(|a| addr(*a)).collect::<LineResult<_>>()?;
                self.nodes.push(NodeDecl { id, role, addresses });
            }
            Section::Links => {
                let b = need(t, 1, end, "second link end")?;
                exact(t, 2)?;
                self.links.push((t[0].text.to_string(), b.text.to_string()));
            }
            Section::Routes => {
                let prefix = field(need(t, 1, end, "prefix")?, "prefix")?;
                let next_hop = need(t, 2, end, "next hop node")?.text.to_string();
                exact(t, 3)?;
                self.routes.push(RouteDecl {
                    node: t[0].text.to_string(),
                    prefix,
                    next_hop,
                });
            }
            Section::Sids => {
                let address = addr(t[0])?;
                let kind = field(need(t, 1, end, "SID kind")?, "SID kind")?;
                let host = need(t, 2, end, "host node")?.text;
                let mut sid = Sid::new(address, kind, host);
                for opt in &t[3..] {
                    match opt.text.split_once('=') {
                        Some(("iface", v)) => {
                            sid.interface = v.parse().map_err(|e: String| (opt.col + 6, e))?;
                        }
                        _ => return Err((opt.col, format!("unknown SID option {:?}", opt.text))),
                    }
                }
                self.sids.push(sid);
            }
            Section::Vnfs => {
                let sid = addr(t[0])?;
                let mut args: Vec<Tok<'_>> = t[1..].to_vec();
                let mut permission = VnfPermission::default();
                if let Some(pos) = args.iter().position(|a| a.text.starts_with("perm=")) {
                    let opt = args.remove(pos);
                    permission = opt.text[5..].parse().map_err(|e: String| (opt.col + 5, e))?;
                }
                let kind = need(&args, 0, end, "VNF behavior")?;
                let behavior = match kind.text {
                    "pass" => {
                        exact(&args, 1)?;
                        BehaviorDecl::Pass
                    }
                    "filter" => {
                        let p = field(need(&args, 1, end, "filter prefix")?, "prefix")?;
                        exact(&args, 2)?;
                        BehaviorDecl::Filter(p)
                    }
                    "stamp" => {
                        let v = need(&args, 1, end, "stamp byte")?;
                        let parsed = match v.text.strip_prefix("0x") {
                            Some(hex) => u8::from_str_radix(hex, 16),
                            None => v.text.parse(),
                        };
                        exact(&args, 2)?;
                        BehaviorDecl::Stamp(parsed.map_err(|_| (v.col, format!("bad byte {:?}", v.text)))?)
                    }
                    "edit" => BehaviorDecl::Edit(parse_edit(&args[1..], end)?),
                    other => return Err((kind.col, format!("unknown VNF behavior {other:?}"))),
                };
                self.vnfs.push(VnfDecl {
                    sid,
                    behavior,
                    permission,
                });
            }
            Section::Chains => {
                let direction: Direction = field(need(t, 1, end, "chain direction")?, "direction")?;
                let source = addr(need(t, 2, end, "ingress source address")?)?;
                let segments = t[3..].iter().map(|h| parse_hop(*h)).collect::<LineResult<Vec<_>>>()?;
                if segments.is_empty() {
                    return Err((end, "chain needs at least one segment".into()));
                }
                self.chains.push(VnfChain {
                    chain_id: t[0].text.to_string(),
                    segments,
                    ingress_source: source,
                    direction,
                });
            }
            Section::Pairs => {
                let west = need(t, 1, end, "westbound chain id")?;
                exact(t, 2)?;
                self.pairs.push((t[0].text.to_string(), west.text.to_string()));
            }
            Section::Rules => {
                let prefix = field(need(t, 1, end, "prefix")?, "prefix")?;
                let chain = need(t, 2, end, "chain id")?.text.to_string();
                exact(t, 3)?;
                self.rules.push(RuleDecl {
                    node: t[0].text.to_string(),
                    prefix,
                    chain,
                });
            }
            Section::Costs => {
                let v = need(t, 1, end, "cost value")?;
                let value: f64 = field(v, "cost")?;
                if !(value.is_finite() && value >= 0.0) {
                    return Err((v.col, "cost must be finite and >= 0".into()));
                }
                exact(t, 2)?;
                match t[0].text {
                    "f" => self.costs.f = value,
                    "d" => self.costs.d = value,
                    "e" => self.costs.e = value,
                    other => return Err((t[0].col, format!("unknown cost {other:?}, expected f, d or e"))),
                }
            }
            Section::Bench => self.parse_bench(t, end)?,
        }
        Ok(())
    }

    fn parse_bench(&mut self, t: &[Tok<'_>], end: usize) -> LineResult<()> {
        let b = &mut self.bench;
        let one = |what: &str| -> LineResult<Tok<'_>> {
            let v = need(t, 1, end, what)?;
            exact(t, 2)?;
            Ok(v)
        };
        match t[0].text {
            "flow" => {
                let src = addr(need(t, 1, end, "flow source")?)?;
                let dst = addr(need(t, 2, end, "flow destination")?)?;
                exact(t, 3)?;
                b.flow = Some((src, dst));
            }
            "node" => b.node = Some(one("node id")?.text.to_string()),
            "packets" => b.packets = field(one("packet count")?, "packet count")?,
            "payload" => b.payload = field(one("payload size")?, "payload size")?,
            "runs" => b.runs = field(one("run count")?, "run count")?,
            "seed" => b.seed = field(one("seed")?, "seed")?,
            "noise" => b.noise = field(one("noise")?, "noise")?,
            "s_threshold" => b.s_threshold = field(one("threshold")?, "threshold")?,
            "u_threshold" => b.u_threshold = field(one("threshold")?, "threshold")?,
            "rates" => {
                if t.len() < 2 {
                    return Err((end, "missing rates".into()));
                }
                b.rates = t[1..]
                    .iter()
                    .map(|r| parse_rate(r.text).map_err(|e| (r.col, e)))
                    .collect::<LineResult<_>>()?;
            }
            "model" => {
                let sc: Scenario = field(need(t, 1, end, "scenario")?, "scenario")?;
                let mode = need(t, 2, end, "capacity or slope")?;
                let v1: f64 = field(need(t, 3, end, "value")?, "number")?;
                let key2 = need(t, 4, end, "second key")?;
                let v2: f64 = field(need(t, 5, end, "value")?, "number")?;
                exact(t, 6)?;
                let spec = match (mode.text, key2.text) {
                    ("capacity", "k0") => ModelSpec::Capacity { capacity: v1, k0: v2 },
                    ("slope", "intercept") => ModelSpec::Line {
                        slope: v1,
                        intercept: v2,
                    },
                    _ => {
                        return Err((
                            mode.col,
                            "expected `capacity C k0 K` or `slope M intercept K`".into(),
                        ))
                    }
                };
                b.models.insert(sc, spec);
            }
            other => return Err((t[0].col, format!("unknown bench key {other:?}"))),
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[nodes]\n");
        for n in &self.nodes {
            let _ = write!(s, "{} {}", n.id, n.role);
            for a in &n.addresses {
                let _ = write!(s, " {a}");
            }
            s.push('\n');
        }
        s.push_str("\n[links]\n");
        for (a, b) in &self.links {
            let _ = writeln!(s, "{a} {b}");
        }
        s.push_str("\n[routes]\n");
        for r in &self.routes {
            let _ = writeln!(s, "{} {} {}", r.node, r.prefix, r.next_hop);
        }
        s.push_str("\n[sids]\n");
        for sid in &self.sids {
            let _ = write!(s, "{} {} {}", sid.address, sid.kind.as_str(), sid.host_node);
            if sid.interface != Interface::Single {
                let _ = write!(s, " iface={}", sid.interface);
            }
            s.push('\n');
        }
        s.push_str("\n[vnfs]\n");
        for v in &self.vnfs {
            let _ = write!(s, "{} ", v.sid);
            match &v.behavior {
                BehaviorDecl::Pass => s.push_str("pass"),
                BehaviorDecl::Filter(p) => {
                    let _ = write!(s, "filter {p}");
                }
                BehaviorDecl::Stamp(b) => {
                    let _ = write!(s, "stamp {b}");
                }
                BehaviorDecl::Edit(edit) => {
                    let (head, sids) = match edit {
                        SegmentListEdit::InsertAfterCurrent(x) => ("after".to_string(), x),
                        SegmentListEdit::InsertAt(p, x) => (format!("at {p}"), x),
                        SegmentListEdit::Replace(x) => ("replace".to_string(), x),
                    };
                    let _ = write!(s, "edit {head}");
                    for a in sids {
                        let _ = write!(s, " {a}");
                    }
                }
            }
            if v.permission != VnfPermission::default() {
                let _ = write!(s, " perm={}", v.permission.as_str());
            }
            s.push('\n');
        }
        s.push_str("\n[chains]\n");
        for c in &self.chains {
            let _ = write!(s, "{} {} {}", c.chain_id, c.direction, c.ingress_source);
            for h in &c.segments {
                let _ = write!(s, " {}", h.sid);
                if let Some(i) = h.interface {
                    let _ = write!(s, "@{i}");
                }
            }
            s.push('\n');
        }
        s.push_str("\n[pairs]\n");
        for (e, w) in &self.pairs {
            let _ = writeln!(s, "{e} {w}");
        }
        s.push_str("\n[rules]\n");
        for r in &self.rules {
            let _ = writeln!(s, "{} {} {}", r.node, r.prefix, r.chain);
        }
        let c = &self.costs;
        let _ = write!(s, "\n[costs]\nf {}\nd {}\ne {}\n", c.f, c.d, c.e);
        let b = &self.bench;
        s.push_str("\n[bench]\n");
        if let Some((src, dst)) = b.flow {
            let _ = writeln!(s, "flow {src} {dst}");
        }
        if let Some(n) = &b.node {
            let _ = writeln!(s, "node {n}");
        }
        let _ = writeln!(s, "packets {}\npayload {}\nruns {}", b.packets, b.payload, b.runs);
        let _ = writeln!(s, "seed {}\nnoise {}", b.seed, b.noise);
        let _ = writeln!(s, "s_threshold {}\nu_threshold {}", b.s_threshold, b.u_threshold);
        s.push_str("rates");
        for r in &b.rates {
            let _ = write!(s, " {r}");
        }
        s.push('\n');
        for (sc, m) in &b.models {
            let _ = match m {
                ModelSpec::Capacity { capacity, k0 } => {
                    writeln!(s, "model {} capacity {capacity} k0 {k0}", sc.key())
                }
                ModelSpec::Line { slope, intercept } => {
                    writeln!(s, "model {} slope {slope} intercept {intercept}", sc.key())
                }
            };
        }
        s
    }

    /// Checks cross references and chain constraints, collecting every
    /// problem found.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut roles = BTreeMap::new();
        let mut owners: BTreeMap<Ipv6Addr, &str> = BTreeMap::new();
        for n in &self.nodes {
            if roles.insert(n.id.as_str(), n.role).is_some() {
                errs.push(format!("node {}: declared twice", n.id));
            }
            for a in &n.addresses {
                if let Some(prev) = owners.insert(*a, &n.id) {
                    if prev != n.id {
                        errs.push(format!("address {a}: owned by both {prev} and {}", n.id));
                    }
                }
            }
        }
        if self.nodes.is_empty() {
            errs.push("no nodes declared".into());
        }
        let known = |id: &str| roles.contains_key(id);
        let mut links = BTreeSet::new();
        for (a, b) in &self.links {
            for end in [a, b] {
                if !known(end) {
                    errs.push(format!("link {a} {b}: unknown node {end}"));
                }
            }
            if a == b {
                errs.push(format!("link {a} {b}: self loop"));
            }
            links.insert((a.min(b).clone(), a.max(b).clone()));
        }
        for r in &self.routes {
            if !known(&r.node) {
                errs.push(format!("route {} {}: unknown node {}", r.node, r.prefix, r.node));
            }
            if !known(&r.next_hop) {
                errs.push(format!("route {} {}: unknown next hop {}", r.node, r.prefix, r.next_hop));
            } else if !links.contains(&(r.node.clone().min(r.next_hop.clone()), r.node.clone().max(r.next_hop.clone()))) {
                errs.push(format!(
                    "route {} {}: next hop {} is not a neighbor",
                    r.node, r.prefix, r.next_hop
                ));
            }
        }
        let mut sid_set = BTreeMap::new();
        for sid in &self.sids {
            if sid_set.insert(sid.address, sid).is_some() {
                errs.push(format!("SID {}: declared twice", sid.address));
            }
            if !known(&sid.host_node) {
                errs.push(format!("SID {}: unknown host {}", sid.address, sid.host_node));
            }
            if sid.kind == SidKind::EgressEndpoint {
                if let Some(owner) = owners.get(&sid.address) {
                    if *owner != sid.host_node {
                        errs.push(format!(
                            "SID {}: egress address belongs to {owner}, not {}",
                            sid.address, sid.host_node
                        ));
                    }
                }
            }
        }
        let mut vnf_set = BTreeSet::new();
        for v in &self.vnfs {
            if !vnf_set.insert(v.sid) {
                errs.push(format!("VNF {}: declared twice", v.sid));
            }
            match sid_set.get(&v.sid) {
                None => errs.push(format!("VNF {}: no such SID", v.sid)),
                Some(s) if s.kind == SidKind::EgressEndpoint => {
                    errs.push(format!("VNF {}: SID is an egress endpoint", v.sid))
                }
                Some(s) if s.kind == SidKind::SrUnaware && matches!(v.behavior, BehaviorDecl::Edit(_)) => {
                    errs.push(format!("VNF {}: SR-unaware VNFs cannot edit the segment list", v.sid))
                }
                _ => {}
            }
            if let BehaviorDecl::Edit(edit) = &v.behavior {
                if !v.permission.allows(edit) {
                    errs.push(format!(
                        "VNF {}: permission {} does not allow this edit",
                        v.sid,
                        v.permission.as_str()
                    ));
                }
            }
        }
        for sid in &self.sids {
            if sid.kind != SidKind::EgressEndpoint && !vnf_set.contains(&sid.address) {
                errs.push(format!("SID {}: no VNF declared for it", sid.address));
            }
        }
        let chain_ids: BTreeSet<&str> = self.chains.iter().map(|c| c.chain_id.as_str()).collect();
        if chain_ids.len() != self.chains.len() {
            errs.push("duplicate chain ids".into());
        }
        for (e, w) in &self.pairs {
            for id in [e, w] {
                if !chain_ids.contains(id.as_str()) {
                    errs.push(format!("pair {e} {w}: unknown chain {id}"));
                }
            }
        }
        for r in &self.rules {
            match roles.get(r.node.as_str()) {
                None => errs.push(format!("rule {} {}: unknown node {}", r.node, r.prefix, r.node)),
                Some(role) if !role.is_edge() => errs.push(format!(
                    "rule {} {}: {} is not an edge node",
                    r.node, r.prefix, r.node
                )),
                _ => {}
            }
            if !chain_ids.contains(r.chain.as_str()) {
                errs.push(format!("rule {} {}: unknown chain {}", r.node, r.prefix, r.chain));
            }
        }
        if errs.is_empty() {
            if let Err(chain_errs) = self.registry() {
                errs.extend(chain_errs);
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Builds the chain registry, registering paired chains together.
    pub fn registry(&self) -> Result<ChainRegistry, Vec<String>> {
        let mut reg = ChainRegistry::new();
        let mut errs = Vec::new();
        for sid in &self.sids {
            if let Err(e) = reg.add_sid(sid.clone()) {
                errs.push(e.to_string());
            }
        }
        let by_id: BTreeMap<&str, &VnfChain> = self.chains.iter().map(|c| (c.chain_id.as_str(), c)).collect();
        let paired: BTreeSet<&str> = self
            .pairs
            .iter()
            .flat_map(|(e, w)| [e.as_str(), w.as_str()])
            .collect();
        for c in &self.chains {
            if paired.contains(c.chain_id.as_str()) {
                continue;
            }
            if let Err(e) = reg.register_chain(c.clone()) {
                errs.push(format!("chain {}: {e}", c.chain_id));
            }
        }
        for (e, w) in &self.pairs {
            if let (Some(east), Some(west)) = (by_id.get(e.as_str()), by_id.get(w.as_str())) {
                if let Err(err) = reg.register_bidirectional((*east).clone(), (*west).clone()) {
                    errs.push(format!("pair {e} {w}: {err}"));
                }
            }
        }
        if errs.is_empty() {
            Ok(reg)
        } else {
            Err(errs)
        }
    }

    /// Validates and instantiates the network.
    pub fn build_network(&self) -> Result<Network, ConfigError> {
        self.validate()?;
        let registry = self.registry().map_err(ConfigError::Invalid)?;
        let sids: BTreeMap<Ipv6Addr, &Sid> = self.sids.iter().map(|s| (s.address, s)).collect();
        let mut nodes: BTreeMap<&str, Node> = self
            .nodes
            .iter()
            .map(|d| {
                let mut n = Node::new(d.id.clone(), d.role);
                n.addresses = d.addresses.clone();
                (d.id.as_str(), n)
            })
            .collect();
        for r in &self.routes {
            if let Some(n) = nodes.get_mut(r.node.as_str()) {
                n.routing_table.push(r.prefix, r.next_hop.clone());
            }
        }
        for v in &self.vnfs {
            let sid = (*sids[&v.sid]).clone();
            let vnf = match &v.behavior {
                BehaviorDecl::Pass => Vnf::new(sid.clone(), v.permission, PassThroughRouter),
                BehaviorDecl::Filter(p) => Vnf::new(sid.clone(), v.permission, PrefixFilter { prefix: *p }),
                BehaviorDecl::Stamp(b) => Vnf::new(sid.clone(), v.permission, PayloadStamper { value: *b }),
                BehaviorDecl::Edit(e) => Vnf::new(sid.clone(), v.permission, ChainEditor { edit: e.clone() }),
            };
            if let Some(n) = nodes.get_mut(sid.host_node.as_str()) {
                n.hosted_vnfs.insert(sid.address, vnf);
            }
        }
        for r in &self.rules {
            if let Some(n) = nodes.get_mut(r.node.as_str()) {
                n.rules.push(ClassifierRule::new(r.prefix, r.chain.clone()));
            }
        }
        let mut net = Network::new(nodes.into_values(), self.links.iter().cloned(), registry)
            .map_err(|e| ConfigError::Invalid(vec![e.to_string()]))?;
        net.unit_costs = self.costs;
        Ok(net)
    }

    /// Copy with every VNF SID switched to `kind`.
    pub fn with_vnf_kind(&self, kind: SidKind) -> Self {
        let mut c = self.clone();
        for sid in &mut c.sids {
            if sid.kind != SidKind::EgressEndpoint {
                sid.kind = kind;
            }
        }
        c
    }

    /// Node the bench charges: the declared one, or the only NFV node.
    pub fn measured_node(&self) -> Result<NodeId, ConfigError> {
        if let Some(n) = &self.bench.node {
            return Ok(n.clone());
        }
        let nfv: Vec<&NodeDecl> = self.nodes.iter().filter(|n| n.role == NodeRole::NfvNode).collect();
        match nfv.as_slice() {
            [one] => Ok(one.id.clone()),
            _ => Err(ConfigError::Invalid(vec![
                "bench: set `node` when there is not exactly one nfv node".into(),
            ])),
        }
    }

    /// The bench flow with the configured payload size.
    pub fn bench_flow(&self) -> Result<Flow, ConfigError> {
        let (src, dst) = self
            .bench
            .flow
            .ok_or_else(|| ConfigError::Invalid(vec!["bench: no `flow SRC DST` declared".into()]))?;
        let mut flow = Flow::new(src, dst, self.bench.packets.max(1));
        flow.payload_size = self.bench.payload;
        Ok(flow)
    }

    /// Declared model for a scenario, or one whose utilization line is the
    /// reference line for that scenario.
    pub fn model_spec(&self, scenario: Scenario) -> ModelSpec {
        self.bench.models.get(&scenario).copied().unwrap_or(match scenario {
            Scenario::SrAware => ModelSpec::Line {
                slope: 6.64,
                intercept: 8.9,
            },
            Scenario::SrUnaware => ModelSpec::Line {
                slope: 6.78,
                intercept: 12.5,
            },
        })
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ScenarioConfig::parse(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    #[error("bad prefix {0:?}")]
    BadPrefix(String),
    #[error("next hop {0} is not an address of a neighbor of {1}")]
    BadNextHop(String, NodeId),
    #[error("segment {0} is not a declared SID")]
    UnknownSegment(String),
    #[error("a different route for {0} already exists on {1}")]
    RouteExists(Ipv6Prefix, NodeId),
    #[error("{0}")]
    NoIngress(String),
    #[error("{0}")]
    Invalid(String),
}

/// Result of a successful `route add`.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteAdded {
    pub node: NodeId,
    pub chain_id: String,
    /// `false` when the identical route was already present.
    pub changed: bool,
    /// The config lines describing the route.
    pub fragment: String,
}

/// Installs an encap route on an ingress edge node: a classifier rule,
/// the chain it points to and the plain route towards `via`.
pub fn route_add(
    cfg: &mut ScenarioConfig,
    prefix: &str,
    via: &str,
    segments: &[String],
    node: Option<&str>,
) -> Result<RouteAdded, RouteError> {
    let prefix: Ipv6Prefix = prefix.parse().map_err(|_| RouteError::BadPrefix(prefix.to_string()))?;
    let ingress = match node {
        Some(n) => cfg
            .nodes
            .iter()
            .find(|d| d.id == n)
            .ok_or_else(|| RouteError::NoIngress(format!("unknown node {n}")))?,
        None => {
            let edges: Vec<&NodeDecl> = cfg.nodes.iter().filter(|d| d.role == NodeRole::IngressEdge).collect();
            match edges.as_slice() {
                [one] => *one,
                _ => return Err(RouteError::NoIngress("pass --node: not exactly one ingress node".into())),
            }
        }
    };
    if !ingress.role.is_edge() {
        return Err(RouteError::NoIngress(format!("{} is not an edge node", ingress.id)));
    }
    let node_id = ingress.id.clone();
    let source = *ingress
        .addresses
        .first()
        .ok_or_else(|| RouteError::NoIngress(format!("{node_id} has no address")))?;
    let via_addr: Ipv6Addr = via
        .parse()
        .map_err(|_| RouteError::BadNextHop(via.to_string(), node_id.clone()))?;
    let next_hop = cfg
        .nodes
        .iter()
        .find(|d| d.addresses.contains(&via_addr))
        .filter(|d| {
            cfg.links
                .iter()
                .any(|(a, b)| (*a == node_id && *b == d.id) || (*b == node_id && *a == d.id))
        })
        .map(|d| d.id.clone())
        .ok_or_else(|| RouteError::BadNextHop(via.to_string(), node_id.clone()))?;
    let mut hops = Vec::with_capacity(segments.len());
    for s in segments {
        let hop = parse_hop(Tok { col: 1, text: s }).map_err(|_| RouteError::UnknownSegment(s.clone()))?;
        if !cfg.sids.iter().any(|d| d.address == hop.sid) {
            return Err(RouteError::UnknownSegment(s.clone()));
        }
        hops.push(hop);
    }
    if hops.is_empty() {
        return Err(RouteError::Invalid("encap needs at least one segment".into()));
    }
    let chain = VnfChain {
        chain_id: format!("seg6:{prefix}"),
        segments: hops,
        ingress_source: source,
        direction: Direction::Unidirectional,
    };
    let rule = RuleDecl {
        node: node_id.clone(),
        prefix,
        chain: chain.chain_id.clone(),
    };
    let route = RouteDecl {
        node: node_id.clone(),
        prefix,
        next_hop,
    };
    let render = |chain_id: &str| {
        let mut f = String::new();
        let _ = write!(
            f,
            "[routes]\n{} {} {}\n\n[chains]\n{chain_id} uni {source}",
            route.node, route.prefix, route.next_hop
        );
        for h in &chain.segments {
            let _ = write!(f, " {}", h.sid);
            if let Some(i) = h.interface {
                let _ = write!(f, "@{i}");
            }
        }
        let _ = write!(f, "\n\n[rules]\n{} {} {chain_id}\n", rule.node, rule.prefix);
        f
    };

    let existing_rule = cfg.rules.iter().find(|r| r.node == node_id && r.prefix == prefix);
    if let Some(r) = existing_rule {
        let same_chain = cfg.chains.iter().any(|c| {
            c.chain_id == r.chain
                && c.segments == chain.segments
                && c.ingress_source == chain.ingress_source
                && c.direction == chain.direction
        });
        let same_route = cfg.routes.contains(&route);
        if same_chain && same_route {
            return Ok(RouteAdded {
                node: node_id,
                chain_id: r.chain.clone(),
                changed: false,
                fragment: render(&r.chain),
            });
        }
        return Err(RouteError::RouteExists(prefix, node_id));
    }
    let fragment = render(&chain.chain_id);
    let mut next = cfg.clone();
    next.chains.retain(|c| c.chain_id != chain.chain_id);
    next.chains.push(chain.clone());
    next.rules.push(rule);
    if !next.routes.iter().any(|r| r.node == node_id && r.prefix == prefix) {
        next.routes.push(route);
    } else if !next.routes.contains(&route) {
        return Err(RouteError::RouteExists(prefix, node_id));
    }
    next.validate().map_err(|e| RouteError::Invalid(e.to_string()))?;
    *cfg = next;
    Ok(RouteAdded {
        node: node_id,
        chain_id: chain.chain_id,
        changed: true,
        fragment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "\
[nodes]
A ingress a::1
B nfv b::1
C egress c::1

[links]
A B
B C

[routes]
A c::/64 B
B c::/64 C

[sids]
b::2 unaware B
c::1 egress C

[vnfs]
b::2 pass

[chains]
k uni a::1 b::2 c::1

[rules]
A c::/64 k
";

    #[test]
    fn tokenizer_columns() {
        let t = tokenize("  ab  c");
        assert_eq!((t[0].col, t[0].text), (3, "ab"));
        assert_eq!((t[1].col, t[1].text), (7, "c"));
    }

    #[test]
    fn parses_and_builds() {
        let cfg = ScenarioConfig::parse(SMALL).unwrap();
        assert_eq!(cfg.nodes.len(), 3);
        assert_eq!(cfg.chains[0].addresses().len(), 2);
        let net = cfg.build_network().unwrap();
        assert!(net.registry().chain("k").is_some());
    }

    #[test]
    fn text_round_trip() {
        let cfg = ScenarioConfig::parse(SMALL).unwrap();
        let again = ScenarioConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = ScenarioConfig::parse("[nodes]\nA ingress zz\n[bogus]\n").unwrap_err();
        let ConfigError::Parse(issues) = err else { panic!() };
        assert_eq!(issues.len(), 2);
        assert_eq!((issues[0].line, issues[0].column), (2, 11));
        assert_eq!(issues[1].line, 3);
    }

    #[test]
    fn validation_collects_everything() {
        let text = SMALL.replace("A c::/64 k", "B c::/64 nope");
        let err = ScenarioConfig::parse(&text).unwrap().validate().unwrap_err();
        let ConfigError::Invalid(list) = err else { panic!() };
        assert_eq!(list.len(), 2, "{list:?}");
    }

    #[test]
    fn rates_with_suffixes() {
        assert_eq!(parse_rate("12k"), Ok(12_000.0));
        assert_eq!(parse_rate("9kpps"), Ok(9_000.0));
        assert_eq!(parse_rate("500"), Ok(500.0));
        assert!(parse_rate("-1").is_err());
    }

    #[test]
    fn route_add_is_idempotent() {
        let mut cfg = ScenarioConfig::parse(SMALL).unwrap();
        let segs = vec!["c::1".to_string()];
        let first = route_add(&mut cfg, "c::5/128", "b::1", &segs, None).unwrap();
        assert!(first.changed);
        let again = route_add(&mut cfg, "c::5/128", "b::1", &segs, None).unwrap();
        assert!(!again.changed);
        assert_eq!(first.fragment, again.fragment);
        let other = vec!["b::2".to_string(), "c::1".to_string()];
        assert_eq!(
            route_add(&mut cfg, "c::5/128", "b::1", &other, None),
            Err(RouteError::RouteExists("c::5/128".parse().unwrap(), "A".into()))
        );
        assert!(matches!(
            route_add(&mut cfg, "c::6/128", "c::1", &segs, None),
            Err(RouteError::BadNextHop(..))
        ));
        assert!(matches!(
            route_add(&mut cfg, "c::6/128", "b::1", &other, None),
            Err(RouteError::Invalid(_))
        ));
        assert!(matches!(
            route_add(&mut cfg, "c::6/128", "b::1", &["d::9".to_string()], None),
            Err(RouteError::UnknownSegment(_))
        ));
        assert!(matches!(route_add(&mut cfg, "c::/999", "b::1", &segs, None), Err(RouteError::BadPrefix(_))));
    }
}
