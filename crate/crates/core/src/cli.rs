// SPDX-License-Identifier: Apache-2.0

//! Command-line interface. [`main_with`] is the whole program minus the
//! process boundary, so tests can drive it with in-memory streams.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::Ipv6Addr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::bench::{run_scenario, summary_table, write_points_csv, write_regression_csv, Scenario, SweepReport};
use crate::config::{load_config, parse_rate, route_add, ConfigError, RouteError, ScenarioConfig};
use crate::sim::{inject, run_flow, Flow, InjectOptions, Outcome};
use crate::trace::TraceLevel;
use crate::wire::hexdump;

pub mod exit {
    pub const OK: i32 = 0;
    /// Bad command-line usage (clap's own code).
    pub const USAGE: i32 = 2;
    pub const PARSE: i32 = 3;
    pub const INVALID: i32 = 4;
    pub const IO: i32 = 5;
    /// The run finished but some packets were dropped.
    pub const NOT_DELIVERED: i32 = 6;
    pub const SIM: i32 = 7;
    pub const BENCH: i32 = 8;
    pub const ROUTE: i32 = 9;
}

#[derive(Debug, Parser)]
#[command(name = "segchain", version, about = "SRv6 service chaining simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceMode {
    Full,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioChoice {
    Aware,
    Unaware,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a scenario file.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Manage encap routes.
    Route {
        #[command(subcommand)]
        action: RouteCmd,
    },
    /// Push a flow through the network and report what happened.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Flow source; defaults to the bench flow of the config.
        #[arg(long)]
        src: Option<Ipv6Addr>,
        #[arg(long)]
        dst: Option<Ipv6Addr>,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        payload: Option<usize>,
        #[arg(long, value_enum, default_value_t = TraceMode::Full)]
        trace: TraceMode,
        /// Write the trace as JSON lines here.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Sweep offered rates and fit the utilization line.
    Bench {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ScenarioChoice::Both)]
        scenario: ScenarioChoice,
        /// Comma-separated rates, e.g. `1k,3k,6k` or `1000,3000`.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<String>>,
        #[arg(long)]
        runs: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Directory for sweep.csv and regression.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hexdump one packet on every link it crosses.
    Trace {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(long)]
        src: Option<Ipv6Addr>,
        #[arg(long)]
        dst: Option<Ipv6Addr>,
        #[arg(long, default_value_t = 64)]
        payload: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum RouteCmd {
    /// `route add PREFIX via NEXTHOP encap seg SID[,SID...]`
    Add {
        #[arg(short, long)]
        config: PathBuf,
        /// Ingress edge node; needed when there is more than one.
        #[arg(long)]
        node: Option<String>,
        /// Save the updated scenario back to the config file.
        #[arg(long)]
        write: bool,
        #[arg(required = true, num_args = 1..)]
        spec: Vec<String>,
    },
}

/// Error carrying its exit code.
struct Fail(i32, String);

impl From<ConfigError> for Fail {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => exit::IO,
            ConfigError::Parse(_) => exit::PARSE,
            ConfigError::Invalid(_) => exit::INVALID,
        };
        Fail(code, e.to_string())
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Fail {
    Fail(exit::IO, format!("{}: {e}", path.display()))
}

fn load_valid(path: &Path) -> Result<ScenarioConfig, Fail> {
    let cfg = load_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn pick_flow(cfg: &ScenarioConfig, src: Option<Ipv6Addr>, dst: Option<Ipv6Addr>) -> Result<Flow, Fail> {
    let (s, d) = match (src, dst, cfg.bench.flow) {
        (Some(s), Some(d), _) => (s, d),
        (s, d, Some((bs, bd))) => (s.unwrap_or(bs), d.unwrap_or(bd)),
        _ => return Err(Fail(exit::USAGE, "give --src and --dst (the config declares no flow)".into())),
    };
    Ok(Flow::new(s, d, 1))
}

/// Runs the CLI with explicit arguments and streams; returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if code == exit::OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(Fail(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, Fail> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load_valid(&config)?;
            cfg.build_network()?;
            let _ = writeln!(
                out,
                "ok: {} nodes, {} links, {} SIDs, {} chains, {} rules",
                cfg.nodes.len(),
                cfg.links.len(),
                cfg.sids.len(),
                cfg.chains.len(),
                cfg.rules.len()
            );
            Ok(exit::OK)
        }
        Command::Route {
            action: RouteCmd::Add {
                config,
                node,
                write,
                spec,
            },
        } => cmd_route_add(&config, node.as_deref(), write, &spec, out),
        Command::Run {
            config,
            src,
            dst,
            count,
            payload,
            trace,
            trace_out,
        } => {
            let cfg = load_valid(&config)?;
            let net = cfg.build_network()?;
            let mut flow = pick_flow(&cfg, src, dst)?;
            flow.count = count;
            flow.payload_size = payload.unwrap_or(cfg.bench.payload);
            let level = match trace {
                TraceMode::Full => TraceLevel::Full,
                TraceMode::Terminal => TraceLevel::TerminalsOnly,
            };
            let summary = run_flow(&net, &flow, level).map_err(|e| Fail(exit::SIM, e.to_string()))?;
            let _ = writeln!(
                out,
                "sent {} delivered {} dropped {} modified {}",
                summary.sent, summary.delivered, summary.dropped, summary.modified
            );
            for (reason, n) in &summary.drop_reasons {
                let _ = writeln!(out, "  drop {reason}: {n}");
            }
            for (node, ledger) in &summary.ledgers {
                let t = ledger.total();
                let _ = writeln!(
                    out,
                    "  cost {node}: f={} d={} e={} total={}",
                    t.f,
                    t.d,
                    t.e,
                    ledger.total_cost()
                );
            }
            match trace_out {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| io_fail(&path, e))?;
                    summary
                        .trace
                        .write_jsonl(std::io::BufWriter::new(file))
                        .map_err(|e| io_fail(&path, e))?;
                }
                None if count <= 16 => {
                    let _ = out.write_all(summary.trace.to_jsonl().as_bytes());
                }
                None => {}
            }
            Ok(if summary.delivered == summary.sent {
                exit::OK
            } else {
                exit::NOT_DELIVERED
            })
        }
        Command::Bench {
            config,
            scenario,
            rates,
            runs,
            seed,
            noise,
            out: out_dir,
        } => {
            let cfg = load_valid(&config)?;
            let mut sweep = cfg.bench.sweep_config();
            if let Some(list) = rates {
                sweep.rates_pps = list
                    .iter()
                    .map(|r| parse_rate(r))
                    .collect::<Result<_, _>>()
                    .map_err(|e| Fail(exit::USAGE, e))?;
            }
            if let Some(r) = runs {
                sweep.runs = r;
            }
            if let Some(s) = seed {
                sweep.seed = s;
            }
            if let Some(n) = noise {
                sweep.noise = n;
            }
            let chosen: &[Scenario] = match scenario {
                ScenarioChoice::Aware => &[Scenario::SrAware],
                ScenarioChoice::Unaware => &[Scenario::SrUnaware],
                ScenarioChoice::Both => &Scenario::ALL,
            };
            let reports = chosen
                .iter()
                .map(|s| run_scenario(&cfg, *s, &sweep))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Fail(exit::BENCH, e.to_string()))?;
            print_bench(&reports, out);
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir).map_err(|e| io_fail(&dir, e))?;
                let sweep_path = dir.join("sweep.csv");
                let reg_path = dir.join("regression.csv");
                let f = fs::File::create(&sweep_path).map_err(|e| io_fail(&sweep_path, e))?;
                write_points_csv(&reports, f).map_err(|e| Fail(exit::IO, e.to_string()))?;
                let f = fs::File::create(&reg_path).map_err(|e| io_fail(&reg_path, e))?;
                write_regression_csv(&reports, f).map_err(|e| Fail(exit::IO, e.to_string()))?;
                let _ = writeln!(out, "wrote {} and {}", sweep_path.display(), reg_path.display());
            }
            if let Some(bad) = reports.iter().find_map(|r| r.regression.as_ref().err()) {
                return Err(Fail(exit::BENCH, format!("regression refused: {bad}")));
            }
            Ok(exit::OK)
        }
        Command::Trace {
            config,
            src,
            dst,
            payload,
        } => {
            let cfg = load_valid(&config)?;
            let net = cfg.build_network()?;
            let mut flow = pick_flow(&cfg, src, dst)?;
            flow.payload_size = payload;
            let ingress = flow
                .ingress_node(&net)
                .map_err(|e| Fail(exit::SIM, e.to_string()))?
                .to_string();
            let result = inject(
                &net,
                &ingress,
                flow.packet(0),
                InjectOptions {
                    level: TraceLevel::Full,
                    capture_wire: true,
                },
            )
            .map_err(|e| Fail(exit::SIM, e.to_string()))?;
            for cap in &result.captures {
                let _ = writeln!(out, "{} -> {} ({} bytes)", cap.from, cap.to, cap.bytes.len());
                let _ = writeln!(out, "{}", hexdump(&cap.bytes));
            }
            match &result.outcome {
                Outcome::Delivered { node, .. } => {
                    let _ = writeln!(out, "delivered at {node}");
                    Ok(exit::OK)
                }
                Outcome::Dropped { node, reason } => {
                    let _ = writeln!(out, "dropped at {node}: {reason}");
                    Ok(exit::NOT_DELIVERED)
                }
            }
        }
    }
}

fn print_bench(reports: &[SweepReport], out: &mut dyn Write) {
    let _ = writeln!(
        out,
        "synthetic capacity model: utilization is modeled, not measured on a host CPU"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "\n{}: cost/packet {:.3}, capacity {:.1}, k0 {:.2}%, knee {:.0} pps",
            r.scenario.label(),
            r.per_packet_cost,
            r.model.capacity,
            r.model.baseline_overhead_k0,
            r.knee_rate()
        );
        let _ = writeln!(out, "  {:>9} {:>9} {:>9}  region", "rate_pps", "S", "U%");
        for (p, reg) in r.points.iter().zip(&r.regions) {
            let _ = writeln!(
                out,
                "  {:>9.0} {:>9.4} {:>9.2}  {}",
                p.rate_pps, p.success, p.utilization, reg
            );
        }
    }
    let _ = writeln!(out);
    let _ = write!(out, "{}", summary_table(reports));
}

fn cmd_route_add(
    config: &Path,
    node: Option<&str>,
    write: bool,
    spec: &[String],
    out: &mut dyn Write,
) -> Result<i32, Fail> {
    let usage = || {
        Fail(
            exit::USAGE,
            "expected: route add PREFIX via NEXTHOP encap seg SID[,SID...]".into(),
        )
    };
    let [prefix, via_kw, via, encap_kw, seg_kw, rest @ ..] = spec else {
        return Err(usage());
    };
    if via_kw != "via" || encap_kw != "encap" || seg_kw != "seg" || rest.is_empty() {
        return Err(usage());
    }
    let segments: Vec<String> = rest
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let mut cfg = load_valid(config)?;
    let added = route_add(&mut cfg, prefix, via, &segments, node).map_err(|e| {
        let code = match e {
            RouteError::Invalid(_) => exit::INVALID,
            _ => exit::ROUTE,
        };
        Fail(code, e.to_string())
    })?;
    let _ = write!(out, "{}", added.fragment);
    if !added.changed {
        let _ = writeln!(out, "# route already present on {}", added.node);
    }
    if write && added.changed {
        fs::write(config, cfg.to_text()).map_err(|e| io_fail(config, e))?;
    }
    Ok(exit::OK)
}
