// SPDX-License-Identifier: Apache-2.0

//! Python bindings: packets, encapsulation, the cost model, line fitting
//! and whole scenarios (load, run, bench).

use std::net::Ipv6Addr;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};

use segchain_core::bench::{self, Scenario};
use segchain_core::chain::VnfChain;
use segchain_core::config::{load_config, parse_rate, ScenarioConfig};
use segchain_core::dataplane::{self, UnitCosts, VnfKind};
use segchain_core::sim::{self, Flow, InjectOptions, Network, Outcome};
use segchain_core::trace::TraceLevel;
use segchain_core::wire;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn addr(s: &str) -> PyResult<Ipv6Addr> {
    s.parse().map_err(|_| PyValueError::new_err(format!("bad IPv6 address {s:?}")))
}

fn vnf_kind(kind: &str) -> PyResult<VnfKind> {
    match kind {
        "aware" => Ok(VnfKind::SrAware),
        "unaware" => Ok(VnfKind::SrUnaware),
        _ => Err(PyValueError::new_err(format!("kind must be 'aware' or 'unaware', got {kind:?}"))),
    }
}

/// An IPv6 packet with an optional SRH.
#[pyclass(name = "Packet", module = "segchain", eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyPacket {
    inner: wire::Packet,
}

#[pymethods]
impl PyPacket {
    /// A UDP packet with the given data.
    #[staticmethod]
    #[pyo3(signature = (src, dst, data, src_port = 5001, dst_port = 5201))]
    fn udp(src: &str, dst: &str, data: &[u8], src_port: u16, dst_port: u16) -> PyResult<Self> {
        Ok(Self {
            inner: wire::Packet::udp(addr(src)?, addr(dst)?, src_port, dst_port, data),
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: wire::parse_packet(data).map_err(err)?,
        })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let b = wire::serialize_packet(&self.inner).map_err(err)?;
        Ok(PyBytes::new(py, &b))
    }

    #[getter]
    fn src(&self) -> String {
        self.inner.header.src.to_string()
    }

    #[getter]
    fn dst(&self) -> String {
        self.inner.header.dst.to_string()
    }

    #[getter]
    fn hop_limit(&self) -> u8 {
        self.inner.header.hop_limit
    }

    #[getter]
    fn next_header(&self) -> u8 {
        self.inner.header.next_header
    }

    #[getter]
    fn segments_left(&self) -> Option<u8> {
        self.inner.srh.as_ref().map(|s| s.segments_left)
    }

    /// Segment list in wire order (last segment first), or None.
    #[getter]
    fn segment_list(&self) -> Option<Vec<String>> {
        self.inner
            .srh
            .as_ref()
            .map(|s| s.segment_list.iter().map(|a| a.to_string()).collect())
    }

    #[getter]
    fn payload<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.payload)
    }

    fn hexdump(&self) -> PyResult<String> {
        Ok(wire::hexdump(&wire::serialize_packet(&self.inner).map_err(err)?))
    }

    fn __len__(&self) -> usize {
        self.inner.wire_len()
    }

    fn __repr__(&self) -> String {
        match &self.inner.srh {
            Some(s) => format!(
                "Packet({} -> {}, segments_left={}, {} bytes)",
                self.inner.header.src,
                self.inner.header.dst,
                s.segments_left,
                self.inner.wire_len()
            ),
            None => format!(
                "Packet({} -> {}, {} bytes)",
                self.inner.header.src,
                self.inner.header.dst,
                self.inner.wire_len()
            ),
        }
    }
}

/// Wraps `packet` for the path `segments` (travel order, egress last).
#[pyfunction]
fn encapsulate(packet: &PyPacket, segments: Vec<String>, source: &str) -> PyResult<PyPacket> {
    let path = segments.iter().map(|s| addr(s)).collect::<PyResult<Vec<_>>>()?;
    let chain = VnfChain::new("py", path, addr(source)?);
    Ok(PyPacket {
        inner: dataplane::encapsulate(&packet.inner, &chain).map_err(err)?,
    })
}

#[pyfunction]
fn decapsulate(packet: &PyPacket) -> PyResult<PyPacket> {
    Ok(PyPacket {
        inner: dataplane::decapsulate(&packet.inner).map_err(err)?,
    })
}

/// Per-packet cost of a chain of `n` VNFs on one node.
#[pyfunction]
#[pyo3(signature = (n, kind, f = 1.0, d = 0.5, e = 0.5))]
fn predicted_cost(n: u64, kind: &str, f: f64, d: f64, e: f64) -> PyResult<f64> {
    Ok(dataplane::predicted_cost(n, vnf_kind(kind)?, &UnitCosts { f, d, e }))
}

/// `(f, d, e)` operation counts for a chain of `n` VNFs on one node.
#[pyfunction]
fn predicted_counts(n: u64, kind: &str) -> PyResult<(u64, u64, u64)> {
    let c = dataplane::predicted_counts(n, vnf_kind(kind)?);
    Ok((c.f, c.d, c.e))
}

/// Least-squares `(m, k, r_squared)` of utilization on rate in kpps.
#[pyfunction]
fn fit_linear(rates_pps: Vec<f64>, utilization: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if rates_pps.len() != utilization.len() {
        return Err(PyValueError::new_err("rates and utilization differ in length"));
    }
    let xs: Vec<f64> = rates_pps.iter().map(|r| r / 1000.0).collect();
    bench::ols(&xs, &utilization).map_err(err)
}

/// A loaded and validated scenario file.
#[pyclass(name = "Scenario", module = "segchain")]
struct PyScenario {
    cfg: ScenarioConfig,
    net: Network,
}

impl PyScenario {
    fn from_cfg(cfg: ScenarioConfig) -> PyResult<Self> {
        let net = cfg.build_network().map_err(err)?;
        Ok(Self { cfg, net })
    }

    fn flow(&self, src: Option<&str>, dst: Option<&str>) -> PyResult<Flow> {
        let (ds, dd) = match self.cfg.bench.flow {
            Some((s, d)) => (Some(s), Some(d)),
            None => (None, None),
        };
        let s = src.map(addr).transpose()?.or(ds);
        let d = dst.map(addr).transpose()?.or(dd);
        match (s, d) {
            (Some(s), Some(d)) => Ok(Flow::new(s, d, 1)),
            _ => Err(PyValueError::new_err("give src and dst: the scenario declares no flow")),
        }
    }
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_cfg(load_config(std::path::Path::new(path)).map_err(err)?)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Self::from_cfg(ScenarioConfig::parse(text).map_err(err)?)
    }

    fn to_text(&self) -> String {
        self.cfg.to_text()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.cfg.nodes.iter().map(|n| n.id.clone()).collect()
    }

    #[getter]
    fn chains(&self) -> Vec<String> {
        self.cfg.chains.iter().map(|c| c.chain_id.clone()).collect()
    }

    /// Walks one packet through the network.
    #[pyo3(signature = (packet, ingress = None))]
    fn inject<'py>(&self, py: Python<'py>, packet: &PyPacket, ingress: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let ingress = match ingress {
            Some(i) => i.to_string(),
            None => self
                .net
                .owner_of(packet.inner.header.src)
                .map(|n| n.node_id.clone())
                .ok_or_else(|| PyValueError::new_err("no node owns the source address; pass ingress"))?,
        };
        let r = sim::inject(&self.net, &ingress, packet.inner.clone(), InjectOptions::default()).map_err(err)?;
        let out = PyDict::new(py);
        match r.outcome {
            Outcome::Delivered { packet, node } => {
                out.set_item("outcome", "delivered")?;
                out.set_item("node", node)?;
                out.set_item("packet", PyPacket { inner: packet })?;
            }
            Outcome::Dropped { node, reason } => {
                out.set_item("outcome", "dropped")?;
                out.set_item("node", node)?;
                out.set_item("reason", reason.to_string())?;
            }
        }
        let steps: Vec<(String, String)> = r
            .trace
            .steps()
            .into_iter()
            .map(|(n, e)| (n.to_string(), format!("{e:?}")))
            .collect();
        out.set_item("steps", steps)?;
        Ok(out)
    }

    /// Sends `count` packets and returns counters, costs and the trace.
    #[pyo3(signature = (src = None, dst = None, count = 1, payload = None, terminal_only = false))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        src: Option<&str>,
        dst: Option<&str>,
        count: u64,
        payload: Option<usize>,
        terminal_only: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut flow = self.flow(src, dst)?;
        flow.count = count;
        flow.payload_size = payload.unwrap_or(self.cfg.bench.payload);
        let level = if terminal_only {
            TraceLevel::TerminalsOnly
        } else {
            TraceLevel::Full
        };
        let s = sim::run_flow(&self.net, &flow, level).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("sent", s.sent)?;
        out.set_item("delivered", s.delivered)?;
        out.set_item("dropped", s.dropped)?;
        out.set_item("modified", s.modified)?;
        out.set_item("drop_reasons", s.drop_reasons.clone())?;
        let costs = PyDict::new(py);
        for (node, ledger) in &s.ledgers {
            let t = ledger.total();
            costs.set_item(node, (t.f, t.d, t.e, ledger.total_cost()))?;
        }
        out.set_item("costs", costs)?;
        out.set_item("trace", s.trace.to_jsonl())?;
        Ok(out)
    }

    /// Rate sweep for `scenario` ('aware' or 'unaware').
    #[pyo3(signature = (scenario = "aware", rates = None, runs = None, seed = None, noise = None))]
    fn bench<'py>(
        &self,
        py: Python<'py>,
        scenario: &str,
        rates: Option<Vec<String>>,
        runs: Option<u32>,
        seed: Option<u64>,
        noise: Option<f64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let sc: Scenario = scenario.parse().map_err(err)?;
        let mut sweep = self.cfg.bench.sweep_config();
        if let Some(r) = rates {
            sweep.rates_pps = r.iter().map(|x| parse_rate(x)).collect::<Result<_, _>>().map_err(err)?;
        }
        sweep.runs = runs.unwrap_or(sweep.runs);
        sweep.seed = seed.unwrap_or(sweep.seed);
        sweep.noise = noise.unwrap_or(sweep.noise);
        let r = bench::run_scenario(&self.cfg, sc, &sweep).map_err(err)?;
        let out = PyDict::new(py);
        out.set_item("label", sc.label())?;
        out.set_item("per_packet_cost", r.per_packet_cost)?;
        out.set_item("capacity", r.model.capacity)?;
        out.set_item("k0", r.model.baseline_overhead_k0)?;
        out.set_item("knee_pps", r.knee_rate())?;
        let points = PyList::empty(py);
        for (p, region) in r.points.iter().zip(&r.regions) {
            let d = PyDict::new(py);
            d.set_item("rate_pps", p.rate_pps)?;
            d.set_item("success", p.success)?;
            d.set_item("utilization", p.utilization)?;
            d.set_item("utilization_ci", p.utilization_ci)?;
            d.set_item("region", region.as_str())?;
            points.append(d)?;
        }
        out.set_item("points", points)?;
        match &r.regression {
            Ok(fit) => {
                out.set_item("m", fit.m)?;
                out.set_item("k", fit.k)?;
                out.set_item("r_squared", fit.r_squared)?;
            }
            Err(e) => out.set_item("regression_error", e.to_string())?,
        }
        Ok(out)
    }
}

#[pymodule]
fn segchain(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPacket>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(encapsulate, m)?)?;
    m.add_function(wrap_pyfunction!(decapsulate, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_cost, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_counts, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    Ok(())
}
