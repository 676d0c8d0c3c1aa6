// SPDX-License-Identifier: Apache-2.0

//! Rate sweeps over a synthetic capacity model.
//!
//! Host CPU time is replaced by a declared capacity in cost units per
//! second. For an offered rate `R` and a per-packet cost `c` (taken from the
//! simulator's cost ledger) the demand is `D = c * R` and
//!
//! ```text
//! U(R) = min(100, k0 + 100 * D / capacity)          [percent]
//! S(R) = min(1, capacity * (100 - k0) / 100 / D)
//! ```
//!
//! so both saturate at the same knee. Utilization samples get seeded
//! multiplicative Gaussian noise, truncated to [0, 100].

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::chain::{NodeId, SidKind};
use crate::config::ScenarioConfig;
use crate::sim::{run_flow, Flow, Network, SimError};
use crate::trace::TraceLevel;

/// z-value for a two-sided 95% normal confidence interval.
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("invalid capacity model: {0}")]
    InvalidModel(String),
    #[error("invalid sweep parameter: {0}")]
    InvalidParameter(String),
    #[error("sweep has no rates")]
    EmptySweep,
    #[error("regression needs at least 2 no-loss points, got {0}")]
    InsufficientPoints(usize),
    #[error("regression needs at least 2 distinct rates")]
    DegenerateX,
    #[error("node {0:?} spent nothing on the flow")]
    NoCostRecorded(NodeId),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Scenario(String),
}

/// The two measured configurations: plain SR processing with SR-aware
/// VNFs, and the connector hook for SR-unaware VNFs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    SrAware,
    SrUnaware,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::SrAware, Scenario::SrUnaware];

    /// Label used in reports and CSV files.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::SrAware => "SR kernel",
            Scenario::SrUnaware => "SR kernel + hook",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Scenario::SrAware => "aware",
            Scenario::SrUnaware => "unaware",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aware" | "sr-aware" => Ok(Scenario::SrAware),
            "unaware" | "sr-unaware" | "hook" => Ok(Scenario::SrUnaware),
            _ => Err(format!("unknown scenario {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityModel {
    /// Cost units per second the node can process.
    pub capacity: f64,
    /// Utilization percent at zero traffic.
    pub baseline_overhead_k0: f64,
}

impl CapacityModel {
    pub fn new(capacity: f64, baseline_overhead_k0: f64) -> Result<Self, BenchError> {
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(BenchError::InvalidModel(format!("capacity {capacity} must be > 0")));
        }
        if !(0.0..100.0).contains(&baseline_overhead_k0) {
            return Err(BenchError::InvalidModel(format!(
                "baseline overhead {baseline_overhead_k0} outside [0, 100)"
            )));
        }
        Ok(Self {
            capacity,
            baseline_overhead_k0,
        })
    }

    /// The model under which a node spending `per_packet_cost` per packet
    /// shows `U(R) = slope * R + intercept` with `R` in kpps.
    pub fn calibrated(per_packet_cost: f64, slope_per_kpps: f64, intercept: f64) -> Result<Self, BenchError> {
        if !(slope_per_kpps > 0.0 && per_packet_cost > 0.0) {
            return Err(BenchError::InvalidModel(format!(
                "slope {slope_per_kpps} and per-packet cost {per_packet_cost} must be > 0"
            )));
        }
        Self::new(100.0 * 1000.0 * per_packet_cost / slope_per_kpps, intercept)
    }

    /// Capacity left over after the baseline overhead.
    pub fn available(&self) -> f64 {
        self.capacity * (100.0 - self.baseline_overhead_k0) / 100.0
    }

    /// Noiseless utilization percent at demand `demand` cost units/s.
    pub fn utilization(&self, demand: f64) -> f64 {
        (self.baseline_overhead_k0 + 100.0 * demand / self.capacity).min(100.0)
    }

    pub fn success(&self, demand: f64) -> f64 {
        if demand <= 0.0 {
            1.0
        } else {
            (self.available() / demand).min(1.0)
        }
    }

    /// Rate in pps at which the node saturates.
    pub fn knee_rate(&self, per_packet_cost: f64) -> f64 {
        self.available() / per_packet_cost
    }
}

/// Averages of one rate over several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub rate_pps: f64,
    pub success: f64,
    /// Always `1 - success`.
    pub loss: f64,
    pub utilization: f64,
    pub runs: u32,
    /// 95% confidence half-widths.
    pub success_ci: f64,
    pub utilization_ci: f64,
}

fn mean_and_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z_95 * (var / n).sqrt())
}

/// Evaluates one offered rate `runs` times. `noise` is the relative
/// standard deviation of the utilization measurement.
pub fn evaluate_point<R: Rng + ?Sized>(
    model: &CapacityModel,
    per_packet_cost: f64,
    rate_pps: f64,
    noise: f64,
    runs: u32,
    rng: &mut R,
) -> Result<RatePoint, BenchError> {
    if rate_pps.is_nan() || rate_pps <= 0.0 {
        return Err(BenchError::InvalidParameter(format!("rate {rate_pps} must be > 0")));
    }
    if runs == 0 {
        return Err(BenchError::InvalidParameter("runs must be >= 1".into()));
    }
    if noise.is_nan() || noise < 0.0 {
        return Err(BenchError::InvalidParameter(format!("noise {noise} must be >= 0")));
    }
    let demand = per_packet_cost * rate_pps;
    let base_u = model.utilization(demand);
    let success = model.success(demand);
    let mut u_samples = Vec::with_capacity(runs as usize);
    let mut s_samples = Vec::with_capacity(runs as usize);
    for _ in 0..runs {
        let u = if noise > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            (base_u * (1.0 + noise * z)).clamp(0.0, 100.0)
        } else {
            base_u
        };
        u_samples.push(u);
        s_samples.push(success);
    }
    let (utilization, utilization_ci) = mean_and_ci(&u_samples);
    let (success, success_ci) = mean_and_ci(&s_samples);
    Ok(RatePoint {
        rate_pps,
        success,
        loss: 1.0 - success,
        utilization,
        runs,
        success_ci,
        utilization_ci,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    NoLoss,
    Transition,
    Saturation,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::NoLoss => "no-loss",
            Region::Transition => "transition",
            Region::Saturation => "saturation",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Success ratio at or above which a point counts as lossless.
    pub success: f64,
    /// Utilization percent at or above which the node counts as saturated.
    pub utilization: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            success: 0.999,
            utilization: 99.0,
        }
    }
}

pub fn region_of(point: &RatePoint, t: &Thresholds) -> Region {
    let lossless = point.success >= t.success;
    let saturated = point.utilization >= t.utilization;
    match (lossless, saturated) {
        (true, false) => Region::NoLoss,
        (false, true) => Region::Saturation,
        _ => Region::Transition,
    }
}

/// Labels each point of a sweep.
pub fn classify_regions(points: &[RatePoint], t: &Thresholds) -> Result<Vec<Region>, BenchError> {
    if points.is_empty() {
        return Err(BenchError::EmptySweep);
    }
    Ok(points.iter().map(|p| region_of(p, t)).collect())
}

/// Least-squares fit of utilization on rate (kpps).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    /// Percent per kpps.
    pub m: f64,
    /// Percent.
    pub k: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64), BenchError> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return Err(BenchError::InsufficientPoints(n));
    }
    let nf = n as f64;
    let mx = xs[..n].iter().sum::<f64>() / nf;
    let my = ys[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(BenchError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r_squared))
}

/// Fits `U = m * R + k` (R in kpps) over the given points.
pub fn fit_linear(points: &[RatePoint]) -> Result<RegressionResult, BenchError> {
    let xs: Vec<f64> = points.iter().map(|p| p.rate_pps / 1000.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.utilization).collect();
    let (m, k, r_squared) = ols(&xs, &ys)?;
    Ok(RegressionResult {
        m,
        k,
        r_squared,
        points_used: points.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub rates_pps: Vec<f64>,
    pub runs: u32,
    pub seed: u64,
    /// Relative standard deviation of utilization samples.
    pub noise: f64,
    pub thresholds: Thresholds,
    /// Packets pushed through the simulator per rate to measure the cost.
    pub packets_per_point: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            rates_pps: [1, 3, 6, 9, 12, 13].iter().map(|k| f64::from(*k) * 1000.0).collect(),
            runs: 30,
            seed: 1,
            noise: 0.01,
            thresholds: Thresholds::default(),
            packets_per_point: 100,
        }
    }
}

/// What to measure in one sweep.
#[derive(Debug, Clone)]
pub struct SweepScenario {
    pub scenario: Scenario,
    pub flow: Flow,
    /// Node whose cost ledger is charged against the capacity model.
    pub measured_node: NodeId,
    pub model: CapacityModel,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub scenario: Scenario,
    pub model: CapacityModel,
    pub per_packet_cost: f64,
    pub points: Vec<RatePoint>,
    pub regions: Vec<Region>,
    /// Fit over the no-loss points only.
    pub regression: Result<RegressionResult, BenchError>,
}

impl SweepReport {
    /// Rate at which the model predicts saturation.
    pub fn knee_rate(&self) -> f64 {
        self.model.knee_rate(self.per_packet_cost)
    }

    pub fn no_loss_points(&self) -> Vec<RatePoint> {
        self.points
            .iter()
            .zip(&self.regions)
            .filter(|(_, r)| **r == Region::NoLoss)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

/// Generator for rate `index` of a sweep; independent of evaluation order.
pub fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean per-packet cost the measured node spends on the scenario's flow.
pub fn measure_per_packet_cost(
    network: &Network,
    flow: &Flow,
    measured_node: &str,
) -> Result<f64, BenchError> {
    let summary = run_flow(network, flow, TraceLevel::TerminalsOnly)?;
    let cost = summary
        .ledger(measured_node)
        .map(|l| l.total_cost())
        .filter(|c| *c > 0.0)
        .ok_or_else(|| BenchError::NoCostRecorded(measured_node.to_string()))?;
    Ok(cost / summary.sent as f64)
}

/// Sweeps the offered rate for one scenario.
pub fn run_sweep(network: &Network, scenario: &SweepScenario, sweep: &SweepConfig) -> Result<SweepReport, BenchError> {
    if sweep.rates_pps.is_empty() {
        return Err(BenchError::EmptySweep);
    }
    let mut rates = sweep.rates_pps.clone();
    rates.sort_by(f64::total_cmp);
    let flow = Flow {
        count: sweep.packets_per_point.max(1),
        ..scenario.flow.clone()
    };
    let mut points = Vec::with_capacity(rates.len());
    let mut per_packet_cost = 0.0;
    for (i, &rate) in rates.iter().enumerate() {
        per_packet_cost = measure_per_packet_cost(network, &flow, &scenario.measured_node)?;
        let mut rng = point_rng(sweep.seed, i);
        points.push(evaluate_point(
            &scenario.model,
            per_packet_cost,
            rate,
            sweep.noise,
            sweep.runs,
            &mut rng,
        )?);
    }
    let regions = classify_regions(&points, &sweep.thresholds)?;
    let no_loss: Vec<RatePoint> = points
        .iter()
        .zip(&regions)
        .filter(|(_, r)| **r == Region::NoLoss)
        .map(|(p, _)| p.clone())
        .collect();
    let regression = fit_linear(&no_loss);
    Ok(SweepReport {
        scenario: scenario.scenario,
        model: scenario.model,
        per_packet_cost,
        points,
        regions,
        regression,
    })
}

/// Sweeps one scenario of a config: every VNF SID is switched to the
/// scenario's kind, the per-packet cost is measured on the bench node and
/// the declared model is resolved against it.
pub fn run_scenario(cfg: &ScenarioConfig, scenario: Scenario, sweep: &SweepConfig) -> Result<SweepReport, BenchError> {
    let kind = match scenario {
        Scenario::SrAware => SidKind::SrAware,
        Scenario::SrUnaware => SidKind::SrUnaware,
    };
    let variant = cfg.with_vnf_kind(kind);
    let cfg_err = |e: crate::config::ConfigError| BenchError::Scenario(e.to_string());
    let network = variant.build_network().map_err(cfg_err)?;
    let flow = variant.bench_flow().map_err(cfg_err)?;
    let measured_node = variant.measured_node().map_err(cfg_err)?;
    let probe = Flow {
        count: sweep.packets_per_point.max(1),
        ..flow.clone()
    };
    let cost = measure_per_packet_cost(&network, &probe, &measured_node)?;
    let model = variant.model_spec(scenario).resolve(cost)?;
    run_sweep(
        &network,
        &SweepScenario {
            scenario,
            flow,
            measured_node,
            model,
        },
        sweep,
    )
}

/// Per-rate CSV: `scenario,rate_pps,success_ratio,success_ci,utilization_pct,utilization_ci,region`.
pub fn write_points_csv<W: Write>(reports: &[SweepReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "rate_pps",
        "success_ratio",
        "success_ci",
        "utilization_pct",
        "utilization_ci",
        "region",
    ])?;
    for report in reports {
        for (p, region) in report.points.iter().zip(&report.regions) {
            w.write_record([
                report.scenario.label().to_string(),
                format!("{:.0}", p.rate_pps),
                format!("{:.6}", p.success),
                format!("{:.6}", p.success_ci),
                format!("{:.6}", p.utilization),
                format!("{:.6}", p.utilization_ci),
                region.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Regression CSV: `scenario,m,k,r_squared,n_points`. A failed fit leaves
/// the numeric columns empty.
pub fn write_regression_csv<W: Write>(reports: &[SweepReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "m", "k", "r_squared", "n_points"])?;
    for report in reports {
        let row = match &report.regression {
            Ok(r) => [
                report.scenario.label().to_string(),
                format!("{:.6}", r.m),
                format!("{:.6}", r.k),
                format!("{:.6}", r.r_squared),
                r.points_used.to_string(),
            ],
            Err(_) => [
                report.scenario.label().to_string(),
                String::new(),
                String::new(),
                String::new(),
                "0".into(),
            ],
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Table with rows `k` and `m` and one column per scenario.
pub fn summary_table(reports: &[SweepReport]) -> String {
    let mut out = String::new();
    let width = 18;
    out.push_str(&format!("{:<16}", ""));
    for r in reports {
        out.push_str(&format!("{:>width$}", r.scenario.label()));
    }
    out.push('\n');
    let cell = |r: &SweepReport, pick: fn(&RegressionResult) -> f64| match &r.regression {
        Ok(fit) => format!("{:>width$.2}", pick(fit)),
        Err(_) => format!("{:>width$}", "n/a"),
    };
    out.push_str(&format!("{:<16}", "k [%]"));
    for r in reports {
        out.push_str(&cell(r, |f| f.k));
    }
    out.push('\n');
    out.push_str(&format!("{:<16}", "m [%/kpps]"));
    for r in reports {
        out.push_str(&cell(r, |f| f.m));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless(model: &CapacityModel, cost: f64, rate: f64) -> RatePoint {
        let mut rng = point_rng(0, 0);
        evaluate_point(model, cost, rate, 0.0, 1, &mut rng).unwrap()
    }

    #[test]
    fn knee_is_where_demand_meets_capacity() {
        let model = CapacityModel::new(36_000.0, 0.0).unwrap();
        let at_knee = noiseless(&model, 3.0, 12_000.0);
        assert_eq!(at_knee.utilization, 100.0);
        assert_eq!(at_knee.success, 1.0);
        let half = noiseless(&model, 3.0, 6_000.0);
        assert_eq!(half.utilization, 50.0);
        assert_eq!(half.success, 1.0);
        let double = noiseless(&model, 3.0, 24_000.0);
        assert_eq!(double.success, 0.5);
        assert_eq!(double.loss, 0.5);
        assert_eq!(double.utilization, 100.0);
        assert_eq!(model.knee_rate(3.0), 12_000.0);
    }

    #[test]
    fn model_validation() {
        assert!(CapacityModel::new(0.0, 0.0).is_err());
        assert!(CapacityModel::new(1.0, 100.0).is_err());
        assert!(CapacityModel::new(1.0, -1.0).is_err());
        let m = CapacityModel::calibrated(3.0, 6.64, 8.9).unwrap();
        assert!((m.utilization(3.0 * 1000.0) - (6.64 + 8.9)).abs() < 1e-12);
    }

    #[test]
    fn region_boundaries_are_strict() {
        let t = Thresholds::default();
        let point = |s: f64, u: f64| RatePoint {
            rate_pps: 1.0,
            success: s,
            loss: 1.0 - s,
            utilization: u,
            runs: 1,
            success_ci: 0.0,
            utilization_ci: 0.0,
        };
        assert_eq!(region_of(&point(1.0, 50.0), &t), Region::NoLoss);
        assert_eq!(region_of(&point(0.5, 100.0), &t), Region::Saturation);
        assert_eq!(region_of(&point(0.999, 99.0), &t), Region::Transition);
        assert_eq!(region_of(&point(0.99, 98.0), &t), Region::Transition);
        assert_eq!(classify_regions(&[], &t), Err(BenchError::EmptySweep));
    }

    #[test]
    fn ols_exact_lines() {
        let (m, k, r2) = ols(&[1.0, 2.0], &[10.0, 12.0]).unwrap();
        assert_eq!((m, k, r2), (2.0, 8.0, 1.0));
        assert_eq!(ols(&[1.0], &[1.0]), Err(BenchError::InsufficientPoints(1)));
        assert_eq!(ols(&[3.0, 3.0], &[1.0, 2.0]), Err(BenchError::DegenerateX));
    }

    #[test]
    fn confidence_interval_of_constant_samples_is_zero() {
        assert_eq!(mean_and_ci(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, ci) = mean_and_ci(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((ci - Z_95 * 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_stays_in_range() {
        let model = CapacityModel::new(30_000.0, 5.0).unwrap();
        let mut rng = point_rng(7, 3);
        let p = evaluate_point(&model, 3.0, 9_900.0, 0.05, 200, &mut rng).unwrap();
        assert!(p.utilization <= 100.0 && p.utilization > 90.0);
        assert!(p.utilization_ci > 0.0);
        assert!(evaluate_point(&model, 3.0, 0.0, 0.0, 1, &mut rng).is_err());
        assert!(evaluate_point(&model, 3.0, 1.0, 0.0, 0, &mut rng).is_err());
    }
}
