//! Run statistics and their aggregation over seeds.

use serde::Serialize;
use thiserror::Error;

use crate::engine::{Micros, NodeId};
use crate::frames::FlowId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no nodes selected")]
    EmptySelection,
    #[error("no deliveries recorded")]
    NoDeliveries,
    #[error("measurement window is empty")]
    EmptyWindow,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FlowStats {
    pub id: FlowId,
    /// Packets generated at the source over the whole run.
    pub offered: u64,
    /// Distinct packets reaching the destination over the whole run.
    pub delivered: u64,
    pub dropped: u64,
    /// End-to-end payload bits delivered inside the measurement window.
    pub window_bits: u64,
}

/// One accepted hop reception inside the measurement window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopDelivery {
    pub t: Micros,
    pub sender: NodeId,
    pub receiver: NodeId,
    pub flow: FlowId,
    pub bits: u64,
    pub end_to_end: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub seed: u64,
    pub window_start: Micros,
    pub window_end: Micros,
    pub flows: Vec<FlowStats>,
    /// Source enqueue to first destination reception, for packets delivered in the window.
    pub delays_us: Vec<Micros>,
    /// Payload bits each node got accepted by its next hop inside the window.
    pub node_tx_bits: Vec<u64>,
    /// Exchanges (E2E-KIC) or handshakes (DCF) started inside the window.
    pub exchanges: u64,
    /// Independent per-hop log, filled when `record_hops` is set.
    pub hops: Vec<HopDelivery>,
}

impl RunStats {
    pub fn window_s(&self) -> f64 {
        (self.window_end - self.window_start) as f64 / 1e6
    }

    pub fn offered(&self) -> u64 {
        self.flows.iter().map(|f| f.offered).sum()
    }

    pub fn delivered(&self) -> u64 {
        self.flows.iter().map(|f| f.delivered).sum()
    }

    pub fn dropped(&self) -> u64 {
        self.flows.iter().map(|f| f.dropped).sum()
    }

    /// Aggregate end-to-end throughput over all flows, bits/s.
    pub fn throughput_bps(&self) -> Result<f64, MetricsError> {
        let w = self.window_s();
        if w <= 0.0 {
            return Err(MetricsError::EmptyWindow);
        }
        Ok(self.flows.iter().map(|f| f.window_bits).sum::<u64>() as f64 / w)
    }

    pub fn per_flow_throughput_bps(&self) -> Result<f64, MetricsError> {
        if self.flows.is_empty() {
            return Err(MetricsError::EmptySelection);
        }
        Ok(self.throughput_bps()? / self.flows.len() as f64)
    }
}

/// Mean per-node transmitted payload rate over the selected nodes, bits/s.
/// `include` masks nodes; `None` averages every node.
pub fn node_throughput(stats: &RunStats, include: Option<&[bool]>) -> Result<f64, MetricsError> {
    let w = stats.window_s();
    if w <= 0.0 {
        return Err(MetricsError::EmptyWindow);
    }
    let picked: Vec<u64> = stats
        .node_tx_bits
        .iter()
        .enumerate()
        .filter(|(k, _)| include.is_none_or(|m| m[*k]))
        .map(|(_, &b)| b)
        .collect();
    if picked.is_empty() {
        return Err(MetricsError::EmptySelection);
    }
    Ok(picked.iter().sum::<u64>() as f64 / picked.len() as f64 / w)
}

/// The same quantity recomputed from the per-hop log.
pub fn node_throughput_from_hops(stats: &RunStats, include: Option<&[bool]>) -> Result<f64, MetricsError> {
    let mut bits = vec![0u64; stats.node_tx_bits.len()];
    for h in &stats.hops {
        bits[h.sender] += h.bits;
    }
    let copy = RunStats {
        node_tx_bits: bits,
        hops: Vec::new(),
        flows: Vec::new(),
        delays_us: Vec::new(),
        ..stats.clone()
    };
    node_throughput(&copy, include)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySummary {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
}

/// Nearest-rank percentile of sorted samples.
fn percentile(sorted: &[Micros], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1] as f64
}

pub fn e2e_delay(stats: &RunStats) -> Result<DelaySummary, MetricsError> {
    if stats.delays_us.is_empty() {
        return Err(MetricsError::NoDeliveries);
    }
    let mut d = stats.delays_us.clone();
    d.sort_unstable();
    let mean = d.iter().map(|&x| x as f64).sum::<f64>() / d.len() as f64;
    Ok(DelaySummary {
        mean_us: mean,
        p50_us: percentile(&d, 0.5),
        p95_us: percentile(&d, 0.95),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stddev: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            mean: f64::NAN,
            stddev: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stddev = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, stddev, n }
}

/// Named scalar metrics of one run.
pub fn run_metrics(stats: &RunStats, include: Option<&[bool]>) -> Vec<(&'static str, f64)> {
    let mut out = vec![
        ("throughput_bps", stats.throughput_bps().unwrap_or(f64::NAN)),
        ("per_flow_throughput_bps", stats.per_flow_throughput_bps().unwrap_or(f64::NAN)),
        ("node_throughput_bps", node_throughput(stats, include).unwrap_or(f64::NAN)),
    ];
    let d = e2e_delay(stats).ok();
    out.push(("delay_mean_us", d.map_or(f64::NAN, |d| d.mean_us)));
    out.push(("delay_p50_us", d.map_or(f64::NAN, |d| d.p50_us)));
    out.push(("delay_p95_us", d.map_or(f64::NAN, |d| d.p95_us)));
    out.push(("delivered", stats.delivered() as f64));
    out.push(("offered", stats.offered() as f64));
    out.push(("dropped", stats.dropped() as f64));
    out.push(("exchanges", stats.exchanges as f64));
    out
}

/// Per-metric mean and sample stddev across seeds.
pub fn aggregate_seeds(runs: &[RunStats], include: Option<&[bool]>) -> Vec<(&'static str, Aggregate)> {
    let per_run: Vec<Vec<(&'static str, f64)>> = runs.iter().map(|r| run_metrics(r, include)).collect();
    let Some(first) = per_run.first() else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let vals: Vec<f64> = per_run.iter().map(|m| m[k].1).filter(|v| v.is_finite()).collect();
            (*name, aggregate(&vals))
        })
        .collect()
}
