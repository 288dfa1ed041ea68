//! Sweeps of simulation runs over one config axis, seeds and MACs, with CSV output.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::EventTraceWriter;
use crate::mac::{BackoffPolicy, MacKind};
use crate::metrics::{aggregate_seeds, run_metrics, RunStats};
use crate::scenario::{Config, ScenarioError, TopologyConfig};
use crate::sim::{simulate, RunOptions, SimError, TraceMode};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl From<ScenarioError> for ExperimentError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(v) => ExperimentError::Config(v),
            other => ExperimentError::Config(vec![other.to_string()]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PacketRate,
    NNodes,
    ContentionWindow,
    None,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::PacketRate => "packet_rate",
            SweepAxis::NNodes => "n_nodes",
            SweepAxis::ContentionWindow => "contention_window",
            SweepAxis::None => "none",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "packet_rate" => Ok(SweepAxis::PacketRate),
            "n_nodes" => Ok(SweepAxis::NNodes),
            "contention_window" => Ok(SweepAxis::ContentionWindow),
            "none" => Ok(SweepAxis::None),
            other => Err(format!("unknown sweep axis '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn none() -> Self {
        Sweep {
            axis: SweepAxis::None,
            values: Vec::new(),
        }
    }

    /// Parses `AXIS=v1,v2,...`.
    pub fn parse(s: &str) -> Result<Self, String> {
        let (axis, list) = s.split_once('=').ok_or_else(|| format!("sweep '{s}' is not AXIS=v1,v2,..."))?;
        let axis: SweepAxis = axis.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("sweep value '{v}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        let sweep = Sweep { axis, values };
        sweep.validate().map_err(|e| e.join("; "))?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        if self.axis == SweepAxis::None {
            return Ok(());
        }
        if self.values.is_empty() {
            errs.push(format!("sweep over {} needs at least one value", self.axis.as_str()));
        }
        for &v in &self.values {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("sweep value {v} must be positive"));
            } else if matches!(self.axis, SweepAxis::NNodes | SweepAxis::ContentionWindow) && v.fract() != 0.0 {
                errs.push(format!("sweep value {v} must be an integer for {}", self.axis.as_str()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Sweep points; a sweep over nothing is a single point.
    fn points(&self) -> Vec<Option<f64>> {
        if self.axis == SweepAxis::None {
            vec![None]
        } else {
            self.values.iter().map(|&v| Some(v)).collect()
        }
    }
}

/// Applies one sweep value to a copy of `cfg`.
pub fn apply_sweep(cfg: &Config, axis: SweepAxis, value: f64) -> Result<Config, ExperimentError> {
    let mut c = cfg.clone();
    match axis {
        SweepAxis::PacketRate => c.traffic.packet_rate = value,
        SweepAxis::NNodes => match &mut c.topology {
            TopologyConfig::Chain { n_nodes, .. } | TopologyConfig::Random { n_nodes, .. } => *n_nodes = value as usize,
            _ => {
                return Err(ExperimentError::Config(vec![
                    "an n_nodes sweep needs a chain or random topology".into(),
                ]))
            }
        },
        SweepAxis::ContentionWindow => {
            let w = value as u32;
            c.mac.e2ekic.backoff = BackoffPolicy::Fixed { w };
            // DCF draws from [0, cw], so a window of w slots is cw = w - 1
            c.mac.dcf.cw_min = w - 1;
            c.mac.dcf.cw_max = c.mac.dcf.cw_max.max(w - 1);
        }
        SweepAxis::None => {}
    }
    Ok(c)
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    /// Label written to the `scenario` column.
    pub scenario: String,
    pub config: Config,
    pub sweep: Sweep,
    pub macs: Vec<MacKind>,
    /// Overrides `config.sim.seeds` when set.
    pub seeds: Option<Vec<u64>>,
    pub trace: TraceMode,
    /// Where JSONL traces go; required when tracing.
    pub trace_dir: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn new(scenario: impl Into<String>, config: Config) -> Self {
        ExperimentPlan {
            scenario: scenario.into(),
            config,
            sweep: Sweep::none(),
            macs: vec![MacKind::E2ekic, MacKind::Dcf],
            seeds: None,
            trace: TraceMode::None,
            trace_dir: None,
        }
    }

    fn seeds(&self) -> &[u64] {
        self.seeds.as_deref().unwrap_or(&self.config.sim.seeds)
    }

    /// Every problem with the plan, including those of each swept config.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let sweep_ok = match self.sweep.validate() {
            Ok(()) => true,
            Err(e) => {
                errs.extend(e);
                false
            }
        };
        if self.macs.is_empty() {
            errs.push("at least one MAC must be selected".into());
        }
        // an empty config seed list is reported by the config itself
        if self.seeds.as_ref().is_some_and(|s| s.is_empty()) {
            errs.push("at least one seed is required".into());
        }
        if self.trace != TraceMode::None && self.trace_dir.is_none() {
            errs.push("tracing needs an output directory".into());
        }
        let points = if sweep_ok { self.sweep.points() } else { vec![None] };
        for p in points {
            let cfg = match p {
                Some(v) => match apply_sweep(&self.config, self.sweep.axis, v) {
                    Ok(c) => c,
                    Err(ExperimentError::Config(e)) => {
                        errs.extend(e);
                        continue;
                    }
                    Err(e) => {
                        errs.push(e.to_string());
                        continue;
                    }
                },
                None => self.config.clone(),
            };
            for e in cfg.validate() {
                let e = match p {
                    Some(v) => format!("{}={v}: {e}", self.sweep.axis.as_str()),
                    None => e,
                };
                if !errs.contains(&e) {
                    errs.push(e);
                }
            }
        }
        errs
    }
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub scenario: String,
    pub mac: MacKind,
    pub seed: u64,
    pub packet_rate: f64,
    pub n_nodes: usize,
    pub stats: RunStats,
    /// Node filter for the per-node metric (grid interiors).
    pub include: Option<Vec<bool>>,
}

struct Job {
    point: usize,
    config: Config,
    scenario: String,
    mac: MacKind,
    seed: u64,
}

/// Concurrency cap from `KICNET_THREADS`; unset or invalid leaves it to rayon.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("KICNET_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn scenario_label(plan: &ExperimentPlan, value: Option<f64>) -> String {
    match (plan.sweep.axis, value) {
        // packet_rate and n_nodes have their own columns
        (SweepAxis::ContentionWindow, Some(v)) => format!("{}/w={v}", plan.scenario),
        _ => plan.scenario.clone(),
    }
}

fn write_trace(dir: &Path, job: &Job, out: &crate::sim::RunOutput, mode: TraceMode) -> std::io::Result<()> {
    let name = format!("trace_p{}_{}_s{}.jsonl", job.point, job.mac.as_str(), job.seed);
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    match mode {
        TraceMode::Events => {
            let mut tw = EventTraceWriter::new(&mut w);
            for r in &out.events {
                tw.write(r)?;
            }
        }
        TraceMode::Protocol => {
            for r in &out.protocol {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
        TraceMode::None => {}
    }
    w.flush()
}

/// Runs every (sweep value, MAC, seed) combination. Results come back in plan
/// order whatever the thread count.
pub fn run_plan(plan: &ExperimentPlan, threads: Option<usize>) -> Result<Vec<RunResult>, ExperimentError> {
    let errs = plan.validate();
    if !errs.is_empty() {
        return Err(ExperimentError::Config(errs));
    }
    let mut jobs = Vec::new();
    for (point, value) in plan.sweep.points().into_iter().enumerate() {
        let config = match value {
            Some(v) => apply_sweep(&plan.config, plan.sweep.axis, v)?,
            None => plan.config.clone(),
        };
        let scenario = scenario_label(plan, value);
        for &mac in &plan.macs {
            for &seed in plan.seeds() {
                jobs.push(Job {
                    point,
                    config: config.clone(),
                    scenario: scenario.clone(),
                    mac,
                    seed,
                });
            }
        }
    }
    if let Some(dir) = &plan.trace_dir {
        if plan.trace != TraceMode::None {
            std::fs::create_dir_all(dir)?;
        }
    }
    let run = |job: &Job| -> Result<RunResult, ExperimentError> {
        let sc = job.config.build()?;
        let mut opts = RunOptions::new(job.mac, job.seed);
        opts.trace = plan.trace;
        let out = simulate(&job.config, &sc, &opts)?;
        if let (Some(dir), true) = (&plan.trace_dir, plan.trace != TraceMode::None) {
            write_trace(dir, job, &out, plan.trace)?;
        }
        let include = matches!(job.config.topology, TopologyConfig::Grid { .. }).then(|| sc.topology.interior_mask());
        Ok(RunResult {
            scenario: job.scenario.clone(),
            mac: job.mac,
            seed: job.seed,
            packet_rate: job.config.traffic.packet_rate,
            n_nodes: sc.topology.len(),
            stats: out.stats,
            include,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| jobs.par_iter().map(run).collect())
}

#[derive(Serialize)]
struct ResultRow<'a> {
    scenario: &'a str,
    mac: &'a str,
    seed: u64,
    packet_rate: f64,
    n_nodes: usize,
    metric: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    scenario: &'a str,
    mac: &'a str,
    packet_rate: f64,
    n_nodes: usize,
    metric: &'a str,
    mean: f64,
    stddev: f64,
    n: usize,
}

/// Long-format results: one row per run and metric.
pub fn write_results<W: Write>(out: W, results: &[RunResult]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for (metric, value) in run_metrics(&r.stats, r.include.as_deref()) {
            w.serialize(ResultRow {
                scenario: &r.scenario,
                mac: r.mac.as_str(),
                seed: r.seed,
                packet_rate: r.packet_rate,
                n_nodes: r.n_nodes,
                metric,
                value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Seed statistics per (scenario, MAC, packet rate, node count), in first-seen order.
pub fn write_aggregate<W: Write>(out: W, results: &[RunResult]) -> Result<(), ExperimentError> {
    let mut groups: Vec<(&RunResult, Vec<RunStats>)> = Vec::new();
    for r in results {
        let same = |g: &RunResult| g.scenario == r.scenario && g.mac == r.mac && g.packet_rate == r.packet_rate && g.n_nodes == r.n_nodes;
        match groups.iter_mut().find(|(g, _)| same(g)) {
            Some((_, v)) => v.push(r.stats.clone()),
            None => groups.push((r, vec![r.stats.clone()])),
        }
    }
    let mut w = csv::Writer::from_writer(out);
    for (g, runs) in &groups {
        for (metric, a) in aggregate_seeds(runs, g.include.as_deref()) {
            w.serialize(AggregateRow {
                scenario: &g.scenario,
                mac: g.mac.as_str(),
                packet_rate: g.packet_rate,
                n_nodes: g.n_nodes,
                metric,
                mean: a.mean,
                stddev: a.stddev,
                n: a.n,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
