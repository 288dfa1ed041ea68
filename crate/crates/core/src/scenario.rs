//! Topologies, flows and the JSON scenario configuration.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{rng_stream, NodeId};
use crate::frames::{FlowId, TimingConfig};
use crate::mac::MacConfig;
use crate::phy::ChannelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Chain,
    Grid,
    Random,
    Explicit,
}

/// How grid flows that would run past the grid edge are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFlows {
    /// Cut the flow at the last node inside the grid.
    #[default]
    Clip,
    /// Omit the flow entirely.
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    pub kind: TopologyKind,
    /// Node `k` sits at `nodes[k]`, in meters.
    pub nodes: Vec<(f64, f64)>,
    /// Grid shape, used for edge filtering.
    pub grid: Option<(usize, usize)>,
}

impl Topology {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (xa, ya) = self.nodes[a];
        let (xb, yb) = self.nodes[b];
        (xa - xb).hypot(ya - yb)
    }

    /// Nodes outside the outermost ring of a grid; every node otherwise.
    pub fn interior_mask(&self) -> Vec<bool> {
        match self.grid {
            Some((rows, cols)) => (0..self.len())
                .map(|k| {
                    let (r, c) = (k / cols, k % cols);
                    r > 0 && c > 0 && r + 1 < rows && c + 1 < cols
                })
                .collect(),
            None => vec![true; self.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    #[default]
    Poisson,
    Periodic,
    Saturated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub id: FlowId,
    pub path: Vec<NodeId>,
    pub packet_rate: f64,
    pub payload_bits: u64,
    pub arrival: Arrival,
}

impl FlowSpec {
    pub fn source(&self) -> NodeId {
        self.path[0]
    }

    pub fn destination(&self) -> NodeId {
        *self.path.last().expect("non-empty path")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyConfig {
    Chain {
        n_nodes: usize,
        spacing: f64,
    },
    Grid {
        rows: usize,
        cols: usize,
        d: f64,
        r: f64,
        n_path: usize,
        /// Fixed initiator position inside each flow.
        initiator: usize,
        #[serde(default)]
        flows: GridFlows,
    },
    Random {
        n_nodes: usize,
        width: f64,
        height: f64,
        n_flows: usize,
        seed: u64,
    },
    Explicit {
        nodes: Vec<(f64, f64)>,
    },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Chain {
            n_nodes: 7,
            spacing: 200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub arrival: Arrival,
    /// Packets per second per flow.
    pub packet_rate: f64,
    /// Keep every relay's buffer non-empty as well as every source's.
    pub saturate_relays: bool,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            arrival: Arrival::Poisson,
            packet_rate: 50.0,
            saturate_relays: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    pub warmup_fraction: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration_s: 10.0,
            seeds: (1..=10).collect(),
            warmup_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub topology: TopologyConfig,
    /// Node paths; only read for explicit topologies.
    pub flows: Vec<Vec<NodeId>>,
    pub traffic: TrafficConfig,
    pub timing: TimingConfig,
    pub channel: ChannelConfig,
    pub mac: MacConfig,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub flows: Vec<FlowSpec>,
    /// Fixed initiator position for every flow, if the topology imposes one.
    pub initiator: Option<usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScenarioError {
    #[error("{0}")]
    Invalid(String),
    #[error("no connected placement found after {0} attempts")]
    Disconnected(usize),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

pub fn build_chain(n_nodes: usize, spacing: f64) -> Result<(Topology, FlowSpec), ScenarioError> {
    if n_nodes < 2 {
        return Err(ScenarioError::Invalid("a chain needs at least 2 nodes".into()));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(ScenarioError::Invalid("chain spacing must be positive".into()));
    }
    let topo = Topology {
        kind: TopologyKind::Chain,
        nodes: (0..n_nodes).map(|k| (k as f64 * spacing, 0.0)).collect(),
        grid: None,
    };
    let flow = FlowSpec {
        id: 0,
        path: (0..n_nodes).collect(),
        packet_rate: 0.0,
        payload_bits: 0,
        arrival: Arrival::Poisson,
    };
    Ok((topo, flow))
}

/// Straight-line flows of up to `n_path` nodes from every node in every
/// neighbour direction within `r`. Flows reaching the grid edge are clipped
/// there (at least two nodes kept) or omitted, per `mode`.
pub fn build_grid(
    rows: usize,
    cols: usize,
    d: f64,
    r: f64,
    n_path: usize,
    mode: GridFlows,
) -> Result<(Topology, Vec<FlowSpec>), ScenarioError> {
    if !(d > 0.0 && d <= r && r < 2.0 * d) {
        return Err(ScenarioError::Invalid(format!("grid needs d <= r < 2d, got d={d} r={r}")));
    }
    if rows == 0 || cols == 0 || n_path < 2 {
        return Err(ScenarioError::Invalid("grid needs rows, cols >= 1 and n_path >= 2".into()));
    }
    let nodes = (0..rows * cols)
        .map(|k| ((k % cols) as f64 * d, (k / cols) as f64 * d))
        .collect();
    let topo = Topology {
        kind: TopologyKind::Grid,
        nodes,
        grid: Some((rows, cols)),
    };
    let mut dirs = Vec::new();
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let len = ((dx * dx + dy * dy) as f64).sqrt() * d;
            if (dx, dy) != (0, 0) && len <= r * (1.0 + 1e-12) {
                dirs.push((dx, dy));
            }
        }
    }
    let steps = (n_path - 1) as i64;
    let mut flows = Vec::new();
    for row in 0..rows as i64 {
        for col in 0..cols as i64 {
            for &(dx, dy) in &dirs {
                let inside = |s: i64| {
                    let (x, y) = (col + dx * s, row + dy * s);
                    x >= 0 && y >= 0 && x < cols as i64 && y < rows as i64
                };
                let fit = (0..=steps).take_while(|&s| inside(s)).last().unwrap_or(0);
                let last = match mode {
                    GridFlows::Drop if fit < steps => continue,
                    _ if fit == 0 => continue,
                    _ => fit,
                };
                let path = (0..=last)
                    .map(|s| ((row + dy * s) * cols as i64 + col + dx * s) as NodeId)
                    .collect();
                flows.push(FlowSpec {
                    id: flows.len() as FlowId,
                    path,
                    packet_rate: 0.0,
                    payload_bits: 0,
                    arrival: Arrival::Saturated,
                });
            }
        }
    }
    if flows.is_empty() {
        return Err(ScenarioError::Invalid(format!(
            "n_path={n_path} does not fit a {rows}x{cols} grid in any direction"
        )));
    }
    Ok((topo, flows))
}

/// Minimum-hop path under `range`; ties go to the shorter geometric length,
/// then to the lexicographically smaller id sequence.
pub fn shortest_path(topo: &Topology, range: f64, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
    let n = topo.len();
    let reach = range * (1.0 + 1e-9);
    let mut best: Vec<Option<(usize, f64, Vec<NodeId>)>> = vec![None; n];
    let mut done = vec![false; n];
    best[src] = Some((0, 0.0, vec![src]));
    let better = |a: &(usize, f64, Vec<NodeId>), b: &(usize, f64, Vec<NodeId>)| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    };
    loop {
        let mut pick: Option<NodeId> = None;
        for v in 0..n {
            if done[v] || best[v].is_none() {
                continue;
            }
            pick = match pick {
                Some(u) if better(best[u].as_ref()?, best[v].as_ref()?) != Ordering::Greater => Some(u),
                _ => Some(v),
            };
        }
        let u = pick?;
        done[u] = true;
        if u == dst {
            return best[u].take().map(|b| b.2);
        }
        let (hops, len, path) = best[u].clone()?;
        for v in 0..n {
            if done[v] || v == u {
                continue;
            }
            let dist = topo.distance(u, v);
            if dist > reach {
                continue;
            }
            let mut p = path.clone();
            p.push(v);
            let cand = (hops + 1, len + dist, p);
            if best[v].as_ref().is_none_or(|b| better(&cand, b) == Ordering::Less) {
                best[v] = Some(cand);
            }
        }
    }
}

pub const RANDOM_ATTEMPTS: usize = 100;

pub fn build_random(
    n_nodes: usize,
    width: f64,
    height: f64,
    n_flows: usize,
    seed: u64,
    range: f64,
) -> Result<(Topology, Vec<FlowSpec>), ScenarioError> {
    if n_nodes < 2 {
        return Err(ScenarioError::Invalid("random topology needs at least 2 nodes".into()));
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(ScenarioError::Invalid("random area must be positive".into()));
    }
    let max_pairs = n_nodes * (n_nodes - 1);
    if n_flows > max_pairs {
        return Err(ScenarioError::Invalid(format!("{n_flows} flows exceed {max_pairs} node pairs")));
    }
    let mut rng = rng_stream(seed, u64::MAX);
    for _ in 0..RANDOM_ATTEMPTS {
        let nodes: Vec<(f64, f64)> = (0..n_nodes)
            .map(|_| (rng.random_range(0.0..width), rng.random_range(0.0..height)))
            .collect();
        let topo = Topology {
            kind: TopologyKind::Random,
            nodes,
            grid: None,
        };
        let mut pairs: Vec<(NodeId, NodeId)> = Vec::with_capacity(n_flows);
        while pairs.len() < n_flows {
            let s = rng.random_range(0..n_nodes);
            let t = rng.random_range(0..n_nodes);
            if s != t && !pairs.contains(&(s, t)) {
                pairs.push((s, t));
            }
        }
        let paths: Option<Vec<Vec<NodeId>>> = pairs
            .iter()
            .map(|&(s, t)| shortest_path(&topo, range, s, t))
            .collect();
        if let Some(paths) = paths {
            let flows = paths
                .into_iter()
                .enumerate()
                .map(|(k, path)| FlowSpec {
                    id: k as FlowId,
                    path,
                    packet_rate: 0.0,
                    payload_bits: 0,
                    arrival: Arrival::Poisson,
                })
                .collect();
            return Ok((topo, flows));
        }
    }
    Err(ScenarioError::Disconnected(RANDOM_ATTEMPTS))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Config(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every problem found, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if let Err(e) = self.timing.validate() {
            errs.push(format!("timing: {e}"));
        }
        if let Err(e) = self.channel.validate() {
            errs.push(e);
        }
        errs.extend(self.mac.validate());
        let s = &self.sim;
        if !(s.duration_s.is_finite() && s.duration_s > 0.0) {
            errs.push("sim.duration_s must be positive".into());
        }
        if s.seeds.is_empty() {
            errs.push("sim.seeds must not be empty".into());
        }
        if !(0.0..1.0).contains(&s.warmup_fraction) {
            errs.push("sim.warmup_fraction must lie in [0, 1)".into());
        }
        let t = &self.traffic;
        if t.arrival != Arrival::Saturated && !(t.packet_rate.is_finite() && t.packet_rate > 0.0) {
            errs.push("traffic.packet_rate must be positive".into());
        }
        match &self.topology {
            TopologyConfig::Chain { n_nodes, spacing } => {
                if *n_nodes < 2 {
                    errs.push("topology.n_nodes must be >= 2".into());
                }
                if !(spacing.is_finite() && *spacing > 0.0) {
                    errs.push("topology.spacing must be positive".into());
                }
            }
            TopologyConfig::Grid { n_path, initiator, d, r, .. } => {
                if *initiator == 0 || *initiator >= *n_path {
                    errs.push("topology.initiator must lie in 1..n_path".into());
                }
                if !(*d > 0.0 && d <= r && *r < 2.0 * d) {
                    errs.push("topology grid needs d <= r < 2d".into());
                }
            }
            TopologyConfig::Random { n_nodes, width, height, .. } => {
                if *n_nodes < 2 {
                    errs.push("topology.n_nodes must be >= 2".into());
                }
                if !(*width > 0.0 && *height > 0.0) {
                    errs.push("topology.width and topology.height must be positive".into());
                }
            }
            TopologyConfig::Explicit { nodes } => {
                if nodes.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
                    errs.push("topology.nodes positions must be finite".into());
                }
                if self.flows.is_empty() {
                    errs.push("explicit topologies need at least one flow".into());
                }
                for (k, path) in self.flows.iter().enumerate() {
                    if path.len() < 2 {
                        errs.push(format!("flows[{k}] needs at least 2 nodes"));
                    }
                    if path.iter().any(|&n| n >= nodes.len()) {
                        errs.push(format!("flows[{k}] references an unknown node"));
                    }
                }
            }
        }
        if !matches!(self.topology, TopologyConfig::Explicit { .. }) && !self.flows.is_empty() {
            errs.push("flows may only be listed for explicit topologies".into());
        }
        errs
    }

    /// Validates and builds the topology and flows.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let errs = self.validate();
        if !errs.is_empty() {
            return Err(ScenarioError::Config(errs));
        }
        let range = self.channel.reception_range();
        let (topology, mut flows, initiator) = match &self.topology {
            TopologyConfig::Chain { n_nodes, spacing } => {
                let (t, f) = build_chain(*n_nodes, *spacing)?;
                (t, vec![f], None)
            }
            TopologyConfig::Grid {
                rows,
                cols,
                d,
                r,
                n_path,
                initiator,
                flows,
            } => {
                let (t, mut f) = build_grid(*rows, *cols, *d, *r, *n_path, *flows)?;
                // a flow without a node after the initiator position never starts an exchange
                f.retain(|f| f.path.len() > *initiator);
                for (k, f) in f.iter_mut().enumerate() {
                    f.id = k as FlowId;
                }
                (t, f, Some(*initiator))
            }
            TopologyConfig::Random { n_nodes, width, height, n_flows, seed } => {
                let (t, f) = build_random(*n_nodes, *width, *height, *n_flows, *seed, range)?;
                (t, f, None)
            }
            TopologyConfig::Explicit { nodes } => {
                let t = Topology {
                    kind: TopologyKind::Explicit,
                    nodes: nodes.clone(),
                    grid: None,
                };
                let f = self
                    .flows
                    .iter()
                    .enumerate()
                    .map(|(k, p)| FlowSpec {
                        id: k as FlowId,
                        path: p.clone(),
                        packet_rate: 0.0,
                        payload_bits: 0,
                        arrival: Arrival::Poisson,
                    })
                    .collect();
                (t, f, None)
            }
        };
        for f in &mut flows {
            f.packet_rate = self.traffic.packet_rate;
            f.payload_bits = self.timing.payload_bits;
            f.arrival = self.traffic.arrival;
        }
        let mut errs = Vec::new();
        for f in &flows {
            for w in f.path.windows(2) {
                if topology.distance(w[0], w[1]) > range * (1.0 + 1e-9) {
                    errs.push(format!("flow {} hop {}->{} exceeds the reception range", f.id, w[0], w[1]));
                }
            }
        }
        if !errs.is_empty() {
            return Err(ScenarioError::Config(errs));
        }
        Ok(Scenario {
            topology,
            flows,
            initiator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_layout() {
        let (t, f) = build_chain(7, 200.0).unwrap();
        assert_eq!(t.len(), 7);
        assert_eq!(t.nodes[6], (1200.0, 0.0));
        assert_eq!(f.path, (0..7).collect::<Vec<_>>());
        let (_, f) = build_chain(2, 200.0).unwrap();
        assert_eq!(f.path, vec![0, 1]);
        assert_eq!(build_chain(10, 200.0).unwrap().0.len(), 10);
        assert!(build_chain(1, 200.0).is_err());
    }

    fn flows_from(flows: &[FlowSpec], node: NodeId) -> usize {
        flows.iter().filter(|f| f.source() == node).count()
    }

    #[test]
    fn dense_grid_sources_eight_directions() {
        // A 19x19 grid leaves room for length-10 paths in all directions from the centre.
        let (t, flows) = build_grid(19, 19, 110.0, 200.0, 10, GridFlows::Drop).unwrap();
        assert_eq!(flows_from(&flows, 9 * 19 + 9), 8);
        for f in &flows {
            assert_eq!(f.path.len(), 10);
            for w in f.path.windows(2) {
                assert!(t.distance(w[0], w[1]) <= 200.0);
            }
        }
    }

    #[test]
    fn sparse_grid_sources_four_directions() {
        let (_, flows) = build_grid(19, 19, 150.0, 200.0, 10, GridFlows::Drop).unwrap();
        assert_eq!(flows_from(&flows, 9 * 19 + 9), 4);
    }

    #[test]
    fn truncated_flows_are_dropped() {
        let (_, dense) = build_grid(10, 10, 110.0, 200.0, 10, GridFlows::Drop).unwrap();
        let (_, sparse) = build_grid(10, 10, 150.0, 200.0, 10, GridFlows::Drop).unwrap();
        assert_eq!(sparse.len(), 40);
        assert_eq!(dense.len(), 44);
        // The centre of a 10x10 grid has no room for a length-10 path anywhere.
        assert_eq!(flows_from(&dense, 55), 0);
        assert!(build_grid(5, 5, 150.0, 200.0, 10, GridFlows::Drop).is_err());
        assert!(build_grid(10, 10, 90.0, 200.0, 10, GridFlows::Clip).is_err());
    }

    #[test]
    fn clipped_flows_stop_at_the_edge() {
        let (t, flows) = build_grid(10, 10, 110.0, 200.0, 10, GridFlows::Clip).unwrap();
        // every node sources one flow per direction with at least one step of room
        assert_eq!(flows_from(&flows, 55), 8);
        assert_eq!(flows_from(&flows, 0), 3);
        for f in &flows {
            assert!((2..=10).contains(&f.path.len()));
            let (r, c) = (f.destination() / 10, f.destination() % 10);
            let full = f.path.len() == 10;
            assert!(full || r == 0 || c == 0 || r == 9 || c == 9);
            for w in f.path.windows(2) {
                assert!(t.distance(w[0], w[1]) <= 200.0);
            }
        }
        let (_, sparse) = build_grid(10, 10, 150.0, 200.0, 10, GridFlows::Clip).unwrap();
        assert_eq!(flows_from(&sparse, 55), 4);
    }

    #[test]
    fn grid_flows_are_straight() {
        let (t, flows) = build_grid(10, 10, 110.0, 200.0, 10, GridFlows::Clip).unwrap();
        for f in &flows {
            let (x0, y0) = t.nodes[f.path[0]];
            let (x1, y1) = t.nodes[f.path[1]];
            for (k, &n) in f.path.iter().enumerate() {
                let (x, y) = t.nodes[n];
                assert!((x - (x0 + k as f64 * (x1 - x0))).abs() < 1e-9);
                assert!((y - (y0 + k as f64 * (y1 - y0))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn interior_mask_counts() {
        let (t, _) = build_grid(10, 10, 150.0, 200.0, 10, GridFlows::Clip).unwrap();
        assert_eq!(t.interior_mask().iter().filter(|&&b| b).count(), 64);
    }

    #[test]
    fn random_is_deterministic_and_connected() {
        let a = build_random(20, 800.0, 800.0, 7, 42, 200.0).unwrap();
        let b = build_random(20, 800.0, 800.0, 7, 42, 200.0).unwrap();
        assert_eq!(a, b);
        for f in &a.1 {
            for w in f.path.windows(2) {
                assert!(a.0.distance(w[0], w[1]) <= 200.0 + 1e-6);
            }
        }
        let (_, none) = build_random(20, 800.0, 800.0, 0, 1, 200.0).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn random_paths_are_short_multi_hop() {
        let mut hops = Vec::new();
        for seed in 0..100 {
            let (_, flows) = build_random(20, 800.0, 800.0, 7, seed, 200.0).unwrap();
            hops.extend(flows.iter().map(|f| f.path.len() - 1));
        }
        let in_band = hops.iter().filter(|&&h| (2..=5).contains(&h)).count() as f64 / hops.len() as f64;
        let mean = hops.iter().sum::<usize>() as f64 / hops.len() as f64;
        assert!(in_band > 0.6, "share of 2-5 hop paths {in_band}");
        assert!((2.0..=5.0).contains(&mean), "mean hops {mean}");
    }

    #[test]
    fn unreachable_placement_errors() {
        // Range far below the node spacing: nothing ever connects.
        assert_eq!(
            build_random(5, 800.0, 800.0, 1, 3, 1e-3),
            Err(ScenarioError::Disconnected(RANDOM_ATTEMPTS))
        );
    }

    #[test]
    fn shortest_path_ties() {
        // 0 - {1, 2} - 3 with equal lengths: lower ids win.
        let topo = Topology {
            kind: TopologyKind::Explicit,
            nodes: vec![(0.0, 0.0), (100.0, 50.0), (100.0, -50.0), (200.0, 0.0)],
            grid: None,
        };
        assert_eq!(shortest_path(&topo, 150.0, 0, 3), Some(vec![0, 1, 3]));
        // Shorter geometric length beats lower ids.
        let topo = Topology {
            nodes: vec![(0.0, 0.0), (100.0, 60.0), (100.0, -10.0), (200.0, 0.0)],
            ..topo
        };
        assert_eq!(shortest_path(&topo, 150.0, 0, 3), Some(vec![0, 2, 3]));
        assert_eq!(shortest_path(&topo, 50.0, 0, 3), None);
    }

    #[test]
    fn config_round_trips() {
        let cfg = Config {
            topology: TopologyConfig::Grid {
                rows: 10,
                cols: 10,
                d: 110.0,
                r: 200.0,
                n_path: 10,
                initiator: 6,
                flows: GridFlows::Clip,
            },
            ..Config::default()
        };
        let once = Config::from_json(&cfg.to_json()).unwrap();
        assert_eq!(once, cfg);
        assert_eq!(Config::from_json(&once.to_json()).unwrap().to_json(), once.to_json());
        let sparse = Config::from_json(r#"{"topology": {"kind": "chain", "n_nodes": 4, "spacing": 200}}"#).unwrap();
        assert_eq!(sparse.timing, TimingConfig::default());
        assert_eq!(Config::from_json(&sparse.to_json()).unwrap(), sparse);
    }

    #[test]
    fn validation_lists_every_error() {
        let cfg = Config::from_json(
            r#"{"topology": {"kind": "chain", "n_nodes": 1, "spacing": -5},
                "sim": {"duration_s": 0, "seeds": []},
                "traffic": {"packet_rate": 0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.validate().len(), 5);
        assert!(Config::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn explicit_flow_hops_checked() {
        let cfg = Config::from_json(
            r#"{"topology": {"kind": "explicit", "nodes": [[0,0],[150,0],[500,0]]},
                "flows": [[0,1,2]]}"#,
        )
        .unwrap();
        match cfg.build() {
            Err(ScenarioError::Config(e)) => assert_eq!(e.len(), 1),
            other => panic!("{other:?}"),
        }
    }
}
