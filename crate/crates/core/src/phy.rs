//! Propagation, carrier sensing and the abstract KIC decode rule.
//!
//! No signals are synthesised. A reception succeeds when every component
//! superposed on it is either cancellable (the receiver's own transmission,
//! or a frame whose content the receiver already knows) or too weak to push
//! the SINR below threshold.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::engine::{Micros, NodeId};
use crate::frames::PacketId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Unit gain inside `cs_radius_m`, zero outside. Reception and sensing ranges coincide.
    Protocol,
    /// Gain `1/D^exponent`, energy-detect carrier sensing, SINR decoding.
    PathLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub mode: ChannelMode,
    pub cs_radius_m: f64,
    pub rx_range_m: f64,
    pub tx_power_dbm: f64,
    pub path_loss_exponent: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub cca_threshold_dbm: f64,
    pub decode_sinr_db: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            mode: ChannelMode::PathLoss,
            cs_radius_m: 200.0,
            rx_range_m: 200.0,
            tx_power_dbm: 0.0,
            path_loss_exponent: 4.0,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 6.0,
            // 500 kHz: the noise bandwidth at which 1 Mbit/s is sustainable at 10 dB.
            bandwidth_hz: 500e3,
            cca_threshold_dbm: -106.0,
            decode_sinr_db: 10.0,
        }
    }
}

impl ChannelConfig {
    pub fn protocol(radius_m: f64) -> Self {
        ChannelConfig {
            mode: ChannelMode::Protocol,
            cs_radius_m: radius_m,
            rx_range_m: radius_m,
            ..ChannelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("channel.{name} must be positive and finite"))
            }
        };
        match self.mode {
            ChannelMode::Protocol => pos(self.cs_radius_m, "cs_radius_m"),
            ChannelMode::PathLoss => {
                pos(self.rx_range_m, "rx_range_m")?;
                pos(self.bandwidth_hz, "bandwidth_hz")?;
                pos(self.path_loss_exponent, "path_loss_exponent")
            }
        }
    }

    /// Range within which frames can be decoded at all.
    pub fn reception_range(&self) -> f64 {
        match self.mode {
            ChannelMode::Protocol => self.cs_radius_m,
            ChannelMode::PathLoss => self.rx_range_m,
        }
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_density_dbm_hz + self.noise_figure_db + 10.0 * self.bandwidth_hz.log10()
    }

    pub fn rx_power_dbm(&self, distance_m: f64) -> f64 {
        self.tx_power_dbm - 10.0 * self.path_loss_exponent * distance_m.max(1.0).log10()
    }

    /// The distance at which received power equals the CCA threshold.
    pub fn sensing_range_m(&self) -> f64 {
        match self.mode {
            ChannelMode::Protocol => self.cs_radius_m,
            ChannelMode::PathLoss => {
                10f64.powf((self.tx_power_dbm - self.cca_threshold_dbm) / (10.0 * self.path_loss_exponent))
            }
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Power accumulator unit: 1e-24 mW. Integer sums keep carrier sensing exact
/// under arbitrary start/stop interleavings.
const POWER_QUANTUM_MW: f64 = 1e-24;

fn quantize(mw: f64) -> u128 {
    (mw / POWER_QUANTUM_MW).round() as u128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Duplex {
    Half,
    Full,
}

/// Static link properties for a fixed node placement.
#[derive(Debug, Clone)]
pub struct Channel {
    cfg: ChannelConfig,
    n: usize,
    /// Received power in mW (PathLoss) or 1/0 (Protocol), indexed `[tx * n + rx]`.
    gain: Vec<f64>,
    quantized: Vec<u128>,
    strong: Vec<bool>,
    cca_q: u128,
    noise_mw: f64,
    sinr_lin: f64,
    neighbours: Vec<Vec<NodeId>>,
    sensors: Vec<Vec<NodeId>>,
}

impl Channel {
    pub fn new(cfg: &ChannelConfig, positions: &[(f64, f64)]) -> Self {
        let n = positions.len();
        let mut gain = vec![0.0; n * n];
        let mut strong = vec![false; n * n];
        let range = cfg.reception_range() * (1.0 + 1e-9);
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let (xa, ya) = positions[a];
                let (xb, yb) = positions[b];
                let d = (xa - xb).hypot(ya - yb);
                let within = d <= range;
                strong[a * n + b] = within;
                gain[a * n + b] = match cfg.mode {
                    ChannelMode::Protocol => {
                        if within {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ChannelMode::PathLoss => dbm_to_mw(cfg.rx_power_dbm(d)),
                };
            }
        }
        let quantized: Vec<u128> = gain.iter().map(|&g| quantize(g)).collect();
        let cca_q = match cfg.mode {
            ChannelMode::Protocol => 0,
            ChannelMode::PathLoss => quantize(dbm_to_mw(cfg.cca_threshold_dbm)),
        };
        let neighbours = (0..n)
            .map(|a| (0..n).filter(|&b| strong[a * n + b]).collect())
            .collect();
        let sensors = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| b != a && quantized[a * n + b] > 0)
                    .collect()
            })
            .collect();
        Channel {
            cfg: cfg.clone(),
            n,
            gain,
            quantized,
            strong,
            cca_q,
            noise_mw: dbm_to_mw(cfg.noise_dbm()),
            sinr_lin: dbm_to_mw(cfg.decode_sinr_db),
            neighbours,
            sensors,
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// True iff `rx` is within reception range of `tx`.
    pub fn strong(&self, tx: NodeId, rx: NodeId) -> bool {
        self.strong[tx * self.n + rx]
    }

    pub fn gain(&self, tx: NodeId, rx: NodeId) -> f64 {
        self.gain[tx * self.n + rx]
    }

    /// Nodes that can decode `tx`.
    pub fn neighbours(&self, tx: NodeId) -> &[NodeId] {
        &self.neighbours[tx]
    }

    /// Whether received power `q` (quantized) trips carrier sensing.
    fn senses(&self, q: u128) -> bool {
        match self.cfg.mode {
            ChannelMode::Protocol => q > 0,
            ChannelMode::PathLoss => q >= self.cca_q,
        }
    }
}

pub type TxId = u64;

/// One transmission on the air. Control frames have no payload interval;
/// the whole frame decodes as a unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub sender: NodeId,
    pub start: Micros,
    pub end: Micros,
    pub header: (Micros, Micros),
    pub payload: Option<(Micros, Micros)>,
    pub content: Option<PacketId>,
}

impl Transmission {
    pub fn control(id: TxId, sender: NodeId, start: Micros, duration: Micros) -> Self {
        Transmission {
            id,
            sender,
            start,
            end: start + duration,
            header: (start, start + duration),
            payload: None,
            content: None,
        }
    }

    /// A DATA frame; `reversed` puts the header at the tail.
    pub fn data(
        id: TxId,
        sender: NodeId,
        start: Micros,
        header_len: Micros,
        payload_len: Micros,
        reversed: bool,
        content: PacketId,
    ) -> Self {
        let end = start + header_len + payload_len;
        let (header, payload) = if reversed {
            ((end - header_len, end), (start, start + payload_len))
        } else {
            ((start, start + header_len), (start + header_len, end))
        };
        Transmission {
            id,
            sender,
            start,
            end,
            header,
            payload: Some(payload),
            content: Some(content),
        }
    }

    fn overlaps(&self, a: Micros, b: Micros) -> bool {
        self.start < b && a < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reception {
    Full,
    HeaderOnly,
    Lost,
}

impl Reception {
    pub fn header_ok(self) -> bool {
        self != Reception::Lost
    }
}

/// The shared medium: live and recent transmissions plus per-node sensed power.
#[derive(Debug, Clone)]
pub struct Medium {
    chan: Channel,
    duplex: Duplex,
    txs: Vec<Transmission>,
    power: Vec<u128>,
    busy: Vec<bool>,
    idle_since: Vec<Micros>,
    max_len: Micros,
    next_id: TxId,
}

impl Medium {
    pub fn new(chan: Channel, duplex: Duplex) -> Self {
        let n = chan.len();
        Medium {
            chan,
            duplex,
            txs: Vec::new(),
            power: vec![0; n],
            busy: vec![false; n],
            idle_since: vec![0; n],
            max_len: 0,
            next_id: 0,
        }
    }

    pub fn channel(&self) -> &Channel {
        &self.chan
    }

    pub fn next_tx_id(&mut self) -> TxId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Carrier sense from other nodes' signals at the current instant.
    pub fn carrier_busy(&self, node: NodeId) -> bool {
        self.busy[node]
    }

    /// Last instant the medium turned idle at `node`.
    pub fn idle_since(&self, node: NodeId) -> Micros {
        self.idle_since[node]
    }

    pub fn get(&self, id: TxId) -> Option<&Transmission> {
        self.txs.iter().rev().find(|t| t.id == id)
    }

    /// Puts `tx` on the air; returns nodes whose carrier went busy.
    pub fn start(&mut self, tx: Transmission) -> Vec<NodeId> {
        self.max_len = self.max_len.max(tx.end - tx.start);
        let s = tx.sender;
        let mut changed = Vec::new();
        for &r in &self.chan.sensors[s] {
            self.power[r] += self.chan.quantized[s * self.chan.n + r];
            let now_busy = self.chan.senses(self.power[r]);
            if now_busy && !self.busy[r] {
                self.busy[r] = true;
                changed.push(r);
            }
        }
        self.txs.push(tx);
        changed
    }

    /// Takes `id` off the air at `now`; returns nodes whose carrier went idle.
    pub fn end(&mut self, id: TxId, now: Micros) -> Vec<NodeId> {
        let Some(s) = self.get(id).map(|t| t.sender) else {
            return Vec::new();
        };
        let mut changed = Vec::new();
        for &r in &self.chan.sensors[s] {
            self.power[r] -= self.chan.quantized[s * self.chan.n + r];
            let now_busy = self.chan.senses(self.power[r]);
            if !now_busy && self.busy[r] {
                self.busy[r] = false;
                self.idle_since[r] = now;
                changed.push(r);
            }
        }
        self.prune(now);
        changed
    }

    /// Drops transmissions that can no longer overlap anything still to be decoded.
    fn prune(&mut self, now: Micros) {
        if self.txs.len() < 64 {
            return;
        }
        let horizon = now.saturating_sub(2 * self.max_len);
        self.txs.retain(|t| t.end >= horizon);
    }

    /// Decode outcome of transmission `id` at `rx`, evaluated once it has ended.
    pub fn deliver(&self, id: TxId, rx: NodeId, known: impl Fn(PacketId) -> bool) -> Reception {
        let Some(tx) = self.get(id) else {
            return Reception::Lost;
        };
        if tx.sender == rx || !self.chan.strong(tx.sender, rx) {
            return Reception::Lost;
        }
        if !self.clean(tx, rx, tx.header, &known) {
            return Reception::Lost;
        }
        match tx.payload {
            None => Reception::Full,
            Some(iv) if self.clean(tx, rx, iv, &known) => Reception::Full,
            Some(_) => Reception::HeaderOnly,
        }
    }

    fn clean(&self, tx: &Transmission, rx: NodeId, (a, b): (Micros, Micros), known: &impl Fn(PacketId) -> bool) -> bool {
        let mut interference = 0.0;
        for x in &self.txs {
            if x.id == tx.id || !x.overlaps(a, b) {
                continue;
            }
            if x.sender == rx {
                if self.duplex == Duplex::Half {
                    return false;
                }
                continue;
            }
            if x.content.is_some_and(known) {
                continue;
            }
            if self.chan.strong(x.sender, rx) {
                return false;
            }
            interference += self.chan.gain(x.sender, rx);
        }
        match self.chan.cfg.mode {
            ChannelMode::Protocol => true,
            ChannelMode::PathLoss => {
                let signal = self.chan.gain(tx.sender, rx);
                signal >= self.chan.sinr_lin * (interference + self.chan.noise_mw)
            }
        }
    }
}

/// Bounded FIFO record of one kind of known packet.
#[derive(Debug, Clone)]
struct Fifo {
    order: VecDeque<PacketId>,
    set: HashSet<PacketId>,
}

impl Fifo {
    fn new() -> Self {
        Fifo {
            order: VecDeque::new(),
            set: HashSet::new(),
        }
    }

    fn insert(&mut self, p: PacketId, cap: usize) {
        if !self.set.insert(p) {
            return;
        }
        self.order.push_back(p);
        if self.order.len() > cap {
            if let Some(old) = self.order.pop_front() {
                self.set.remove(&old);
            }
        }
    }
}

/// Packet contents a node can cancel.
///
/// Entries are evicted by count, not by exchange boundaries: a relay's
/// downstream neighbour may forward a packet several exchanges after
/// receiving it, and the relay must still recognise it then. Packets the node
/// carried itself and packets it merely overheard are bounded separately, so
/// busy neighbourhoods cannot push out the node's own traffic.
#[derive(Debug, Clone)]
pub struct KnownCache {
    cap: usize,
    carried: Fifo,
    overheard: Fifo,
}

impl KnownCache {
    pub fn new(cap: usize) -> Self {
        KnownCache {
            cap: cap.max(1),
            carried: Fifo::new(),
            overheard: Fifo::new(),
        }
    }

    /// A packet the node originated or accepted for forwarding.
    pub fn insert_carried(&mut self, p: PacketId) {
        self.carried.insert(p, self.cap);
    }

    /// A packet decoded from someone else's transmission.
    pub fn insert(&mut self, p: PacketId) {
        if !self.carried.set.contains(&p) {
            self.overheard.insert(p, self.cap);
        }
    }

    pub fn contains(&self, p: PacketId) -> bool {
        self.carried.set.contains(&p) || self.overheard.set.contains(&p)
    }

    pub fn len(&self) -> usize {
        self.carried.order.len() + self.overheard.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
