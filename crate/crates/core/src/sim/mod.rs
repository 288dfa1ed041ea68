//! Packet-level network simulation: traffic, buffers, carrier sensing,
//! NAV and backoff, shared by the E2E-KIC and DCF state machines.

mod dcf;
mod kic;
pub mod trace;

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{rng_stream, EventKind, EventRecord, Micros, NodeId, Scheduler};
use crate::frames::{FlowId, Frame, FrameKind, PacketId, TimingConfig};
use crate::mac::access::{draw_backoff, window, AccessHistory, Countdown};
use crate::mac::e2ekic::should_wait;
use crate::mac::{MacConfig, MacKind};
use crate::metrics::{FlowStats, HopDelivery, RunStats};
use crate::phy::{Channel, Duplex, KnownCache, Medium, Reception, Transmission, TxId};
use crate::scenario::{Arrival, Config, FlowSpec, Scenario};

pub use trace::{check_invariants, ExKey, InvariantReport, ProtoRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    #[default]
    None,
    Events,
    Protocol,
}

impl std::str::FromStr for TraceMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(TraceMode::None),
            "events" => Ok(TraceMode::Events),
            "protocol" => Ok(TraceMode::Protocol),
            other => Err(format!("unknown trace mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mac: MacKind,
    pub seed: u64,
    pub trace: TraceMode,
    pub record_hops: bool,
}

impl RunOptions {
    pub fn new(mac: MacKind, seed: u64) -> Self {
        RunOptions {
            mac,
            seed,
            trace: TraceMode::None,
            record_hops: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: RunStats,
    pub protocol: Vec<ProtoRecord>,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    Input(String),
}

#[derive(Debug, Clone)]
struct Packet {
    id: PacketId,
    flow: FlowId,
    attempts: u32,
    eligible_at: Micros,
}

#[derive(Debug, Clone, Copy)]
struct PacketMeta {
    created: Micros,
}

#[derive(Debug, Clone)]
enum Step {
    KicCts(Box<Frame>),
    KicData,
    KicAck,
    KicEnd,
    KicFinish,
    KicCtsTimeout,
    DcfCts(NodeId),
    DcfData,
    DcfAck(NodeId, FlowId, PacketId),
    DcfCtsTimeout,
    DcfAckTimeout,
    DcfRespTimeout,
    DcfRespDone,
}

#[derive(Debug, Clone)]
enum Ev {
    TxEnd(TxId),
    Access(u64),
    Arrival(usize),
    WaitCheck,
    NavExpire(u64),
    NavReset(u64, Micros),
    Step(u64, Step),
}

impl Ev {
    fn kind(&self) -> EventKind {
        match self {
            Ev::TxEnd(_) => EventKind::TxEnd,
            Ev::Access(_) => EventKind::BackoffSlotBoundary,
            Ev::Arrival(_) => EventKind::PacketArrival,
            Ev::Step(_, Step::KicCts(_) | Step::KicData | Step::KicAck | Step::DcfCts(_) | Step::DcfData | Step::DcfAck(..)) => {
                EventKind::TxStart
            }
            _ => EventKind::TimerExpiry,
        }
    }
}

/// One participant's view of an E2E-KIC exchange.
#[derive(Debug, Clone)]
struct KicEx {
    key: ExKey,
    pos: usize,
    alpha: u32,
    beta: u8,
    initiator: bool,
    next_cts: bool,
    end: Micros,
    rx_packet: Option<PacketId>,
    sent: Option<PacketId>,
    acked: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum DcfRole {
    Idle,
    WaitCts { packet: PacketId, rx: NodeId },
    WaitAck { packet: PacketId },
    Responder { peer: NodeId },
}

struct Node {
    buffer: VecDeque<Packet>,
    known: KnownCache,
    accepted: HashSet<PacketId>,
    nav_until: Micros,
    nav_token: u64,
    /// Last instant this node's carrier turned busy.
    busy_at: Micros,
    backoff: Countdown,
    access_token: u64,
    access_at: Option<Micros>,
    last_busy_end: Micros,
    /// End of the extended deferral after sensing a frame it could not decode.
    eifs_until: Micros,
    cw: u32,
    history: AccessHistory,
    wait_until: BTreeMap<FlowId, Micros>,
    ex_token: u64,
    kic: Option<KicEx>,
    dcf: DcfRole,
    rng: ChaCha8Rng,
}

/// Position of a node inside one flow.
#[derive(Debug, Clone, Copy)]
struct Membership {
    flow: FlowId,
    /// 0-based index into the flow path.
    idx: usize,
}

pub(crate) struct World<'a> {
    t: TimingConfig,
    mac_cfg: &'a MacConfig,
    kind: MacKind,
    flows: &'a [FlowSpec],
    member: Vec<Vec<Membership>>,
    saturate_relays: bool,
    initiator: Option<usize>,
    medium: Medium,
    sched: Scheduler<Ev>,
    nodes: Vec<Node>,
    flow_rngs: Vec<ChaCha8Rng>,
    frames: HashMap<TxId, (Frame, Option<ExKey>)>,
    meta: HashMap<PacketId, PacketMeta>,
    next_packet: PacketId,
    stats: RunStats,
    record_hops: bool,
    trace: TraceMode,
    protocol: Vec<ProtoRecord>,
    events: Vec<EventRecord>,
}

pub fn simulate(cfg: &Config, scenario: &Scenario, opts: &RunOptions) -> Result<RunOutput, SimError> {
    let n = scenario.topology.len();
    for f in &scenario.flows {
        if f.path.len() < 2 || f.path.iter().any(|&x| x >= n) {
            return Err(SimError::Input(format!("flow {} has an invalid path", f.id)));
        }
    }
    if scenario.flows.iter().enumerate().any(|(k, f)| f.id as usize != k) {
        return Err(SimError::Input("flow ids must equal their index".into()));
    }
    let duration = (cfg.sim.duration_s * 1e6).round() as Micros;
    let warmup = (duration as f64 * cfg.sim.warmup_fraction).round() as Micros;
    let mut world = World::new(cfg, scenario, opts, duration, warmup);
    world.run(duration);
    Ok(world.finish())
}

impl<'a> World<'a> {
    fn new(cfg: &'a Config, sc: &'a Scenario, opts: &RunOptions, duration: Micros, warmup: Micros) -> Self {
        let n = sc.topology.len();
        let chan = Channel::new(&cfg.channel, &sc.topology.nodes);
        let duplex = match opts.mac {
            MacKind::E2ekic => Duplex::Full,
            MacKind::Dcf => Duplex::Half,
        };
        let mut member = vec![Vec::new(); n];
        for f in &sc.flows {
            for (idx, &node) in f.path.iter().enumerate() {
                member[node].push(Membership { flow: f.id, idx });
            }
        }
        let history = match cfg.mac.e2ekic.backoff {
            crate::mac::BackoffPolicy::AccessFrequency { history, .. } => history,
            crate::mac::BackoffPolicy::Fixed { .. } => 0,
        };
        let nodes = (0..n)
            .map(|k| Node {
                buffer: VecDeque::new(),
                known: KnownCache::new(cfg.mac.e2ekic.known_cache),
                accepted: HashSet::new(),
                nav_until: 0,
                nav_token: 0,
                busy_at: 0,
                backoff: Countdown::default(),
                access_token: 0,
                access_at: None,
                last_busy_end: 0,
                eifs_until: 0,
                cw: cfg.mac.dcf.cw_min,
                history: AccessHistory::new(history),
                wait_until: BTreeMap::new(),
                ex_token: 0,
                kic: None,
                dcf: DcfRole::Idle,
                rng: rng_stream(opts.seed, k as u64),
            })
            .collect();
        let flow_rngs = (0..sc.flows.len())
            .map(|k| rng_stream(opts.seed, (1 << 32) + k as u64))
            .collect();
        let stats = RunStats {
            seed: opts.seed,
            window_start: warmup,
            window_end: duration,
            flows: sc
                .flows
                .iter()
                .map(|f| FlowStats {
                    id: f.id,
                    ..FlowStats::default()
                })
                .collect(),
            node_tx_bits: vec![0; n],
            ..RunStats::default()
        };
        World {
            t: cfg.timing.clone(),
            mac_cfg: &cfg.mac,
            kind: opts.mac,
            flows: &sc.flows,
            member,
            saturate_relays: cfg.traffic.saturate_relays,
            initiator: sc.initiator.or(cfg.mac.e2ekic.initiator_position),
            medium: Medium::new(chan, duplex),
            sched: Scheduler::new(),
            nodes,
            flow_rngs,
            frames: HashMap::new(),
            meta: HashMap::new(),
            next_packet: 0,
            stats,
            record_hops: opts.record_hops,
            trace: opts.trace,
            protocol: Vec::new(),
            events: Vec::new(),
        }
    }

    fn run(&mut self, duration: Micros) {
        for k in 0..self.flows.len() {
            match self.flows[k].arrival {
                Arrival::Saturated => {}
                Arrival::Poisson | Arrival::Periodic => {
                    let first = self.next_gap(k, true);
                    let src = self.flows[k].source();
                    self.at(first, src, Ev::Arrival(k));
                }
            }
        }
        for node in 0..self.nodes.len() {
            self.top_up(node);
            self.try_access(node);
        }
        while let Some(ev) = self.sched.pop_until(duration) {
            if self.trace == TraceMode::Events {
                self.events.push(EventRecord {
                    t: ev.time,
                    seq: ev.seq,
                    kind: ev.payload.kind(),
                    node: ev.target,
                    detail: format!("{:?}", ev.payload),
                });
            }
            self.dispatch(ev.target, ev.payload);
        }
        self.sched.advance_to(duration);
    }

    fn finish(self) -> RunOutput {
        RunOutput {
            stats: self.stats,
            protocol: self.protocol,
            events: self.events,
        }
    }

    fn now(&self) -> Micros {
        self.sched.now()
    }

    fn at(&mut self, time: Micros, node: NodeId, ev: Ev) {
        let kind = ev.kind();
        self.sched
            .schedule(time, kind, node, ev)
            .expect("events are never scheduled in the past");
    }

    fn dispatch(&mut self, node: NodeId, ev: Ev) {
        match ev {
            Ev::TxEnd(id) => self.on_tx_end(id),
            Ev::Access(tok) => {
                if tok == self.nodes[node].access_token {
                    self.nodes[node].access_at = None;
                    self.nodes[node].backoff.clear();
                    match self.kind {
                        MacKind::E2ekic => self.kic_access(node),
                        MacKind::Dcf => self.dcf_access(node),
                    }
                }
            }
            Ev::Arrival(k) => self.on_arrival(k),
            Ev::WaitCheck => self.try_access(node),
            Ev::NavExpire(tok) => {
                if tok == self.nodes[node].nav_token {
                    self.try_access(node);
                }
            }
            Ev::NavReset(tok, prev) => self.on_nav_reset(node, tok, prev),
            Ev::Step(tok, step) => {
                if tok == self.nodes[node].ex_token {
                    match self.kind {
                        MacKind::E2ekic => self.kic_step(node, step),
                        MacKind::Dcf => self.dcf_step(node, step),
                    }
                }
            }
        }
    }

    // ---- traffic and buffers ----

    fn next_gap(&mut self, k: usize, first: bool) -> Micros {
        let f = &self.flows[k];
        let rate = f.packet_rate;
        let rng = &mut self.flow_rngs[k];
        let gap_s = match f.arrival {
            Arrival::Poisson => Exp::new(rate).expect("positive rate").sample(rng),
            Arrival::Periodic if first => rng.random_range(0.0..1.0 / rate),
            _ => 1.0 / rate,
        };
        self.sched.now() + ((gap_s * 1e6).round() as Micros).max(1)
    }

    fn new_packet(&mut self, flow: FlowId) -> PacketId {
        let id = self.next_packet;
        self.next_packet += 1;
        self.meta.insert(id, PacketMeta { created: self.now() });
        self.stats.flows[flow as usize].offered += 1;
        id
    }

    fn on_arrival(&mut self, k: usize) {
        let src = self.flows[k].source();
        let flow = self.flows[k].id;
        let id = self.new_packet(flow);
        if self.nodes[src].buffer.len() >= self.mac_cfg.buffer_capacity {
            self.stats.flows[k].dropped += 1;
        } else {
            self.enqueue(src, flow, id);
            self.try_access(src);
        }
        let next = self.next_gap(k, false);
        self.at(next, src, Ev::Arrival(k));
    }

    fn membership(&self, node: NodeId, flow: FlowId) -> Option<usize> {
        self.member[node].iter().find(|m| m.flow == flow).map(|m| m.idx)
    }

    fn enqueue(&mut self, node: NodeId, flow: FlowId, id: PacketId) {
        let now = self.now();
        let idx = self.membership(node, flow).expect("node lies on the flow");
        let n = self.flows[flow as usize].path.len();
        let mut eligible_at = now;
        if self.kind == MacKind::E2ekic && self.mac_cfg.e2ekic.contention_reduction && should_wait(n, idx + 1) {
            let running = self.nodes[node].wait_until.get(&flow).copied().filter(|&u| u > now);
            eligible_at = match running {
                Some(u) => u,
                None => {
                    let u = now + self.mac_cfg.e2ekic.t_wait_us;
                    self.nodes[node].wait_until.insert(flow, u);
                    self.at(u, node, Ev::WaitCheck);
                    u
                }
            };
        }
        let nd = &mut self.nodes[node];
        nd.known.insert_carried(id);
        nd.accepted.insert(id);
        nd.buffer.push_back(Packet {
            id,
            flow,
            attempts: 0,
            eligible_at,
        });
    }

    /// Keeps saturated sources (and relays, if configured) holding one packet per flow.
    fn top_up(&mut self, node: NodeId) {
        let members = self.member[node].clone();
        for m in members {
            let f = &self.flows[m.flow as usize];
            if f.arrival != Arrival::Saturated || m.idx + 1 == f.path.len() {
                continue;
            }
            if m.idx > 0 && !self.saturate_relays {
                continue;
            }
            let has = self.nodes[node].buffer.iter().any(|p| p.flow == m.flow);
            // with saturated relays every flow through a node keeps its stand-in,
            // however many flows cross it
            let full = !self.saturate_relays && self.nodes[node].buffer.len() >= self.mac_cfg.buffer_capacity;
            if has || full {
                continue;
            }
            let prev = (m.idx > 0).then(|| f.path[m.idx - 1]);
            let id = self.new_packet(m.flow);
            if let Some(prev) = prev {
                // a relay's stand-in packet counts as forwarded by its previous hop
                self.nodes[prev].known.insert_carried(id);
            }
            self.enqueue(node, m.flow, id);
        }
    }

    /// Hands a decoded DATA to `node`. Returns whether it may be acknowledged.
    fn accept_data(&mut self, node: NodeId, from: NodeId, flow: FlowId, id: PacketId) -> bool {
        let now = self.now();
        if self.nodes[node].accepted.contains(&id) {
            return true;
        }
        let f = &self.flows[flow as usize];
        let is_dest = f.destination() == node;
        if !is_dest && self.nodes[node].buffer.len() >= self.mac_cfg.buffer_capacity {
            return false;
        }
        let in_window = now >= self.stats.window_start;
        let bits = f.payload_bits;
        if in_window {
            self.stats.node_tx_bits[from] += bits;
            if self.record_hops {
                self.stats.hops.push(HopDelivery {
                    t: now,
                    sender: from,
                    receiver: node,
                    flow,
                    bits,
                    end_to_end: is_dest,
                });
            }
        }
        if is_dest {
            self.nodes[node].accepted.insert(id);
            self.nodes[node].known.insert_carried(id);
            let fs = &mut self.stats.flows[flow as usize];
            fs.delivered += 1;
            if in_window {
                fs.window_bits += bits;
                let created = self.meta.get(&id).map_or(now, |m| m.created);
                self.stats.delays_us.push(now - created);
            }
        } else {
            self.enqueue(node, flow, id);
        }
        true
    }

    fn remove_packet(&mut self, node: NodeId, id: PacketId) -> Option<Packet> {
        let b = &mut self.nodes[node].buffer;
        let k = b.iter().position(|p| p.id == id)?;
        b.remove(k)
    }

    /// Counts a failed attempt; drops the packet once the retry limit is spent.
    fn fail_attempt(&mut self, node: NodeId, id: PacketId, counted: bool) {
        let limit = self.mac_cfg.retry_limit;
        let Some(p) = self.nodes[node].buffer.iter_mut().find(|p| p.id == id) else {
            return;
        };
        if !counted {
            p.attempts += 1;
        }
        if p.attempts > limit {
            let flow = p.flow;
            self.remove_packet(node, id);
            self.stats.flows[flow as usize].dropped += 1;
        }
    }

    fn hol_for_flow(&self, node: NodeId, flow: FlowId) -> Option<PacketId> {
        self.nodes[node].buffer.iter().find(|p| p.flow == flow).map(|p| p.id)
    }

    // ---- radio ----

    fn transmit(&mut self, node: NodeId, frame: Frame, key: Option<ExKey>, role: &'static str) {
        let now = self.now();
        let t = &self.t;
        let id = self.medium.next_tx_id();
        let tx = match frame.kind {
            FrameKind::Data => Transmission::data(
                id,
                node,
                now,
                t.header_duration(),
                t.t_data(),
                frame.bit_order == crate::frames::BitOrder::Reversed,
                frame.payload.expect("DATA carries a packet"),
            ),
            k => Transmission::control(id, node, now, t.duration_of(k)),
        };
        let end = tx.end;
        if self.trace == TraceMode::Protocol {
            let ex = self.nodes[node].kic.as_ref().filter(|e| Some(e.key) == key);
            self.protocol.push(ProtoRecord::tx(now, end, node, role, &frame, key, tx.header, ex.map(|e| (e.pos, e.alpha, e.beta))));
        }
        let went_busy = self.medium.start(tx);
        self.frames.insert(id, (frame, key));
        self.at(end, node, Ev::TxEnd(id));
        for r in went_busy {
            self.on_busy(r);
        }
    }

    fn on_tx_end(&mut self, id: TxId) {
        let now = self.now();
        let (frame, key) = self.frames.remove(&id).expect("frame registered at start");
        let sender = frame.sender;
        let went_idle = self.medium.end(id, now);
        self.nodes[sender].last_busy_end = self.nodes[sender].last_busy_end.max(now);
        let hearers: Vec<NodeId> = self.medium.channel().neighbours(sender).to_vec();
        let mut decoded = Vec::new();
        for rx in hearers {
            let known = &self.nodes[rx].known;
            let rec = self.medium.deliver(id, rx, |p| known.contains(p));
            if rec == Reception::Lost {
                continue;
            }
            decoded.push(rx);
            if rec == Reception::Full {
                self.nodes[rx].eifs_until = 0;
            }
            match self.kind {
                MacKind::E2ekic => self.kic_receive(rx, &frame, key, rec),
                MacKind::Dcf => self.dcf_receive(rx, &frame, rec),
            }
        }
        let eifs = self.t.sifs + self.t.ack;
        for r in went_idle {
            if r != sender && !decoded.contains(&r) {
                self.nodes[r].eifs_until = now + eifs;
            }
            self.try_access(r);
        }
        self.try_access(sender);
    }

    // ---- channel access ----

    fn engaged(&self, node: NodeId) -> bool {
        match self.kind {
            MacKind::E2ekic => self.nodes[node].kic.is_some(),
            MacKind::Dcf => self.nodes[node].dcf != DcfRole::Idle,
        }
    }

    fn has_eligible(&self, node: NodeId) -> bool {
        self.eligible_packet(node).is_some()
    }

    /// The packet this node would contend for, if any.
    fn eligible_packet(&self, node: NodeId) -> Option<(PacketId, FlowId)> {
        let now = self.now();
        let nd = &self.nodes[node];
        match self.kind {
            MacKind::Dcf => nd.buffer.front().map(|p| (p.id, p.flow)),
            MacKind::E2ekic => nd
                .buffer
                .iter()
                .find(|p| {
                    p.eligible_at <= now
                        && self
                            .initiator
                            .is_none_or(|i| self.membership(node, p.flow) == Some(i - 1))
                })
                .map(|p| (p.id, p.flow)),
        }
    }

    fn draw(&mut self, node: NodeId) -> u32 {
        let w = match self.kind {
            MacKind::E2ekic => window(&self.mac_cfg.e2ekic.backoff, &self.nodes[node].history, node),
            MacKind::Dcf => self.nodes[node].cw + 1,
        };
        draw_backoff(&mut self.nodes[node].rng, w)
    }

    /// Arms or resumes the backoff countdown when the node may contend.
    fn try_access(&mut self, node: NodeId) {
        let now = self.now();
        let idle = !self.medium.carrier_busy(node) && now >= self.nodes[node].nav_until;
        if self.engaged(node) || !idle || !self.has_eligible(node) {
            self.freeze(node, false);
            return;
        }
        if self.nodes[node].access_at.is_some() {
            return;
        }
        if !self.nodes[node].backoff.is_armed() {
            let b = self.draw(node);
            self.nodes[node].backoff.set(b);
        }
        let nd = &self.nodes[node];
        let idle_ref = self
            .medium
            .idle_since(node)
            .max(nd.nav_until)
            .max(nd.last_busy_end)
            .max(nd.eifs_until);
        let start = now.max(idle_ref + self.t.difs);
        let slot = self.t.slot;
        let nd = &mut self.nodes[node];
        let fire = nd.backoff.resume(start, slot).expect("armed");
        nd.access_token += 1;
        nd.access_at = Some(fire);
        let tok = nd.access_token;
        self.at(fire, node, Ev::Access(tok));
    }

    /// Stops a running countdown. A countdown expiring at this very instant
    /// still fires when `same_slot` allows it: the node cannot sense a
    /// transmission that starts in its own slot.
    fn freeze(&mut self, node: NodeId, same_slot: bool) {
        let now = self.now();
        let slot = self.t.slot;
        let nd = &mut self.nodes[node];
        if let Some(fire) = nd.access_at {
            if same_slot && fire == now {
                return;
            }
            nd.backoff.freeze(now, slot);
            nd.access_at = None;
            nd.access_token += 1;
        }
    }

    fn on_busy(&mut self, node: NodeId) {
        self.nodes[node].busy_at = self.now();
        self.freeze(node, true);
    }

    /// NAV taken from an RTS; dropped again if the exchange it announced never
    /// shows up on the air.
    fn set_rts_nav(&mut self, node: NodeId, until: Micros, key: Option<ExKey>) {
        let now = self.now();
        let prev = self.nodes[node].nav_until;
        self.set_nav(node, until, key);
        if self.nodes[node].nav_until > prev.max(now) {
            let tok = self.nodes[node].nav_token;
            let check = now + 2 * self.t.sifs + self.t.cts + 2 * self.t.slot;
            self.at(check, node, Ev::NavReset(tok, prev));
        }
    }

    fn on_nav_reset(&mut self, node: NodeId, tok: u64, prev: Micros) {
        let set_at = self.now() - (2 * self.t.sifs + self.t.cts + 2 * self.t.slot);
        let nd = &mut self.nodes[node];
        if tok != nd.nav_token || nd.busy_at > set_at {
            return;
        }
        nd.nav_until = prev;
        nd.nav_token += 1;
        if self.trace == TraceMode::Protocol {
            let now = self.now();
            self.protocol.push(ProtoRecord::nav_reset(now, node, prev.max(now)));
        }
        self.try_access(node);
    }

    fn set_nav(&mut self, node: NodeId, until: Micros, key: Option<ExKey>) {
        let now = self.now();
        if until <= now {
            return;
        }
        if self.trace == TraceMode::Protocol {
            self.protocol.push(ProtoRecord::nav(now, node, until, key));
        }
        let nd = &mut self.nodes[node];
        if until > nd.nav_until {
            nd.nav_until = until;
            nd.nav_token += 1;
            let tok = nd.nav_token;
            self.at(until, node, Ev::NavExpire(tok));
        }
        self.freeze(node, true);
    }

    /// Ends an engagement: fresh backoff, contention resumes after DIFS.
    fn release(&mut self, node: NodeId) {
        let now = self.now();
        let nd = &mut self.nodes[node];
        nd.ex_token += 1;
        nd.last_busy_end = nd.last_busy_end.max(now);
        nd.backoff.clear();
        self.top_up(node);
        self.try_access(node);
    }

    fn in_window(&self) -> bool {
        self.now() >= self.stats.window_start
    }
}
