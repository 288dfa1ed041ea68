//! Protocol-level trace records and the checker for the E2E-KIC timing invariants.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::{Micros, NodeId};
use crate::frames::{FlowId, Frame, PacketId};

/// Identifies one exchange: flow, initiator position (1-based) and RTS start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExKey {
    pub flow: FlowId,
    pub i: usize,
    pub t0: Micros,
}

/// One line of the protocol trace. `kind` is a frame kind for transmissions,
/// `JOIN` when a node enters an exchange and `NAV` when a node sets its NAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtoRecord {
    pub t: Micros,
    pub node: NodeId,
    pub role: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nav: Option<Micros>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<Micros>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub header: Option<(Micros, Micros)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub packet: Option<PacketId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<ExKey>,
}

impl ProtoRecord {
    fn base(t: Micros, node: NodeId, role: &str, kind: &str) -> Self {
        ProtoRecord {
            t,
            node,
            role: role.to_string(),
            kind: kind.to_string(),
            flow: None,
            alpha: None,
            beta: None,
            nav: None,
            end: None,
            header: None,
            pos: None,
            packet: None,
            key: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn tx(
        t: Micros,
        end: Micros,
        node: NodeId,
        role: &str,
        f: &Frame,
        key: Option<ExKey>,
        header: (Micros, Micros),
        place: Option<(usize, u32, u8)>,
    ) -> Self {
        ProtoRecord {
            flow: f.flow,
            nav: Some(f.nav),
            end: Some(end),
            header: Some(header),
            pos: place.map(|p| p.0),
            alpha: place.map(|p| p.1),
            beta: place.map(|p| p.2),
            packet: f.payload,
            key,
            ..Self::base(t, node, role, f.kind.as_str())
        }
    }

    pub(crate) fn join(t: Micros, node: NodeId, key: ExKey, pos: usize, alpha: u32, initiator: bool) -> Self {
        ProtoRecord {
            flow: Some(key.flow),
            pos: Some(pos),
            alpha: Some(alpha),
            key: Some(key),
            ..Self::base(t, node, if initiator { "initiator" } else { "participant" }, "JOIN")
        }
    }

    pub(crate) fn nav(t: Micros, node: NodeId, until: Micros, key: Option<ExKey>) -> Self {
        ProtoRecord {
            end: Some(until),
            key,
            ..Self::base(t, node, "listener", "NAV")
        }
    }

    /// The NAV set by an unanswered RTS is withdrawn, falling back to `until`.
    pub(crate) fn nav_reset(t: Micros, node: NodeId, until: Micros) -> Self {
        ProtoRecord {
            end: Some(until),
            ..Self::base(t, node, "listener", "NAV_RESET")
        }
    }

    fn is_tx(&self) -> bool {
        matches!(self.kind.as_str(), "RTS" | "CTS" | "DATA" | "ACK")
    }
}

/// Violation counts per invariant, plus how much was checked.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InvariantReport {
    pub exchanges: usize,
    pub stage2_exchanges: usize,
    pub header_overlap: Vec<String>,
    pub cts_pairing: Vec<String>,
    pub ack_pairing: Vec<String>,
    pub control_repeats: Vec<String>,
    pub nav_violations: Vec<String>,
    pub retransmissions: Vec<String>,
}

impl InvariantReport {
    pub fn violations(&self) -> usize {
        self.header_overlap.len()
            + self.cts_pairing.len()
            + self.ack_pairing.len()
            + self.control_repeats.len()
            + self.nav_violations.len()
            + self.retransmissions.len()
    }

    pub fn merge(&mut self, other: InvariantReport) {
        self.exchanges += other.exchanges;
        self.stage2_exchanges += other.stage2_exchanges;
        self.header_overlap.extend(other.header_overlap);
        self.cts_pairing.extend(other.cts_pairing);
        self.ack_pairing.extend(other.ack_pairing);
        self.control_repeats.extend(other.control_repeats);
        self.nav_violations.extend(other.nav_violations);
        self.retransmissions.extend(other.retransmissions);
    }
}

fn overlaps(a: (Micros, Micros), b: (Micros, Micros)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Checks an E2E-KIC protocol trace against the exchange invariants.
pub fn check_invariants(records: &[ProtoRecord], retry_limit: u32) -> InvariantReport {
    let mut rep = InvariantReport::default();
    let mut by_key: BTreeMap<ExKey, Vec<&ProtoRecord>> = BTreeMap::new();
    let mut joins: BTreeMap<(NodeId, ExKey), Micros> = BTreeMap::new();
    let mut data_count: BTreeMap<(NodeId, PacketId), u32> = BTreeMap::new();
    for r in records {
        if let Some(k) = r.key {
            if r.is_tx() {
                by_key.entry(k).or_default().push(r);
            } else if r.kind == "JOIN" {
                joins.entry((r.node, k)).or_insert(r.t);
            }
        }
        if r.kind == "DATA" {
            if let Some(p) = r.packet {
                *data_count.entry((r.node, p)).or_default() += 1;
            }
        }
    }
    for ((node, p), c) in data_count {
        if c > retry_limit + 1 {
            rep.retransmissions.push(format!("node {node} sent packet {p} {c} times"));
        }
    }
    for (key, txs) in &by_key {
        rep.exchanges += 1;
        let mut ctrl: BTreeMap<NodeId, u32> = BTreeMap::new();
        let mut cts_at: BTreeMap<usize, Micros> = BTreeMap::new();
        let mut data: BTreeMap<usize, &ProtoRecord> = BTreeMap::new();
        let mut acks: BTreeMap<u32, Micros> = BTreeMap::new();
        for r in txs {
            match r.kind.as_str() {
                "RTS" => *ctrl.entry(r.node).or_default() += 1,
                "CTS" => {
                    *ctrl.entry(r.node).or_default() += 1;
                    if let Some(p) = r.pos {
                        cts_at.insert(p, r.t);
                    }
                }
                "DATA" => {
                    if let Some(p) = r.pos {
                        data.insert(p, r);
                    }
                }
                "ACK" => {
                    if let Some(a) = r.alpha {
                        acks.insert(a, r.t);
                    }
                }
                _ => {}
            }
        }
        for (node, c) in ctrl {
            if c > 1 {
                rep.control_repeats.push(format!("{key:?}: node {node} sent {c} control frames"));
            }
        }
        let i = key.i;
        for (&pos, &t) in &cts_at {
            if pos < i {
                let j = i - pos;
                if let Some(&t2) = cts_at.get(&(i + j + 1)) {
                    if t2 != t {
                        rep.cts_pairing.push(format!("{key:?}: CTS of {pos} at {t}, of {} at {t2}", i + j + 1));
                    }
                }
            }
        }
        for (&a, &t) in &acks {
            if a % 2 == 0 {
                if let Some(&t2) = acks.get(&(a + 1)) {
                    if t2 != t {
                        rep.ack_pairing.push(format!("{key:?}: ACK of alpha {a} at {t}, of {} at {t2}", a + 1));
                    }
                }
            }
        }
        if !data.is_empty() {
            rep.stage2_exchanges += 1;
        }
        for (&u, up) in data.iter() {
            let pos = u + 1;
            let Some(down) = data.get(&(pos + 1)) else {
                continue;
            };
            let (uh, dh) = (up.header.expect("DATA header"), down.header.expect("DATA header"));
            let (uf, df) = ((up.t, up.end.expect("end")), (down.t, down.end.expect("end")));
            if overlaps(uh, df) || overlaps(dh, uf) {
                rep.header_overlap.push(format!("{key:?}: headers reaching position {pos} overlap"));
            }
        }
    }
    // NAV safety: no transmission inside a NAV period unless it belongs to an
    // exchange joined no later than the NAV was set.
    let mut navs: BTreeMap<NodeId, Vec<(Micros, Micros)>> = BTreeMap::new();
    for r in records {
        let until = r.end.unwrap_or(r.t);
        match r.kind.as_str() {
            "NAV" => navs.entry(r.node).or_default().push((r.t, until)),
            "NAV_RESET" => {
                for iv in navs.entry(r.node).or_default().iter_mut() {
                    if iv.0 <= r.t && iv.1 > r.t {
                        iv.1 = until.max(r.t);
                    }
                }
            }
            _ => {}
        }
    }
    let mut seen = BTreeSet::new();
    for r in records.iter().filter(|r| r.is_tx()) {
        let Some(list) = navs.get(&r.node) else {
            continue;
        };
        for &(set, until) in list {
            if r.t <= set || r.t >= until {
                continue;
            }
            let ok = r.key.and_then(|k| joins.get(&(r.node, k))).is_some_and(|&j| j <= set);
            if !ok && seen.insert((r.node, r.t)) {
                rep.nav_violations.push(format!("node {} sent {} at {} under NAV set at {set} until {until}", r.node, r.kind, r.t));
            }
        }
    }
    rep
}
