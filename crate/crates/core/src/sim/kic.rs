//! E2E-KIC: RTS/CTS cascade, concurrent Stage II DATA and paired ACKs.

use super::{Ev, ExKey, KicEx, Step, World};
use crate::engine::NodeId;
use crate::frames::{nav_cts, nav_data, nav_rts, BitOrder, FlowId, Frame, FrameKind};
use crate::mac::e2ekic::ExchangePlan;
use crate::phy::Reception;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Anterior,
    Posterior,
}

impl World<'_> {
    fn path(&self, flow: FlowId) -> &[NodeId] {
        &self.flows[flow as usize].path
    }

    fn can_join(&self, node: NodeId) -> bool {
        self.nodes[node].kic.is_none() && self.now() >= self.nodes[node].nav_until
    }

    fn role(ex: &KicEx) -> &'static str {
        if ex.initiator {
            "initiator"
        } else if ex.pos < ex.key.i {
            "anterior"
        } else {
            "posterior"
        }
    }

    pub(super) fn kic_access(&mut self, n: NodeId) {
        let Some((_, flow)) = self.eligible_packet(n) else {
            return;
        };
        let now = self.now();
        let idx = self.membership(n, flow).expect("buffered packets belong to a flow through the node");
        let path = self.path(flow);
        let len = path.len();
        let (next, prev) = (path[idx + 1], idx.checked_sub(1).map(|j| path[j]));
        let (cap_a, cap_p) = self.mac_cfg.e2ekic.hop_limits.unwrap_or((u32::MAX, u32::MAX));
        let a = (idx as u32).min(cap_a);
        let p = ((len - idx - 1) as u32).min(cap_p);
        let nav = nav_rts(a, p, &self.t).expect("a buffered packet always has a next hop");
        let key = ExKey {
            flow,
            i: idx + 1,
            t0: now,
        };
        self.join(n, key, a, p, idx + 1, true, false);
        let tok = self.nodes[n].ex_token;
        self.at(now + self.t.cts_timeout(), n, Ev::Step(tok, Step::KicCtsTimeout));
        self.nodes[n].history.observe(n);
        if self.in_window() {
            self.stats.exchanges += 1;
        }
        let frame = Frame::kic_rts(n, next, prev, flow, a, p, nav);
        self.transmit(n, frame, Some(key), "initiator");
    }

    #[allow(clippy::too_many_arguments)]
    fn join(&mut self, n: NodeId, key: ExKey, a: u32, p: u32, pos: usize, initiator: bool, next_cts: bool) {
        let plan = ExchangePlan::new(key.i, a, p, &self.t).expect("joined exchanges are well formed");
        let entry = plan.entry(pos).expect("participant lies inside the exchange").clone();
        self.freeze(n, false);
        let nd = &mut self.nodes[n];
        nd.ex_token += 1;
        let tok = nd.ex_token;
        let end = key.t0 + plan.end;
        nd.kic = Some(KicEx {
            key,
            pos,
            alpha: entry.alpha,
            beta: entry.beta,
            initiator,
            next_cts,
            end,
            rx_packet: None,
            sent: None,
            acked: false,
        });
        if self.trace == super::TraceMode::Protocol {
            let now = self.now();
            self.protocol.push(super::ProtoRecord::join(now, n, key, pos, entry.alpha, initiator));
        }
        if pos < key.i + p as usize {
            self.at(key.t0 + entry.data_offset, n, Ev::Step(tok, Step::KicData));
        }
        if let Some(off) = entry.ack_offset {
            self.at(key.t0 + off, n, Ev::Step(tok, Step::KicAck));
        }
        self.at(end, n, Ev::Step(tok, Step::KicEnd));
    }

    pub(super) fn kic_receive(&mut self, m: NodeId, f: &Frame, key: Option<ExKey>, rec: Reception) {
        match f.kind {
            FrameKind::Rts if rec == Reception::Full => self.kic_on_rts(m, f, key),
            FrameKind::Cts if rec == Reception::Full => self.kic_on_cts(m, f, key),
            FrameKind::Data => self.kic_on_data(m, f, key, rec),
            FrameKind::Ack if rec == Reception::Full => self.kic_on_ack(m, f),
            _ => {}
        }
    }

    fn kic_on_rts(&mut self, m: NodeId, f: &Frame, key: Option<ExKey>) {
        self.nodes[m].history.observe(f.sender);
        let now = self.now();
        let Some(flow) = f.flow else { return };
        let core = match (self.membership(m, flow), self.membership(f.sender, flow)) {
            (Some(im), Some(is)) if im == is + 1 && f.posterior >= 1 => Some((im, is, Side::Posterior)),
            (Some(im), Some(is)) if im + 1 == is && f.anterior >= 1 => Some((im, is, Side::Anterior)),
            _ => None,
        };
        let Some((im, is, side)) = core.filter(|_| self.can_join(m)) else {
            if f.ra1 != Some(m) {
                self.set_rts_nav(m, now + f.nav, key);
            }
            return;
        };
        let k = ExKey {
            flow,
            i: is + 1,
            t0: now - self.t.rts,
        };
        let pos = im + 1;
        self.join(m, k, f.anterior, f.posterior, pos, false, side == Side::Anterior);
        let path = self.path(flow);
        let (onward, limit, send_at) = match side {
            Side::Posterior => (path.get(im + 1).copied(), f.posterior, now + self.t.sifs),
            Side::Anterior => (im.checked_sub(1).map(|j| path[j]), f.anterior, now + self.t.theta() + self.t.sifs),
        };
        let nav = nav_cts(pos, k.i, f.nav, &self.t).expect("RTS NAV covers the cascade");
        let cts = Frame::kic_cts(m, f.sender, onward, limit, flow, f.anterior, f.posterior, 1, nav);
        let tok = self.nodes[m].ex_token;
        self.at(send_at, m, Ev::Step(tok, Step::KicCts(Box::new(cts))));
    }

    /// Recovers the exchange a CTS belongs to from its hop count and direction.
    fn cts_key(&self, f: &Frame) -> Option<(ExKey, Side)> {
        let flow = f.flow?;
        let is = self.membership(f.sender, flow)?;
        let path = self.path(flow);
        let h = f.hop_count as usize;
        let theta = self.t.theta();
        let now = self.now();
        let pos_s = is + 1;
        let (i, rts_end, side) = if is > 0 && f.ra1 == Some(path[is - 1]) && pos_s > h {
            (pos_s - h, now.checked_sub(h as u64 * theta)?, Side::Posterior)
        } else if f.ra1 == path.get(is + 1).copied() {
            (pos_s + h, now.checked_sub((h as u64 + 1) * theta)?, Side::Anterior)
        } else {
            return None;
        };
        let t0 = rts_end.checked_sub(self.t.rts)?;
        Some((ExKey { flow, i, t0 }, side))
    }

    fn kic_on_cts(&mut self, m: NodeId, f: &Frame, key: Option<ExKey>) {
        let now = self.now();
        if let Some((k, side)) = self.cts_key(f) {
            let flow = k.flow;
            if let Some(ex) = self.nodes[m].kic.as_ref().filter(|e| e.key == k) {
                let next = self.flows[flow as usize].path.get(ex.pos).copied();
                if f.ra1 == Some(m) && Some(f.sender) == next {
                    self.nodes[m].kic.as_mut().expect("checked").next_cts = true;
                }
                return;
            }
            if f.ra2 == Some(m) && self.can_join(m) {
                if let Some(im) = self.membership(m, flow) {
                    let pos = im + 1;
                    self.join(m, k, f.anterior, f.posterior, pos, false, side == Side::Anterior);
                    let path = self.path(flow);
                    let (onward, limit) = match side {
                        Side::Posterior => (path.get(im + 1).copied(), f.posterior),
                        Side::Anterior => (im.checked_sub(1).map(|j| path[j]), f.anterior),
                    };
                    let nav = nav_cts(pos, k.i, f.nav, &self.t).expect("upstream CTS NAV covers the cascade");
                    let cts = Frame::kic_cts(m, f.sender, onward, limit, flow, f.anterior, f.posterior, f.hop_count + 1, nav);
                    let tok = self.nodes[m].ex_token;
                    self.at(now + self.t.sifs, m, Ev::Step(tok, Step::KicCts(Box::new(cts))));
                    return;
                }
            }
        }
        self.set_nav(m, now + f.nav, key);
    }

    fn kic_on_data(&mut self, m: NodeId, f: &Frame, key: Option<ExKey>, rec: Reception) {
        let now = self.now();
        let (Some(flow), Some(pid)) = (f.flow, f.payload) else {
            return;
        };
        let own = self.nodes[m].kic.as_ref().is_some_and(|ex| {
            let path = &self.flows[flow as usize].path;
            let idx = ex.pos - 1;
            ex.key.flow == flow
                && now <= ex.end
                && (idx.checked_sub(1).map(|j| path[j]) == Some(f.sender) || path.get(idx + 1) == Some(&f.sender))
        });
        if own {
            if f.ra1 == Some(m) && rec == Reception::Full && self.accept_data(m, f.sender, flow, pid) {
                self.nodes[m].kic.as_mut().expect("checked").rx_packet = Some(pid);
            }
            return;
        }
        if rec == Reception::Full {
            self.nodes[m].known.insert(pid);
        }
        self.set_nav(m, now + f.nav, key);
    }

    fn kic_on_ack(&mut self, m: NodeId, f: &Frame) {
        if f.ra1 != Some(m) {
            return;
        }
        if let Some(ex) = self.nodes[m].kic.as_mut() {
            if ex.sent.is_some() && ex.sent == f.payload {
                ex.acked = true;
            }
        }
    }

    pub(super) fn kic_step(&mut self, n: NodeId, step: Step) {
        let Some(ex) = self.nodes[n].kic.clone() else {
            return;
        };
        let flow = ex.key.flow;
        let role = Self::role(&ex);
        match step {
            Step::KicCts(frame) => self.transmit(n, *frame, Some(ex.key), role),
            Step::KicData => {
                if !ex.next_cts {
                    return;
                }
                let Some(pid) = self.hol_for_flow(n, flow) else {
                    return;
                };
                let next = self.path(flow)[ex.pos];
                let nav = nav_data(ex.alpha, ex.beta, &self.t).expect("alpha >= 1");
                let frame = Frame::data(n, next, flow, pid, nav, BitOrder::from_beta(ex.beta));
                if let Some(p) = self.nodes[n].buffer.iter_mut().find(|p| p.id == pid) {
                    p.attempts += 1;
                }
                self.nodes[n].kic.as_mut().expect("checked").sent = Some(pid);
                self.transmit(n, frame, Some(ex.key), role);
            }
            Step::KicAck => {
                if let Some(pid) = ex.rx_packet {
                    let prev = self.path(flow)[ex.pos - 2];
                    self.transmit(n, Frame::ack(n, prev, flow, pid), Some(ex.key), role);
                }
            }
            Step::KicEnd => {
                // re-queued so frames ending at this instant are delivered first
                let tok = self.nodes[n].ex_token;
                let now = self.now();
                self.at(now, n, Ev::Step(tok, Step::KicFinish));
            }
            Step::KicFinish => {
                self.nodes[n].kic = None;
                if let Some(pid) = ex.sent {
                    if ex.acked {
                        self.remove_packet(n, pid);
                    } else {
                        self.fail_attempt(n, pid, true);
                    }
                }
                self.release(n);
            }
            Step::KicCtsTimeout => {
                if !ex.initiator || ex.next_cts {
                    return;
                }
                self.nodes[n].kic = None;
                if let Some(pid) = self.hol_for_flow(n, flow) {
                    self.fail_attempt(n, pid, false);
                }
                self.release(n);
            }
            _ => unreachable!("DCF step in an E2E-KIC run"),
        }
    }
}
