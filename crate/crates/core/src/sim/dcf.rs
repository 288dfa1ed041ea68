//! IEEE 802.11 DCF with RTS/CTS and binary exponential backoff.

use super::{DcfRole, Ev, Step, World};
use crate::engine::NodeId;
use crate::frames::{BitOrder, Frame, FrameKind};
use crate::mac::dcf::{ack_timeout, cts_nav, data_nav, rts_nav};
use crate::phy::Reception;

impl World<'_> {
    fn dcf_set(&mut self, n: NodeId, role: DcfRole) -> u64 {
        let nd = &mut self.nodes[n];
        nd.dcf = role;
        nd.ex_token += 1;
        nd.ex_token
    }

    pub(super) fn dcf_access(&mut self, n: NodeId) {
        let Some((pid, flow)) = self.eligible_packet(n) else {
            return;
        };
        let now = self.now();
        let idx = self.membership(n, flow).expect("buffered packets belong to a flow through the node");
        let rx = self.flows[flow as usize].path[idx + 1];
        let tok = self.dcf_set(n, DcfRole::WaitCts { packet: pid, rx });
        self.at(now + self.t.cts_timeout(), n, Ev::Step(tok, Step::DcfCtsTimeout));
        if self.in_window() {
            self.stats.exchanges += 1;
        }
        let frame = Frame::dcf_control(FrameKind::Rts, n, rx, flow, rts_nav(&self.t));
        self.transmit(n, frame, None, "dcf");
    }

    pub(super) fn dcf_receive(&mut self, m: NodeId, f: &Frame, rec: Reception) {
        let now = self.now();
        let to_me = f.ra1 == Some(m);
        match f.kind {
            FrameKind::Rts if rec == Reception::Full => {
                if !to_me {
                    self.set_rts_nav(m, now + f.nav, None);
                } else if self.nodes[m].dcf == DcfRole::Idle && now >= self.nodes[m].nav_until {
                    self.freeze(m, false);
                    let tok = self.dcf_set(m, DcfRole::Responder { peer: f.sender });
                    self.at(now + self.t.sifs, m, Ev::Step(tok, Step::DcfCts(f.sender)));
                    let data_end = now + 2 * self.t.sifs + self.t.cts + self.t.data_frame_duration();
                    self.at(data_end + self.t.sifs, m, Ev::Step(tok, Step::DcfRespTimeout));
                }
            }
            FrameKind::Cts if rec == Reception::Full => {
                if !to_me {
                    self.set_nav(m, now + f.nav, None);
                } else if let DcfRole::WaitCts { packet, rx } = self.nodes[m].dcf {
                    if rx == f.sender {
                        let tok = self.dcf_set(m, DcfRole::WaitAck { packet });
                        self.at(now + self.t.sifs, m, Ev::Step(tok, Step::DcfData));
                    }
                }
            }
            FrameKind::Data => {
                let (Some(flow), Some(pid)) = (f.flow, f.payload) else {
                    return;
                };
                if !to_me {
                    self.set_nav(m, now + f.nav, None);
                    if rec == Reception::Full {
                        self.nodes[m].known.insert(pid);
                    }
                    return;
                }
                let free = matches!(self.nodes[m].dcf, DcfRole::Idle | DcfRole::Responder { .. });
                if rec == Reception::Full && free && self.accept_data(m, f.sender, flow, pid) {
                    self.freeze(m, false);
                    let tok = self.dcf_set(m, DcfRole::Responder { peer: f.sender });
                    self.at(now + self.t.sifs, m, Ev::Step(tok, Step::DcfAck(f.sender, flow, pid)));
                    self.at(now + self.t.sifs + self.t.ack, m, Ev::Step(tok, Step::DcfRespDone));
                }
            }
            FrameKind::Ack if rec == Reception::Full && to_me => {
                if let DcfRole::WaitAck { packet } = self.nodes[m].dcf {
                    if f.payload == Some(packet) {
                        self.dcf_set(m, DcfRole::Idle);
                        self.remove_packet(m, packet);
                        self.nodes[m].cw = self.mac_cfg.dcf.cw_min;
                        self.release(m);
                    }
                }
            }
            _ => {}
        }
    }

    pub(super) fn dcf_step(&mut self, n: NodeId, step: Step) {
        match step {
            Step::DcfCts(peer) => {
                let flow = self.frames_flow_hint(n, peer);
                let frame = Frame::dcf_control(FrameKind::Cts, n, peer, flow, cts_nav(&self.t));
                self.transmit(n, frame, None, "dcf");
            }
            Step::DcfData => {
                let DcfRole::WaitAck { packet } = self.nodes[n].dcf else {
                    return;
                };
                let Some(p) = self.nodes[n].buffer.iter_mut().find(|p| p.id == packet) else {
                    return;
                };
                p.attempts += 1;
                let flow = p.flow;
                let idx = self.membership(n, flow).expect("node lies on the flow");
                let rx = self.flows[flow as usize].path[idx + 1];
                let frame = Frame::data(n, rx, flow, packet, data_nav(&self.t), BitOrder::Normal);
                let tok = self.nodes[n].ex_token;
                let done = self.now() + self.t.data_frame_duration() + ack_timeout(&self.t);
                self.at(done, n, Ev::Step(tok, Step::DcfAckTimeout));
                self.transmit(n, frame, None, "dcf");
            }
            Step::DcfAck(peer, flow, pid) => {
                self.transmit(n, Frame::ack(n, peer, flow, pid), None, "dcf");
            }
            Step::DcfRespTimeout | Step::DcfRespDone => {
                self.dcf_set(n, DcfRole::Idle);
                self.release(n);
            }
            Step::DcfCtsTimeout => {
                let DcfRole::WaitCts { packet, .. } = self.nodes[n].dcf else {
                    return;
                };
                self.dcf_fail(n, packet, false);
            }
            Step::DcfAckTimeout => {
                let DcfRole::WaitAck { packet } = self.nodes[n].dcf else {
                    return;
                };
                self.dcf_fail(n, packet, true);
            }
            _ => unreachable!("E2E-KIC step in a DCF run"),
        }
    }

    fn dcf_fail(&mut self, n: NodeId, packet: u64, counted: bool) {
        self.dcf_set(n, DcfRole::Idle);
        let before = self.nodes[n].buffer.len();
        self.fail_attempt(n, packet, counted);
        let cw = self.nodes[n].cw;
        self.nodes[n].cw = if self.nodes[n].buffer.len() < before {
            self.mac_cfg.dcf.cw_min
        } else {
            self.mac_cfg.dcf.grow(cw)
        };
        self.release(n);
    }

    /// Flow shared by a responder and its peer, for the CTS flow field.
    fn frames_flow_hint(&self, n: NodeId, peer: NodeId) -> u32 {
        self.member[n]
            .iter()
            .find(|m| m.idx > 0 && self.flows[m.flow as usize].path[m.idx - 1] == peer)
            .map_or(0, |m| m.flow)
    }
}
