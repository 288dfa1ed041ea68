//! Frame records, protocol durations and NAV arithmetic.
//!
//! Frames are structured records rather than byte layouts; only their
//! durations matter to the simulator, and those come from [`TimingConfig`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Micros, NodeId};

pub type FlowId = u32;
pub type PacketId = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("invalid timing: {0}")]
    Timing(&'static str),
    #[error("posterior hop limit must be at least 1")]
    NoPosterior,
    #[error("position {0} is the initiator; CTS NAV is undefined there")]
    InitiatorPosition(usize),
    #[error("alpha must be >= 1, got {0}")]
    Alpha(u32),
    #[error("beta must be 0 or 1, got {0}")]
    Beta(u8),
    #[error("NAV underflow: upstream NAV {upstream} is shorter than the deduction {deduct}")]
    NavUnderflow { upstream: Micros, deduct: Micros },
}

/// All protocol time constants, in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub slot: Micros,
    pub sifs: Micros,
    pub difs: Micros,
    pub phy_header: Micros,
    pub mac_header: Micros,
    pub rts: Micros,
    pub cts: Micros,
    pub ack: Micros,
    pub data_rate_bps: u64,
    pub payload_bits: u64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            slot: 20,
            sifs: 10,
            difs: 50,
            phy_header: 192,
            mac_header: 246,
            rts: 352,
            cts: 304,
            ack: 304,
            data_rate_bps: 1_000_000,
            payload_bits: 8000,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), FrameError> {
        let durations = [
            self.slot,
            self.sifs,
            self.difs,
            self.phy_header,
            self.mac_header,
            self.rts,
            self.cts,
            self.ack,
        ];
        if durations.contains(&0) {
            return Err(FrameError::Timing("all durations must be positive"));
        }
        if self.difs <= self.sifs {
            return Err(FrameError::Timing("DIFS must exceed SIFS"));
        }
        if self.data_rate_bps == 0 || self.payload_bits == 0 {
            return Err(FrameError::Timing("data rate and payload must be positive"));
        }
        Ok(())
    }

    /// Airtime of the data part of a DATA frame, rounded up to whole microseconds.
    pub fn t_data(&self) -> Micros {
        (self.payload_bits * 1_000_000).div_ceil(self.data_rate_bps)
    }

    /// SIFS plus both headers: the offset between normal and reversed DATA frames.
    pub fn frame_diff(&self) -> Micros {
        self.sifs + self.phy_header + self.mac_header
    }

    /// One CTS-exchange slot.
    pub fn theta(&self) -> Micros {
        self.cts + self.sifs
    }

    pub fn header_duration(&self) -> Micros {
        self.phy_header + self.mac_header
    }

    pub fn data_frame_duration(&self) -> Micros {
        self.header_duration() + self.t_data()
    }

    pub fn cts_timeout(&self) -> Micros {
        self.rts + self.sifs + self.cts + self.difs
    }

    pub fn duration_of(&self, kind: FrameKind) -> Micros {
        match kind {
            FrameKind::Rts => self.rts,
            FrameKind::Cts => self.cts,
            FrameKind::Ack => self.ack,
            FrameKind::Data => self.data_frame_duration(),
        }
    }
}

/// Number of CTS-exchange slots in Stage I: `max(A+1, P)`.
pub fn cts_slots(anterior: u32, posterior: u32) -> u32 {
    (anterior + 1).max(posterior)
}

/// RTS NAV: reserves the medium until the end of the concurrent data stage,
/// counted from the end of the RTS.
pub fn nav_rts(anterior: u32, posterior: u32, t: &TimingConfig) -> Result<Micros, FrameError> {
    if posterior == 0 {
        return Err(FrameError::NoPosterior);
    }
    Ok(cts_slots(anterior, posterior) as Micros * (t.sifs + t.cts) + t.t_data() + 2 * t.frame_diff())
}

/// CTS NAV of the node at flow position `l` for an exchange initiated at `i`.
///
/// `upstream_nav` is the NAV carried by the frame that triggered this CTS:
/// the RTS for `l = i ± 1`, otherwise the neighbouring CTS closer to the initiator.
pub fn nav_cts(l: usize, i: usize, upstream_nav: Micros, t: &TimingConfig) -> Result<Micros, FrameError> {
    let theta = t.theta();
    let deduct = if l == i {
        return Err(FrameError::InitiatorPosition(l));
    } else if l + 1 == i {
        2 * theta
    } else {
        theta
    };
    upstream_nav
        .checked_sub(deduct)
        .ok_or(FrameError::NavUnderflow {
            upstream: upstream_nav,
            deduct,
        })
}

fn sign(x: i64) -> i64 {
    x.signum()
}

/// `(2α + 1 − sign(mod2(α+1) − ½)) / 4`, i.e. ⌈α/2⌉: the ACK slot in which
/// the DATA of participant α is acknowledged.
pub(crate) fn data_ack_slot(alpha: u32) -> u32 {
    let a = alpha as i64;
    // sign(mod2(α+1) − 0.5) evaluated on doubled integers to stay exact
    let s = sign(2 * ((a + 1) % 2) - 1);
    ((2 * a + 1 - s) / 4) as u32
}

/// DATA NAV of participant α, counted from the end of its DATA frame.
pub fn nav_data(alpha: u32, beta: u8, t: &TimingConfig) -> Result<Micros, FrameError> {
    if alpha < 1 {
        return Err(FrameError::Alpha(alpha));
    }
    if beta > 1 {
        return Err(FrameError::Beta(beta));
    }
    Ok(data_ack_slot(alpha) as Micros * (t.sifs + t.ack) + beta as Micros * t.frame_diff())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Rts => "RTS",
            FrameKind::Cts => "CTS",
            FrameKind::Data => "DATA",
            FrameKind::Ack => "ACK",
        }
    }
}

/// Order in which a DATA frame's bits are sent. `Reversed` sends the tail
/// first, so the headers sit at the end of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum BitOrder {
    #[default]
    Normal,
    Reversed,
}

impl BitOrder {
    pub fn from_beta(beta: u8) -> Self {
        if beta == 1 {
            BitOrder::Normal
        } else {
            BitOrder::Reversed
        }
    }
}

/// A MAC frame. `ra1`/`ra2` are receiver addresses; RTS frames carry the next
/// hop in `ra1` even though they are heard by every neighbour.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub kind: FrameKind,
    pub sender: NodeId,
    pub ra1: Option<NodeId>,
    pub ra2: Option<NodeId>,
    pub flow: Option<FlowId>,
    pub anterior: u32,
    pub posterior: u32,
    pub hop_count: u32,
    pub addr_prev: Option<NodeId>,
    pub nav: Micros,
    pub payload: Option<PacketId>,
    pub bit_order: BitOrder,
}

impl Frame {
    fn bare(kind: FrameKind, sender: NodeId) -> Self {
        Frame {
            kind,
            sender,
            ra1: None,
            ra2: None,
            flow: None,
            anterior: 0,
            posterior: 0,
            hop_count: 0,
            addr_prev: None,
            nav: 0,
            payload: None,
            bit_order: BitOrder::Normal,
        }
    }

    /// E2E-KIC RTS; `prev` is attached only when the anterior limit exceeds one.
    pub fn kic_rts(
        sender: NodeId,
        next: NodeId,
        prev: Option<NodeId>,
        flow: FlowId,
        anterior: u32,
        posterior: u32,
        nav: Micros,
    ) -> Self {
        Frame {
            ra1: Some(next),
            addr_prev: if anterior > 1 { prev } else { None },
            flow: Some(flow),
            anterior,
            posterior,
            nav,
            ..Frame::bare(FrameKind::Rts, sender)
        }
    }

    /// E2E-KIC CTS. `onward` is the next node further from the initiator on
    /// the sender's side; it becomes RA2 only if the side's hop limit allows
    /// one more hop (`limit >= hop_count + 1`).
    #[allow(clippy::too_many_arguments)]
    pub fn kic_cts(
        sender: NodeId,
        toward_initiator: NodeId,
        onward: Option<NodeId>,
        side_limit: u32,
        flow: FlowId,
        anterior: u32,
        posterior: u32,
        hop_count: u32,
        nav: Micros,
    ) -> Self {
        Frame {
            ra1: Some(toward_initiator),
            ra2: if side_limit > hop_count { onward } else { None },
            flow: Some(flow),
            anterior,
            posterior,
            hop_count,
            nav,
            ..Frame::bare(FrameKind::Cts, sender)
        }
    }

    pub fn data(sender: NodeId, receiver: NodeId, flow: FlowId, packet: PacketId, nav: Micros, order: BitOrder) -> Self {
        Frame {
            ra1: Some(receiver),
            flow: Some(flow),
            payload: Some(packet),
            nav,
            bit_order: order,
            ..Frame::bare(FrameKind::Data, sender)
        }
    }

    pub fn ack(sender: NodeId, receiver: NodeId, flow: FlowId, packet: PacketId) -> Self {
        Frame {
            ra1: Some(receiver),
            flow: Some(flow),
            payload: Some(packet),
            ..Frame::bare(FrameKind::Ack, sender)
        }
    }

    /// Plain 802.11 RTS/CTS (no hop fields).
    pub fn dcf_control(kind: FrameKind, sender: NodeId, receiver: NodeId, flow: FlowId, nav: Micros) -> Self {
        Frame {
            ra1: Some(receiver),
            flow: Some(flow),
            nav,
            ..Frame::bare(kind, sender)
        }
    }

    pub fn addressed_to(&self, node: NodeId) -> bool {
        self.ra1 == Some(node) || self.ra2 == Some(node)
    }

    /// Structural checks on the E2E-KIC hop fields.
    pub fn is_well_formed(&self) -> bool {
        match self.kind {
            FrameKind::Cts if self.flow.is_some() && (self.anterior > 0 || self.posterior > 0) => {
                self.hop_count >= 1 && self.hop_count <= cts_slots(self.anterior, self.posterior)
            }
            FrameKind::Rts if self.posterior > 0 => (self.anterior > 1) == self.addr_prev.is_some(),
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Timing used in the worked NAV examples.
    fn example_timing() -> TimingConfig {
        TimingConfig {
            sifs: 10,
            cts: 300,
            ack: 300,
            phy_header: 190,
            mac_header: 250,
            payload_bits: 8000,
            data_rate_bps: 1_000_000,
            ..TimingConfig::default()
        }
    }

    // Independent oracle: the printed DATA-NAV coefficient with real-valued sign/mod.
    fn eq7_coefficient(alpha: u32) -> f64 {
        let a = alpha as f64;
        let m = (a + 1.0) % 2.0;
        let s = (m - 0.5).signum();
        (2.0 * a + 1.0 - s) / 4.0
    }

    #[test]
    fn derived_quantities() {
        let t = example_timing();
        assert_eq!(t.frame_diff(), 450);
        assert_eq!(t.theta(), 310);
        assert_eq!(t.t_data(), 8000);
        let odd = TimingConfig { payload_bits: 1001, data_rate_bps: 2_000_000, ..t };
        assert_eq!(odd.t_data(), 501); // 500.5 rounds up
    }

    #[test]
    fn validate_rejects_bad_timing() {
        let t = TimingConfig { difs: 10, ..TimingConfig::default() };
        assert!(t.validate().is_err());
        let t = TimingConfig { cts: 0, ..TimingConfig::default() };
        assert!(t.validate().is_err());
        assert!(TimingConfig::default().validate().is_ok());
    }

    #[test]
    fn rts_nav_examples() {
        let t = example_timing();
        assert_eq!(nav_rts(0, 1, &t), Ok(9210));
        assert_eq!(nav_rts(2, 2, &t), Ok(9830));
        assert_eq!(nav_rts(5, 5, &t), Ok(10760));
        assert_eq!(nav_rts(3, 0, &t), Err(FrameError::NoPosterior));
    }

    #[test]
    fn cts_nav_examples() {
        let t = example_timing();
        let rts = nav_rts(2, 2, &t).unwrap();
        let i = 5;
        assert_eq!(nav_cts(i + 1, i, rts, &t), Ok(9520));
        assert_eq!(nav_cts(i - 1, i, rts, &t), Ok(9210));
        assert_eq!(nav_cts(i + 2, i, 9520, &t), Ok(9210));
        assert!(matches!(nav_cts(i, i, rts, &t), Err(FrameError::InitiatorPosition(5))));
    }

    #[test]
    fn data_nav_examples() {
        let t = example_timing();
        assert_eq!(nav_data(1, 1, &t), Ok(760));
        assert_eq!(nav_data(2, 1, &t), Ok(760));
        assert_eq!(nav_data(3, 0, &t), Ok(620));
        assert_eq!(nav_data(0, 1, &t), Err(FrameError::Alpha(0)));
    }

    #[test]
    fn data_ack_slot_matches_printed_formula() {
        for alpha in 1..200 {
            assert_eq!(data_ack_slot(alpha) as f64, eq7_coefficient(alpha), "alpha={alpha}");
        }
    }

    #[test]
    fn paired_alphas_share_ack_slot() {
        // The DATA from alpha is acknowledged by alpha + 1, so pairs (2k-1, 2k)
        // share the slot of the ACK pair (2k, 2k+1).
        for k in 1..50 {
            assert_eq!(data_ack_slot(2 * k - 1), data_ack_slot(2 * k));
            assert_ne!(data_ack_slot(2 * k), data_ack_slot(2 * k + 1));
        }
    }

    #[test]
    fn cts_navs_expire_together() {
        // Anchor each CTS NAV at its frame end; all must land on the RTS NAV end.
        let t = TimingConfig::default();
        let theta = t.theta();
        for (a, p) in [(0u32, 1u32), (2, 4), (5, 4), (3, 3), (6, 1)] {
            let i = a as usize + 1;
            let rts = nav_rts(a, p, &t).unwrap();
            let stage2_end = t.rts + rts; // relative to RTS start
            let mut upstream = rts;
            for k in 1..=p as usize {
                let nav = nav_cts(i + k, i, upstream, &t).unwrap();
                let cts_end = t.rts + k as u64 * theta;
                assert_eq!(cts_end + nav, stage2_end);
                upstream = nav;
            }
            let mut upstream = rts;
            for k in 1..=a as usize {
                let nav = nav_cts(i - k, i, upstream, &t).unwrap();
                let cts_end = t.rts + (k as u64 + 1) * theta;
                assert_eq!(cts_end + nav, stage2_end);
                upstream = nav;
            }
        }
    }

    #[test]
    fn frame_field_rules() {
        let rts = Frame::kic_rts(3, 4, Some(2), 1, 1, 2, 100);
        assert_eq!(rts.addr_prev, None);
        assert!(rts.is_well_formed());
        let rts = Frame::kic_rts(3, 4, Some(2), 1, 2, 2, 100);
        assert_eq!(rts.addr_prev, Some(2));

        let cts = Frame::kic_cts(4, 3, Some(5), 2, 1, 2, 2, 1, 10);
        assert_eq!(cts.ra2, Some(5));
        let last = Frame::kic_cts(5, 4, Some(6), 2, 1, 2, 2, 2, 10);
        assert_eq!(last.ra2, None);
        assert!(last.is_well_formed());
        let bad = Frame { hop_count: 9, ..last };
        assert!(!bad.is_well_formed());
    }
}
