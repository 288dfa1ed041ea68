//! Exchange timing for the end-to-end KIC MAC: bit order, Stage II entry,
//! ACK slots and the per-exchange plan derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Micros;
use crate::frames::{cts_slots, data_ack_slot, nav_data, BitOrder, TimingConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("alpha {0} has no ACK: the first participant never acknowledges")]
    FirstParticipantAck(u32),
    #[error("hop count {h} is not valid for this group (slots {slots})")]
    HopCount { h: u32, slots: u32 },
    #[error("initiator position {i} with A={a} is outside the flow")]
    Position { i: usize, a: u32 },
}

/// Bit order selector: 1 for normal order, 0 for tail-first. Over α = 1, 2, 3, ...
/// the pattern is 1, 1, 0, 0 repeating.
pub fn beta(alpha: u32) -> u8 {
    (data_ack_slot(alpha) % 2) as u8
}

/// Which of the three Stage II entry rules applies to a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryGroup {
    /// `l >= i + 2`; timed from the CTS received from `l - 1`.
    Posterior,
    /// `i - 1, i, i + 1`; timed from the end of the RTS.
    Core,
    /// `l <= i - 2`; timed from the CTS received from `l + 1`.
    Anterior,
}

pub fn stage2_entry_delay(group: EntryGroup, a: u32, p: u32, h_cts: u32, t: &TimingConfig) -> Result<Micros, PlanError> {
    let slots = cts_slots(a, p);
    let remaining = match group {
        EntryGroup::Core => Some(slots),
        EntryGroup::Posterior => slots.checked_sub(h_cts),
        EntryGroup::Anterior => slots.checked_sub(h_cts + 1),
    };
    match remaining {
        Some(r) => Ok(r as Micros * t.theta()),
        None => Err(PlanError::HopCount { h: h_cts, slots }),
    }
}

/// ACK pairing index `c = ⌊α/2⌋`: participants 2k and 2k+1 share slot k.
fn ack_slot(alpha: u32) -> u32 {
    let a = alpha as i64;
    // (2α − 1 − sign(mod2(α) − ½)) / 4 with the sign taken on doubled integers
    let s = (2 * (a % 2) - 1).signum();
    ((2 * a - 1 - s) / 4) as u32
}

/// Delay from the nominal end of Stage II to participant α's ACK.
pub fn ack_delay(alpha: u32, t: &TimingConfig) -> Result<Micros, PlanError> {
    if alpha < 2 {
        return Err(PlanError::FirstParticipantAck(alpha));
    }
    let c = ack_slot(alpha) as Micros;
    Ok((c - 1) * t.ack + c * t.sifs)
}

/// Wait timer rule: half of each flow's nodes defer new packets by `T_wait`.
/// `idx` is the 1-based flow position, `n` the number of flow nodes.
pub fn should_wait(n: usize, idx: usize) -> bool {
    n % 2 != idx % 2
}

/// One participant's schedule relative to the RTS start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub position: usize,
    pub alpha: u32,
    pub beta: u8,
    pub data_offset: Micros,
    pub ack_offset: Option<Micros>,
    pub data_nav: Micros,
}

/// Nominal timeline of a fully cooperating exchange initiated at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangePlan {
    pub initiator: usize,
    pub a: u32,
    pub p: u32,
    /// Stage II entry, relative to the RTS start.
    pub stage2: Micros,
    /// Nominal end of Stage II (last DATA end), relative to the RTS start.
    pub stage2_end: Micros,
    /// End of the last ACK, relative to the RTS start.
    pub end: Micros,
    pub entries: Vec<PlanEntry>,
}

impl ExchangePlan {
    pub fn new(i: usize, a: u32, p: u32, t: &TimingConfig) -> Result<Self, PlanError> {
        if a as usize >= i {
            return Err(PlanError::Position { i, a });
        }
        let stage2 = t.rts + cts_slots(a, p) as Micros * t.theta();
        let stage2_end = stage2 + t.t_data() + 2 * t.frame_diff();
        let mut entries = Vec::new();
        let first = i - a as usize;
        for position in first..=i + p as usize {
            let alpha = (position - first + 1) as u32;
            let b = beta(alpha);
            let data_offset = stage2 + t.sifs + if b == 1 { 0 } else { t.frame_diff() };
            let ack_offset = ack_delay(alpha, t).ok().map(|d| stage2_end + d);
            entries.push(PlanEntry {
                position,
                alpha,
                beta: b,
                data_offset,
                ack_offset,
                data_nav: nav_data(alpha, b, t).expect("alpha >= 1"),
            });
        }
        let last_alpha = a + p + 1;
        let end = stage2_end + ack_slot(last_alpha) as Micros * (t.sifs + t.ack);
        Ok(ExchangePlan {
            initiator: i,
            a,
            p,
            stage2,
            stage2_end,
            end,
            entries,
        })
    }

    pub fn entry(&self, position: usize) -> Option<&PlanEntry> {
        self.entries.iter().find(|e| e.position == position)
    }

    pub fn order_of(beta: u8) -> BitOrder {
        BitOrder::from_beta(beta)
    }
}

/// End of the exchange relative to the end of Stage II.
pub fn ack_stage_len(a: u32, p: u32, t: &TimingConfig) -> Micros {
    ack_slot(a + p + 1) as Micros * (t.sifs + t.ack)
}
