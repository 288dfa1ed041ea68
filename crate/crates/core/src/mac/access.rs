//! Contention-window policies and the frozen-countdown backoff timer.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{Micros, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackoffPolicy {
    /// Constant window; `b` uniform in `[0, w - 1]`.
    Fixed { w: u32 },
    /// Window scaled by the node's share of recently observed RTS accesses.
    AccessFrequency {
        w_base: u32,
        w_min: u32,
        w_max: u32,
        history: usize,
    },
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy::AccessFrequency {
            w_base: 32,
            w_min: 8,
            w_max: 1024,
            history: 100,
        }
    }
}

impl BackoffPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            BackoffPolicy::Fixed { w: 0 } => Err("backoff.w must be >= 1".into()),
            BackoffPolicy::AccessFrequency { w_base, w_min, w_max, history } => {
                if w_min == 0 || w_min > w_base || w_base > w_max {
                    Err("backoff windows must satisfy 1 <= w_min <= w_base <= w_max".into())
                } else if history == 0 {
                    Err("backoff.history must be >= 1".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Sliding record of who won the channel, as seen by one node.
#[derive(Debug, Clone, Default)]
pub struct AccessHistory {
    cap: usize,
    seen: VecDeque<NodeId>,
}

impl AccessHistory {
    pub fn new(cap: usize) -> Self {
        AccessHistory {
            cap,
            seen: VecDeque::with_capacity(cap),
        }
    }

    pub fn observe(&mut self, who: NodeId) {
        if self.cap == 0 {
            return;
        }
        if self.seen.len() == self.cap {
            self.seen.pop_front();
        }
        self.seen.push_back(who);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    /// `(own share, 1 / number of distinct accessors)`; `None` without history.
    pub fn shares(&self, me: NodeId) -> Option<(f64, f64)> {
        if self.seen.is_empty() {
            return None;
        }
        let mut ids: Vec<NodeId> = self.seen.iter().copied().collect();
        let mine = ids.iter().filter(|&&x| x == me).count();
        ids.sort_unstable();
        ids.dedup();
        let total = self.seen.len() as f64;
        Some((mine as f64 / total, 1.0 / ids.len() as f64))
    }
}

/// Current contention window under `policy` for node `me`.
pub fn window(policy: &BackoffPolicy, history: &AccessHistory, me: NodeId) -> u32 {
    match *policy {
        BackoffPolicy::Fixed { w } => w,
        BackoffPolicy::AccessFrequency { w_base, w_min, w_max, .. } => match history.shares(me) {
            None => w_base,
            Some((f_node, f_fair)) => {
                let w = (w_base as f64 * f_node / f_fair).round();
                (w as u32).clamp(w_min, w_max)
            }
        },
    }
}

pub fn draw_backoff<R: Rng>(rng: &mut R, w: u32) -> u32 {
    rng.random_range(0..w.max(1))
}

/// Backoff countdown that freezes while the medium is busy or NAV is set.
///
/// The counter only decreases by whole idle slots that elapsed after the
/// DIFS preceding each countdown segment.
#[derive(Debug, Clone, Default)]
pub struct Countdown {
    remaining: Option<u32>,
    segment_start: Option<Micros>,
}

impl Countdown {
    pub fn remaining(&self) -> Option<u32> {
        self.remaining
    }

    pub fn is_armed(&self) -> bool {
        self.remaining.is_some()
    }

    pub fn set(&mut self, slots: u32) {
        self.remaining = Some(slots);
        self.segment_start = None;
    }

    pub fn clear(&mut self) {
        self.remaining = None;
        self.segment_start = None;
    }

    pub fn running(&self) -> bool {
        self.segment_start.is_some()
    }

    /// Starts a counting segment whose first slot begins at `start`; returns
    /// the instant the counter reaches zero.
    pub fn resume(&mut self, start: Micros, slot: Micros) -> Option<Micros> {
        let b = self.remaining?;
        self.segment_start = Some(start);
        Some(start + b as Micros * slot)
    }

    /// Freezes at `now`, keeping slots not yet fully elapsed.
    pub fn freeze(&mut self, now: Micros, slot: Micros) {
        if let (Some(b), Some(s)) = (self.remaining, self.segment_start.take()) {
            if now > s {
                let elapsed = ((now - s) / slot).min(b as Micros) as u32;
                self.remaining = Some(b - elapsed);
            }
        }
    }
}
