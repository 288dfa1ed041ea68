//! 802.11 DCF parameters: binary exponential backoff and handshake NAVs.

use serde::{Deserialize, Serialize};

use crate::engine::Micros;
use crate::frames::TimingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcfConfig {
    pub cw_min: u32,
    pub cw_max: u32,
}

impl Default for DcfConfig {
    fn default() -> Self {
        DcfConfig { cw_min: 31, cw_max: 1023 }
    }
}

impl DcfConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.cw_min > self.cw_max {
            return Err("dcf.cw_min must not exceed dcf.cw_max".into());
        }
        Ok(())
    }

    /// Window after a failed attempt: `2(cw + 1) − 1`, capped.
    pub fn grow(&self, cw: u32) -> u32 {
        (2 * (cw as u64 + 1) - 1).min(self.cw_max as u64) as u32
    }
}

/// NAV carried by an RTS, from its end to the end of the ACK.
pub fn rts_nav(t: &TimingConfig) -> Micros {
    3 * t.sifs + t.cts + t.data_frame_duration() + t.ack
}

pub fn cts_nav(t: &TimingConfig) -> Micros {
    2 * t.sifs + t.data_frame_duration() + t.ack
}

pub fn data_nav(t: &TimingConfig) -> Micros {
    t.sifs + t.ack
}

/// `DIFS + b·slot + RTS + 3 SIFS + CTS + DATA + ACK` for one clean handshake.
pub fn cycle_duration(backoff_slots: u32, t: &TimingConfig) -> Micros {
    t.difs + backoff_slots as Micros * t.slot + t.rts + rts_nav(t)
}

/// Time the sender waits for an ACK after its DATA ends.
pub fn ack_timeout(t: &TimingConfig) -> Micros {
    t.sifs + t.ack + t.difs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_doubles_and_caps() {
        let c = DcfConfig::default();
        assert_eq!(c.grow(31), 63);
        assert_eq!(c.grow(511), 1023);
        assert_eq!(c.grow(1023), 1023);
    }

    #[test]
    fn clean_cycle_duration() {
        let t = TimingConfig::default();
        let data = t.phy_header + t.mac_header + t.t_data();
        assert_eq!(cycle_duration(5, &t), t.difs + 5 * t.slot + t.rts + 3 * t.sifs + t.cts + data + t.ack);
    }

    #[test]
    fn navs_nest() {
        let t = TimingConfig::default();
        assert_eq!(rts_nav(&t), t.sifs + t.cts + cts_nav(&t));
        assert_eq!(cts_nav(&t), t.sifs + t.data_frame_duration() + data_nav(&t));
    }
}
