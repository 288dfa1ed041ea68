//! Saturation throughput of the KIC MAC on a regular grid: a damped fixed
//! point over the initiation probability, the cooperation probability and the
//! mean time between backoff-state transitions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{cts_slots, TimingConfig};
use crate::mac::e2ekic::ack_delay;

#[derive(Debug, Error, PartialEq)]
pub enum SatError {
    #[error("P_c must lie strictly inside (0, 1), got {0}")]
    PcDomain(f64),
    #[error("window must be >= 1")]
    Window,
    #[error("initiation probability {value} is outside (0, 1] (variant {variant:?}, P_c={p_c}, W={w})")]
    OutOfDomain { value: f64, variant: ZVariant, p_c: f64, w: u32 },
    #[error("delta must be positive, got {0}")]
    Delta(f64),
    #[error("position l={0} equals the initiator")]
    Initiator(usize),
    #[error("probabilities left [0,1]: P_t={p_t}, P_c={p_c}")]
    Probability { p_t: f64, p_c: f64 },
    #[error("fixed point did not converge after {iterations} iterations (last update {update:e})")]
    NonConvergence { iterations: usize, update: f64 },
    #[error("grid spacing d={d} and range r={r} violate d <= r < 2d")]
    GridBand { d: f64, r: f64 },
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZVariant {
    /// `Z = (1−P_c)^{−W} / (1 − (1−P_c)^{−1})`, kept for audits; gives negative P_t.
    Verbatim,
    /// `Z = Σ_{k<W} (1−P_c)^k`.
    Geometric,
}

impl std::str::FromStr for ZVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "verbatim" => Ok(ZVariant::Verbatim),
            "geometric" => Ok(ZVariant::Geometric),
            other => Err(format!("unknown variant '{other}' (expected geometric|verbatim)")),
        }
    }
}

impl ZVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ZVariant::Verbatim => "verbatim",
            ZVariant::Geometric => "geometric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub w: u32,
    pub n_cs: u32,
    pub n_hid: u32,
    pub n_init: u32,
    pub n_path: usize,
    pub i: usize,
    pub payload_bits: f64,
    pub timing: TimingConfig,
    pub variant: ZVariant,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SaturationParams {
    /// Grid case from spacing `d` and range `r`, path of 10 initiated at node 6.
    pub fn grid(d: f64, r: f64, w: u32) -> Result<Self, SatError> {
        let (n_cs, n_hid) = derive_grid_params(d, r)?;
        let timing = TimingConfig::default();
        Ok(SaturationParams {
            w,
            n_cs,
            n_hid,
            n_init: n_cs - 2,
            n_path: 10,
            i: 6,
            payload_bits: timing.payload_bits as f64,
            timing,
            variant: ZVariant::Geometric,
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 100_000,
        })
    }

    pub fn a(&self) -> u32 {
        (self.i - 1) as u32
    }

    pub fn p(&self) -> u32 {
        (self.n_path - self.i) as u32
    }

    pub fn validate(&self) -> Result<(), SatError> {
        let bad = |m: &str| Err(SatError::Params(m.into()));
        if self.w == 0 {
            return Err(SatError::Window);
        }
        if self.n_cs < 3 {
            return bad("N_CS must be >= 3");
        }
        if self.n_init == 0 || self.n_init >= self.n_cs - 1 {
            return bad("N_init must satisfy 0 < N_init < N_CS - 1");
        }
        if self.i < 1 || self.i > self.n_path || self.n_path < 2 {
            return bad("initiator position must lie in 1..=N_path");
        }
        if self.i == self.n_path {
            return bad("initiator needs a next hop");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        self.timing.validate().map_err(|e| SatError::Params(e.to_string()))
    }

    /// Whole-exchange reservation: RTS through the final ACK plus SIFS and DIFS.
    pub fn t_nav_full(&self) -> f64 {
        let t = &self.timing;
        let (a, p) = (self.a(), self.p());
        let before_ack = ack_delay(a + p + 1, t).expect("at least two participants");
        (t.rts
            + cts_slots(a, p) as u64 * (t.sifs + t.cts)
            + t.t_data()
            + 2 * t.frame_diff()
            + before_ack
            + t.sifs
            + t.ack
            + t.difs) as f64
    }

    pub fn t_cts_timeout(&self) -> f64 {
        self.timing.cts_timeout() as f64
    }
}

pub fn init_prob(p_c: f64, w: u32, variant: ZVariant) -> Result<f64, SatError> {
    if !(p_c > 0.0 && p_c < 1.0) {
        return Err(SatError::PcDomain(p_c));
    }
    if w == 0 {
        return Err(SatError::Window);
    }
    let q = 1.0 - p_c;
    let wf = w as f64;
    let z = match variant {
        ZVariant::Verbatim => q.powf(-wf) / (1.0 - 1.0 / q),
        ZVariant::Geometric => geometric_sum(q, w),
    };
    let p_t = z * p_c / (z * wf * p_c + q * (wf - z));
    if !(p_t > 0.0 && p_t <= 1.0) {
        return Err(SatError::OutOfDomain { value: p_t, variant, p_c, w });
    }
    Ok(p_t)
}

/// `Σ_{k<w} q^k`, summed directly so `w = 1` gives exactly 1.
fn geometric_sum(q: f64, w: u32) -> f64 {
    if w > 4096 {
        return (1.0 - q.powf(w as f64)) / (1.0 - q);
    }
    let (mut acc, mut term) = (0.0, 1.0);
    for _ in 0..w {
        acc += term;
        term *= q;
    }
    acc
}

pub fn p_nhid(p_silent: f64, n_hid: u32, t_cts: f64, delta: f64) -> Result<f64, SatError> {
    if delta <= 0.0 {
        return Err(SatError::Delta(delta));
    }
    Ok(p_silent.powf(n_hid as f64 * t_cts / delta))
}

/// Probability that a node is successfully cooperated as the `l`-th node.
pub fn coop_prob(l: usize, prm: &SaturationParams, p_t: f64, p_silent: f64, p_nhid: f64) -> Result<f64, SatError> {
    let i = prm.i;
    if l == i {
        return Err(SatError::Initiator(l));
    }
    let dist = l.abs_diff(i) as f64;
    let indicator = if l + 1 > i { 1.0 } else { 0.0 };
    Ok(p_t
        * p_silent.powi(prm.n_cs as i32 - 1)
        * p_silent.powf((dist - 1.0) * prm.n_hid as f64)
        * p_nhid.powf(dist + 1.0 - indicator))
}

fn others(prm: &SaturationParams) -> impl Iterator<Item = usize> + '_ {
    (1..=prm.n_path).filter(move |&l| l != prm.i)
}

pub fn coop_prob_total(prm: &SaturationParams, p_t: f64, p_silent: f64, p_nhid: f64) -> f64 {
    others(prm)
        .map(|l| coop_prob(l, prm, p_t, p_silent, p_nhid).expect("l != i"))
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComponents {
    pub parts: [f64; 5],
    pub delta: f64,
    pub p_xtx: [f64; 3],
    pub p_xtx_all: f64,
}

pub fn delta_components(
    prm: &SaturationParams,
    p_t: f64,
    p_silent: f64,
    p_nhid: f64,
) -> Result<DeltaComponents, SatError> {
    let t_full = prm.t_nav_full();
    let t_to = prm.t_cts_timeout();
    let t = &prm.timing;
    let n_cs = prm.n_cs as i32;
    let n_init = prm.n_init as f64;
    let ps_cs2 = p_silent.powi(n_cs - 2);

    let p1 = n_init * p_t * ps_cs2;
    let d1 = p_silent * p1 * t_full;

    let mut p2_sum = 0.0;
    let mut pc_sum = 0.0;
    for l in others(prm) {
        let pc_l = coop_prob(l, prm, p_t, p_silent, p_nhid)?;
        p2_sum += n_init * pc_l * ps_cs2;
        pc_sum += pc_l;
    }
    let d2 = p_silent * p2_sum * t_full;

    let p_all = 1.0 - p_silent.powi(n_cs - 1);
    let p3 = p_all - (p1 + p2_sum);
    let miss2 = (1.0 - p_nhid).powi(2);
    let t3 = (1.0 - miss2) * t_full + miss2 * (t.rts + t.difs) as f64;
    let d3 = p_silent * p3 * t3;

    let cs_silent = p_silent.powi(n_cs - 1);
    let q = [
        p_t * cs_silent * cs_silent,
        2.0 * p_t * cs_silent * (1.0 - cs_silent),
        p_t * (1.0 - cs_silent).powi(2),
    ];
    let tq = [
        miss2 * t_to + (1.0 - miss2) * t_full,
        p_nhid * t_full + (1.0 - p_nhid) * t_to,
        t_to,
    ];
    let d4 = q[0] * tq[0] + q[1] * tq[1] + q[2] * tq[2];

    let d5 = pc_sum * t_full;

    let parts = [d1, d2, d3, d4, d5];
    Ok(DeltaComponents {
        parts,
        delta: parts.iter().sum(),
        p_xtx: [p1, p2_sum, p3],
        p_xtx_all: p_all,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationSolution {
    pub p_t: f64,
    pub p_c: f64,
    pub p_silent: f64,
    pub p_nhid: f64,
    pub delta: f64,
    pub parts: [f64; 5],
    pub s: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when the case-3 probability came out negative at the solution.
    pub negative_case3: bool,
}

pub fn throughput(prm: &SaturationParams, p_t: f64, p_c: f64, p_nhid: f64, delta: f64) -> Result<f64, SatError> {
    if delta <= 0.0 {
        return Err(SatError::Delta(delta));
    }
    let ps = 1.0 - p_t - p_c;
    let hid = ps.powi(prm.n_hid as i32);
    let l = prm.payload_bits;
    let init = p_t * ps.powi(prm.n_cs as i32 - 1) * hid * p_nhid * p_nhid * l / delta;
    let coop = p_c * (hid * p_nhid).powi(2) * l / delta;
    Ok(init + coop)
}

pub fn solve_fixed_point(prm: &SaturationParams) -> Result<SaturationSolution, SatError> {
    prm.validate()?;
    let lam = prm.damping;
    let t_cts = prm.timing.cts as f64;
    let mut p_c: f64 = 1e-3;
    let mut delta = prm.t_nav_full();
    let mut update = f64::INFINITY;
    for it in 1..=prm.max_iterations {
        let p_t = init_prob(p_c, prm.w, prm.variant)?;
        let ps = 1.0 - p_t - p_c;
        if !(0.0..=1.0).contains(&ps) {
            return Err(SatError::Probability { p_t, p_c });
        }
        let pn = p_nhid(ps, prm.n_hid, t_cts, delta)?;
        let pc_next = coop_prob_total(prm, p_t, ps, pn);
        let d_next = delta_components(prm, p_t, ps, pn)?.delta;
        let new_pc = (1.0 - lam) * p_c + lam * pc_next;
        let new_delta = (1.0 - lam) * delta + lam * d_next;
        if new_delta <= 0.0 {
            return Err(SatError::Delta(new_delta));
        }
        update = (new_pc - p_c).abs().max((new_delta - delta).abs() / new_delta);
        p_c = new_pc;
        delta = new_delta;
        if update < prm.tolerance {
            return finish(prm, p_c, delta, it);
        }
    }
    Err(SatError::NonConvergence {
        iterations: prm.max_iterations,
        update,
    })
}

fn finish(prm: &SaturationParams, p_c: f64, delta: f64, iterations: usize) -> Result<SaturationSolution, SatError> {
    let p_t = init_prob(p_c, prm.w, prm.variant)?;
    let ps = 1.0 - p_t - p_c;
    let pn = p_nhid(ps, prm.n_hid, prm.timing.cts as f64, delta)?;
    let dc = delta_components(prm, p_t, ps, pn)?;
    let pc_check = coop_prob_total(prm, p_t, ps, pn);
    let residual = (p_c - pc_check).abs().max((delta - dc.delta).abs() / delta);
    Ok(SaturationSolution {
        p_t,
        p_c,
        p_silent: ps,
        p_nhid: pn,
        delta,
        parts: dc.parts,
        s: throughput(prm, p_t, p_c, pn, delta)?,
        iterations,
        residual,
        negative_case3: dc.p_xtx[2] < 0.0,
    })
}

/// `(N_CS, N_hid)` for a grid with spacing `d` and range `r`.
pub fn derive_grid_params(d: f64, r: f64) -> Result<(u32, u32), SatError> {
    if !(d > 0.0 && d <= r && r < 2.0 * d) {
        return Err(SatError::GridBand { d, r });
    }
    let reach = |a: (i32, i32), b: (i32, i32)| {
        let dx = (a.0 - b.0) as f64 * d;
        let dy = (a.1 - b.1) as f64 * d;
        dx.hypot(dy) <= r * (1.0 + 1e-12)
    };
    let cells: Vec<(i32, i32)> = (-3..=3).flat_map(|x| (-3..=3).map(move |y| (x, y))).collect();
    let tx = (0, 0);
    let rx = (1, 0);
    let n_cs = cells.iter().filter(|&&c| reach(c, tx)).count() as u32;
    let n_hid = cells
        .iter()
        .filter(|&&c| reach(c, rx) && !reach(c, tx))
        .count() as u32;
    Ok((n_cs, n_hid))
}
