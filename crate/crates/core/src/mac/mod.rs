pub mod access;
pub mod dcf;
pub mod e2ekic;

use serde::{Deserialize, Serialize};

pub use access::BackoffPolicy;
pub use dcf::DcfConfig;

use crate::engine::Micros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacKind {
    E2ekic,
    Dcf,
}

impl MacKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MacKind::E2ekic => "e2ekic",
            MacKind::Dcf => "dcf",
        }
    }
}

impl std::str::FromStr for MacKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "e2ekic" => Ok(MacKind::E2ekic),
            "dcf" => Ok(MacKind::Dcf),
            other => Err(format!("unknown MAC '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KicConfig {
    pub backoff: BackoffPolicy,
    pub contention_reduction: bool,
    pub t_wait_us: Micros,
    /// Only the node at this flow position contends for the flow.
    pub initiator_position: Option<usize>,
    /// Caps on `(A, P)`; `None` uses the whole flow.
    pub hop_limits: Option<(u32, u32)>,
    pub known_cache: usize,
}

impl Default for KicConfig {
    fn default() -> Self {
        KicConfig {
            backoff: BackoffPolicy::default(),
            contention_reduction: true,
            t_wait_us: 50_000,
            initiator_position: None,
            hop_limits: None,
            known_cache: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacConfig {
    pub retry_limit: u32,
    pub buffer_capacity: usize,
    pub e2ekic: KicConfig,
    pub dcf: DcfConfig,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            retry_limit: 7,
            buffer_capacity: 50,
            e2ekic: KicConfig::default(),
            dcf: DcfConfig::default(),
        }
    }
}

impl MacConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.buffer_capacity == 0 {
            errs.push("mac.buffer_capacity must be >= 1".into());
        }
        if let Err(e) = self.e2ekic.backoff.validate() {
            errs.push(format!("mac.e2ekic.{e}"));
        }
        if self.e2ekic.initiator_position == Some(0) {
            errs.push("mac.e2ekic.initiator_position is 1-based".into());
        }
        if self.e2ekic.known_cache == 0 {
            errs.push("mac.e2ekic.known_cache must be >= 1".into());
        }
        if let Err(e) = self.dcf.validate() {
            errs.push(format!("mac.{e}"));
        }
        errs
    }
}
