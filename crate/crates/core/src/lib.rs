//! Discrete-event simulator and analytic models for end-to-end
//! known-interference cancellation in multi-hop wireless networks.

pub mod analytic;
pub mod engine;
pub mod experiment;
pub mod frames;
pub mod mac;
pub mod phy;
pub mod metrics;
pub mod scenario;
pub mod sim;
