//! Discrete-time stochastic model of the NDN-DPDK forwarder data plane,
//! with a statistical model-checking engine and a factor-sweep runner.
//!
//! Layout:
//!
//! * [`kernel`]: tick-synchronised component systems (locations, guarded
//!   transitions, sampled delays, port interactions) and trace execution.
//! * [`dist`]: latency laws, box-cox / ppcc distribution fitting.
//! * [`calibration`]: calibration profiles mapping factor combinations to
//!   latency laws, including the shipped synthetic profile.
//! * [`ndn`]: names, packets, PIT/CS composite table, FIB, name dispatch.
//! * [`forwarder`]: the consumer / input / forwarding / output / producer
//!   component system and its per-trace counters.
//! * [`smc`]: monitors, probability estimation and Wald's SPRT.
//! * [`experiment`]: factor sweeps, result CSVs, main effects and series.

pub mod calibration;
pub mod dist;
pub mod experiment;
pub mod forwarder;
pub mod kernel;
pub mod ndn;
pub mod rng;
pub mod smc;

pub use calibration::{CalibrationProfile, Placement, Role};
pub use dist::{Distribution, FitReport};
pub use forwarder::{Counters, FactorConfig};
pub use kernel::{Model, Trace};
pub use smc::{Monitor, SmcEstimate};
