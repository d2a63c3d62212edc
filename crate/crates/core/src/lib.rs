//! Packet-level simulator of SEEK utility routing over a CSMA/CA RTS/CTS
//! segment MAC with block-ACK ARQ.
//!
//! [`scenario::load_scenario`] turns a JSON document into a
//! [`scenario::ValidatedScenario`]; [`sim::run`] executes it and returns a
//! [`metrics::MetricsReport`] together with the [`sim::EventTrace`].

pub mod mac;
pub mod metrics;
pub mod model;
pub mod phy;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod time;
