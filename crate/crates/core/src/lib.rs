//! Engine for human-agent collaborative web navigation.
//!
//! An agent policy proposes one action at a time; a human may let it run,
//! approve it, or take over. Everything either actor does is recorded as an
//! attributed step, and the collaboration metrics are computed from that
//! record.

pub mod action;
pub mod clock;
pub mod events;
pub mod history;
pub mod metrics;
pub mod observation;
pub mod policy;
pub mod session;
pub mod sim;
pub mod store;

#[cfg(feature = "testkit")]
pub mod testkit;
