//! Bridge between the collaboration engine and a browser front end.
//!
//! [`protocol`] defines the wire messages, [`connection::Connection`] runs
//! the protocol for one client, and [`server`] carries it over WebSocket.

pub mod connection;
pub mod host;
pub mod outbox;
pub mod protocol;
pub mod server;

pub use connection::{Connection, Flow};
pub use host::{scripted_policy, ModelRegistry, PolicyFactory, SessionHost, DEFAULT_API_KEY_ENV};
pub use outbox::Outbox;
pub use protocol::{Kind, WireMessage, PROTOCOL_VERSION};
pub use server::{serve_blocking, GatewayError, GatewayServer, Timing, DEFAULT_BIND};
