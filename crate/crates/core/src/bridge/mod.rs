//! Line-delimited JSON protocol for out-of-process models.
//!
//! A [`BridgeClient`] speaks to a server over a child process's stdio or a
//! TCP connection and implements [`Classifier`](crate::Classifier), so
//! remote models drop into the ensemble like local ones. The fixture server
//! and the conformance suite live here too; any third-party server can be
//! checked with [`run_conformance`].

mod client;
mod conformance;
mod protocol;
mod server;

pub use client::{
    handshake, BridgeClient, BridgeEndpoint, BridgeError, Capabilities, Transport, REMOTE_SUM_TOLERANCE,
};
pub use conformance::{run_conformance, CheckResult, ConformanceOptions, ConformanceReport};
pub use protocol::{Message, PROTOCOL_VERSION};
pub use server::{
    serve_connection, serve_stdio, serve_tcp, spawn_tcp_fixture, FixtureConfig, GenerateBehavior, PredictBehavior,
    FIXTURE_TIMEOUT,
};
