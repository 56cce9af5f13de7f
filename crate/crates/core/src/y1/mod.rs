//! Analytics exposure interface: producer, consumer, wire formats, relay
//! framing, and transport security.

pub mod consumer;
pub mod producer;
pub mod relay;
pub mod tls;
pub mod wire;
