//! Origin authentication for multicast links over one-way hash keychains.
//!
//! A transmitter commits to a chain of hashed keys and discloses them in
//! reverse, so every receiver sharing only a group MAC key can still tell
//! the genuine source apart from any other group member. This crate provides
//! the frame scheduling strategies, the wire codec, the unified receiver,
//! and a discrete-event simulator with loss and adversary models to measure
//! how the strategies behave on unreliable channels.

pub mod adversary;
pub mod channel;
pub mod keychain;
pub mod receiver;
pub mod transmitter;
pub mod wire;
