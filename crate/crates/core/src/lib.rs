//! Deterministic, in-process IoT data marketplace.
//!
//! The crate wires together a block-clocked token ledger, a content-addressed
//! blob store, hierarchically deterministic payload encryption, a
//! smart-contract-style marketplace state machine, bidirectional payment
//! channels and a scripted multi-actor simulator. Everything is
//! deterministic: the same scenario and seed always produce the same event
//! log, byte for byte.

pub mod blobstore;
pub mod channels;
pub mod crypto;
pub mod events;
pub mod geohex;
pub mod ledger;
pub mod market;
