//! Deterministic simulator for signaling algorithms on shared memory, with
//! remote-memory-reference accounting under the distributed shared memory
//! (DSM) and cache-coherent (CC) cost models.

pub mod algorithm;
pub mod checker;
pub mod cost;
pub mod experiment;
pub mod harness;
pub mod memory;
pub mod script;
