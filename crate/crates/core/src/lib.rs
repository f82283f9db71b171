//! Causality, run transformations and synchronization checks for a
//! round-based TSO machine with explicit write buffers and dispatchers.

pub mod causality;
pub mod dtf;
pub mod fixtures;
pub mod linearizability;
pub mod runtime;
pub mod trace;
pub mod tso;
