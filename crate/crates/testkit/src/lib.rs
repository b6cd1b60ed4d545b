//! Test oracles that recompute results by brute force, plus a random
//! generator of functions in the supported C subset.

pub mod dataflow;
pub mod gradcheck;
pub mod naive;
pub mod permute;
pub mod programs;
pub mod structure;
