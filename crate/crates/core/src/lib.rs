//! Conservatively-extrapolated value functions for imitation learning.
//!
//! The crate learns, from expert demonstrations alone, a value function that
//! matches the expert's values on demonstrated states and falls off linearly
//! with distance from them, together with a dynamics model. Acting greedily
//! through model and value ("induced policy") steers the agent back toward
//! the demonstrations when it drifts. Everything runs on small deterministic
//! sparse-reward tasks so that every claim can be checked numerically.

pub mod bc;
pub mod cli;
pub mod config;
pub mod demos;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod format;
pub mod rl;
pub mod tensor;
pub mod vins;

pub use error::{Error, Result};

// Training allocates many short-lived arrays of around 128 KiB, which the
// system allocator serves with a fresh mapping each time.
#[cfg(feature = "mimalloc")]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
