//! Trace-driven single-core memory-hierarchy simulator with three learning
//! mechanisms: an RL-based hardware prefetcher, a hashed-perceptron off-chip
//! load predictor with speculative memory requests, and an RL coordinator
//! that gates both mechanisms and throttles prefetch aggressiveness.
//!
//! The crate is organized around the simulation pipeline:
//!
//! - [`trace`]: record format, parsing, and deterministic synthetic workloads
//! - [`memory`]: L1/L2/LLC hierarchy and a bandwidth-accounted DRAM channel
//! - [`prefetch`]: the prefetcher port and stride / next-line baselines
//! - [`pythia`]: the RL prefetcher (tile-coded Q-store, evaluation queue)
//! - [`hermes`]: the perceptron off-chip predictor and speculative datapath
//! - [`athena`]: the epoch-based coordination agent
//! - [`harness`]: configuration, the simulation loop, paired runs, reports

pub mod athena;
pub mod harness;
pub mod hash;
pub mod hermes;
pub mod memory;
pub mod prefetch;
pub mod pythia;
pub mod rng;
pub mod trace;

pub use harness::{
    load_config, paired_run, parse_config, run_simulation, MetricsReport, PairedReport, SimConfig,
    SimError, Simulation,
};
