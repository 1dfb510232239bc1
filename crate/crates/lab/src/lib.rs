//! Experiment driver for the random-mass lattice study: configs, sweeps,
//! result files and the rate table.

pub mod cache;
pub mod config;
pub mod csv;
pub mod runner;
pub mod snapshot;
pub mod table;
