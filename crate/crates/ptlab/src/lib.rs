//! Std companion to `ptlab-core`: grid file formats, run manifests, fixture
//! generators, and the verification suites behind `ptlab verify`.
//!
//! The core crate owns all the numerics; this crate owns everything that
//! touches files, wall clocks, threads, or a terminal.

pub mod cli;
pub mod fixtures;
pub mod lgrid;
pub mod report;
pub mod suites;
