//! Lattice laboratory for the energy `T(E) = P(E) + W_p(E)`: the face
//! perimeter of a cell set plus the cheapest p-cost of transporting the set
//! onto an equal-volume disjoint target.
//!
//! Everything operates on finite unions of cubic lattice cells (`d = 1, 2, 3`)
//! so that volumes are exact cell counts times `h^d`, perimeters are exact
//! face counts times `h^(d-1)`, and the transport penalty is solved as an
//! integral min-cost flow. Estimators that are not exact (entropic transport,
//! reconstructed boundary length) are labelled as such at their definition and
//! never feed certificates.
//!
//! The crate is `no_std` compatible (`alloc` required); file formats, the
//! command line front end, and the verification suites live in the `ptlab`
//! companion crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod constructions;
pub mod lattice;
pub mod math;
mod perimeter;
pub mod reduction;
pub mod search;
pub mod transport;

pub use constructions::{Certificate, CoveringResult, PackingLayout, RearrangeResult};
pub use lattice::{Cell, GeometrySummary, IsoDeficit, LatticeSet};
pub use reduction::{
    DEFAULT_GAMMA_THRESHOLD, EnergyReport, ImprovementOutcome, PartitionGap, ReductionError,
    ScanCenter, TruncationCase, TruncationReport, TruncationRow, energy_t, lambda_to_m,
    m_to_lambda, partition_gap, truncation_scan, try_split_improvement,
};
pub use search::{
    AnnealConfig, InitKind, OracleRow, OracleTable, SearchError, SearchTrace, SweepOutcome,
    SweepRecord, TempRecord, anneal, ball_init, equal_intervals_oracle, equal_intervals_set,
    random_scatter, sweep,
};
pub use transport::{
    PlanEntry, SinkhornEstimate, TransportError, TransportPlan, WassersteinResult,
    wasserstein_distance, wasserstein_functional,
};
