//! Time-dependent multicommodity network flow for space logistics.
//!
//! The pipeline runs instance → time-expanded model → penalty Hamiltonian →
//! solver → report tables:
//!
//! - [`instance`]: depots, arcs, commodities, schedule; the Earth-Moon-Mars scenario.
//! - [`expansion`]: the integer program, pruning, exact feasibility checks.
//! - [`hamiltonian`]: `H = P1 + alpha * P2` with integer slacks, energies, file export.
//! - [`solvers`]: branch-and-bound, brute force, restart annealer, post-processing.
//! - [`report`]: schedule tables and sample histograms.

pub mod clock;
pub mod expansion;
pub mod hamiltonian;
pub mod instance;
pub mod report;
pub mod solvers;

#[cfg(feature = "cli")]
pub mod cli;

#[cfg(test)]
pub(crate) mod test_support;
