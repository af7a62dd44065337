//! Solvers producing assignments for a [`Model`].
//!
//! - [`solve_exact`]: depth-first branch-and-bound, certified optimal unless
//!   the time limit is hit.
//! - [`brute_force_oracle`]: exhaustive enumeration for tiny models, used to
//!   certify `solve_exact`.
//! - [`anneal_sample`]: independent simulated-annealing restarts over the
//!   Hamiltonian, mirroring a sample-many-keep-best device workflow.

mod anneal;
mod brute;
mod exact;

use std::fmt::Write as _;

use thiserror::Error;

use crate::expansion::{verify_assignment, Assignment, ExpansionError, FeasibilityReport, Model, VariableKind};

pub use anneal::{anneal_sample, AnnealParams, MoveKinds};
pub use brute::{brute_force_oracle, search_space_size, BRUTE_FORCE_LIMIT};
pub use exact::{solve_exact, ExactSolution, DEFAULT_TIME_LIMIT_SECS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("model is infeasible")]
    Infeasible,
    #[error("no feasible assignment found within {0} s")]
    TimedOut(f64),
    #[error("search space of {0:e} points exceeds the brute-force limit")]
    SearchSpaceTooLarge(f64),
    #[error("sample set is empty")]
    EmptySampleSet,
    #[error(transparent)]
    Model(#[from] ExpansionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub assignment: Assignment,
    /// Hamiltonian value at the integer point with tightest slacks.
    pub energy: f64,
    pub objective: f64,
    pub feasible: bool,
    pub restart_index: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Ordered by `(energy, restart_index)`.
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub params: AnnealParams,
}

impl SampleSet {
    pub fn best(&self) -> Option<&Sample> {
        self.samples.first()
    }

    pub fn best_feasible(&self) -> Option<&Sample> {
        self.samples.iter().find(|s| s.feasible)
    }

    /// CSV dump: `restart_index,energy,objective,feasible,wall_time_s`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["restart_index", "energy", "objective", "feasible", "wall_time_s"])
            .expect("in-memory write");
        for s in &self.samples {
            w.write_record([
                s.restart_index.to_string(),
                s.energy.to_string(),
                s.objective.to_string(),
                s.feasible.to_string(),
                format!("{:.6}", s.wall_time),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Everything except wall times, which are the only nondeterministic field.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        let _ = writeln!(out, "seed={} params={:?}", self.seed, self.params);
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{} {:016x} {:016x} {} {:?}",
                s.restart_index,
                s.energy.to_bits(),
                s.objective.to_bits(),
                s.feasible,
                s.assignment.values
            );
        }
        out.into_bytes()
    }
}

/// Zeroes every flow on an (arc, step) that has no vehicle. Vehicle counts are
/// left alone; the returned report re-checks the result.
pub fn postprocess_flows(model: &Model, a: &Assignment) -> Result<(Assignment, FeasibilityReport), ExpansionError> {
    let mut out = a.clone();
    for v in model.variables() {
        if v.kind != VariableKind::Flow {
            continue;
        }
        let has_vehicle = model.vehicle_var(v.arc, v.time).is_some_and(|z| a.values[z] > 0);
        if !has_vehicle {
            out.values[v.index] = 0;
        }
    }
    let report = verify_assignment(model, &out)?;
    Ok((out, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub best: f64,
    pub median: f64,
    pub worst: f64,
    pub feasible_fraction: f64,
    pub mean_wall_time: f64,
    pub histogram: Vec<HistogramBin>,
}

pub const HISTOGRAM_BINS: usize = 20;

pub fn summarize_samples(s: &SampleSet) -> Result<SummaryStats, SolveError> {
    if s.samples.is_empty() {
        return Err(SolveError::EmptySampleSet);
    }
    let mut energies: Vec<f64> = s.samples.iter().map(|x| x.energy).collect();
    energies.sort_by(f64::total_cmp);
    let n = energies.len();
    let median = if n % 2 == 1 {
        energies[n / 2]
    } else {
        0.5 * (energies[n / 2 - 1] + energies[n / 2])
    };
    let (lo, hi) = (energies[0], energies[n - 1]);
    // a degenerate range still gets 20 bins of unit width
    let width = if hi > lo {
        (hi - lo) / HISTOGRAM_BINS as f64
    } else {
        1.0
    };
    let mut histogram: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|b| HistogramBin {
            lower: lo + b as f64 * width,
            upper: if b + 1 == HISTOGRAM_BINS && hi > lo {
                hi
            } else {
                lo + (b + 1) as f64 * width
            },
            count: 0,
        })
        .collect();
    for e in &energies {
        let b = (((e - lo) / width).floor() as usize).min(HISTOGRAM_BINS - 1);
        histogram[b].count += 1;
    }
    Ok(SummaryStats {
        best: lo,
        median,
        worst: hi,
        feasible_fraction: s.samples.iter().filter(|x| x.feasible).count() as f64 / n as f64,
        mean_wall_time: s.samples.iter().map(|x| x.wall_time).sum::<f64>() / n as f64,
        histogram,
    })
}
