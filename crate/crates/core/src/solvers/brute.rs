//! Exhaustive enumeration of every integer point within the variable bounds.

use super::{Sample, SolveError};
use crate::clock::Stopwatch;
use crate::expansion::{evaluate_objective, Assignment, Model};

pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Number of points in the box `prod(ub + 1)`, as a float to avoid overflow.
pub fn search_space_size(model: &Model) -> f64 {
    model.variables().iter().map(|v| (v.upper_bound + 1) as f64).product()
}

/// Cheapest feasible point found by trying all of them. Ties keep the first
/// point in odometer order.
pub fn brute_force_oracle(model: &Model) -> Result<Sample, SolveError> {
    let size = search_space_size(model);
    if size > BRUTE_FORCE_LIMIT {
        return Err(SolveError::SearchSpaceTooLarge(size));
    }
    let clock = Stopwatch::start();
    let bounds: Vec<u64> = model.variables().iter().map(|v| v.upper_bound).collect();
    let mut values = vec![0u64; bounds.len()];
    let mut best: Option<(f64, Vec<u64>)> = None;
    loop {
        if model.constraints().iter().all(|c| c.residual(&values) == 0) {
            let cost: f64 = model.objective().iter().map(|&(v, c)| c * values[v] as f64).sum();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, values.clone()));
            }
        }
        let mut i = 0;
        while i < values.len() && values[i] == bounds[i] {
            values[i] = 0;
            i += 1;
        }
        if i == values.len() {
            break;
        }
        values[i] += 1;
    }
    let (_, values) = best.ok_or(SolveError::Infeasible)?;
    let assignment = Assignment::new(values);
    let objective = evaluate_objective(model, &assignment)?;
    Ok(Sample {
        assignment,
        energy: objective,
        objective,
        feasible: true,
        restart_index: 0,
        wall_time: clock.elapsed_secs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::expand_model;
    use crate::test_support::{case_study_unit_costs, micro_instance};

    #[test]
    fn micro_optimum() {
        let model = expand_model(&micro_instance()).unwrap();
        let best = brute_force_oracle(&model).unwrap();
        assert_eq!(best.objective, 5.0);
        assert_eq!(best.assignment.values[model.flow_var(0, 0, 1).unwrap()], 1);
    }

    #[test]
    fn refuses_large_models() {
        let model = expand_model(&case_study_unit_costs()).unwrap();
        assert!(matches!(
            brute_force_oracle(&model),
            Err(SolveError::SearchSpaceTooLarge(_))
        ));
    }
}
