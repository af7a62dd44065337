//! Penalty Hamiltonian `H = P1 + alpha * P2` over decision and slack variables.
//!
//! `P1` is the vehicle cost. `P2` is the sum of squared residuals of every
//! equality row: conservation rows as they are, and capacity rows after adding
//! one integer slack each (`sum L_k x - W z + s = 0`). The penalty part is
//! accumulated in exact integer arithmetic and scaled by `alpha` once.

mod file;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expansion::{Assignment, ConstraintTag, Model, Relation};

pub use file::{export_hamiltonian, export_hamiltonian_with_notes, parse_polynomial, FileError, PolynomialFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableOrigin {
    /// Model variable index.
    Decision { variable: usize },
    /// Index of the capacity constraint this slack closes.
    Slack { constraint: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianVariable {
    pub index: usize,
    pub origin: VariableOrigin,
    /// The variable ranges over `0..=levels`.
    pub levels: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("point has {got} values, Hamiltonian has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Hamiltonian has no nonzero coefficients")]
    AllZero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    variables: Vec<HamiltonianVariable>,
    linear: BTreeMap<usize, f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    offset: f64,
    alpha: f64,
    sum_constraint: Option<f64>,
    objective: BTreeMap<usize, f64>,
}

/// A point of the Hamiltonian's domain: one nonnegative value per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub values: Vec<f64>,
}

impl Hamiltonian {
    pub fn variables(&self) -> &[HamiltonianVariable] {
        &self.variables
    }

    pub fn linear(&self) -> &BTreeMap<usize, f64> {
        &self.linear
    }

    /// Upper-triangular couplings, `i <= j`; diagonal entries multiply `p_i^2`.
    pub fn quadratic(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.quadratic
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sum_constraint(&self) -> Option<f64> {
        self.sum_constraint
    }

    pub fn decision_count(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| matches!(v.origin, VariableOrigin::Decision { .. }))
            .count()
    }

    pub fn slack_count(&self) -> usize {
        self.variables.len() - self.decision_count()
    }

    pub fn total_levels(&self) -> u64 {
        self.variables.iter().map(|v| v.levels).sum()
    }

    /// `P1` evaluated at `p`.
    pub fn objective_part(&self, p: &Point) -> Result<f64, HamiltonianError> {
        self.check_len(p)?;
        Ok(self.objective.iter().map(|(&i, &c)| c * p.values[i]).sum())
    }

    /// `P2` evaluated at `p`, recovered as `(H - P1) / alpha`.
    pub fn penalty_part(&self, p: &Point) -> Result<f64, HamiltonianError> {
        Ok((evaluate_energy(self, p)? - self.objective_part(p)?) / self.alpha)
    }

    /// Embeds an assignment, setting each slack to the value that minimises
    /// its row's residual.
    pub fn encode(&self, model: &Model, a: &Assignment) -> Point {
        let values = self
            .variables
            .iter()
            .map(|v| match v.origin {
                VariableOrigin::Decision { variable } => a.values[variable] as f64,
                VariableOrigin::Slack { constraint } => {
                    tightest_slack(model.constraints()[constraint].lhs(&a.values), v.levels) as f64
                }
            })
            .collect();
        Point { values }
    }

    fn check_len(&self, p: &Point) -> Result<(), HamiltonianError> {
        if p.values.len() != self.variables.len() {
            return Err(HamiltonianError::LengthMismatch {
                expected: self.variables.len(),
                got: p.values.len(),
            });
        }
        Ok(())
    }
}

/// Slack closing `lhs + s = 0` as nearly as `0 <= s <= levels` allows.
pub fn tightest_slack(lhs: i64, levels: u64) -> u64 {
    (-lhs).clamp(0, levels as i64) as u64
}

/// One more than the largest vehicle cost reachable inside the bound box.
pub fn choose_alpha(model: &Model) -> f64 {
    1.0 + model
        .objective()
        .iter()
        .map(|&(v, c)| c * model.variables()[v].upper_bound as f64)
        .sum::<f64>()
}

pub fn compile_hamiltonian(model: &Model, alpha: Option<f64>) -> Result<Hamiltonian, HamiltonianError> {
    let alpha = alpha.unwrap_or_else(|| choose_alpha(model));
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(HamiltonianError::InvalidAlpha(alpha));
    }

    let mut variables: Vec<HamiltonianVariable> = model
        .variables()
        .iter()
        .map(|v| HamiltonianVariable {
            index: v.index,
            origin: VariableOrigin::Decision { variable: v.index },
            levels: v.upper_bound.max(1),
        })
        .collect();

    let mut lin: BTreeMap<usize, i128> = BTreeMap::new();
    let mut quad: BTreeMap<(usize, usize), i128> = BTreeMap::new();
    let mut constant: i128 = 0;

    for (ci, c) in model.constraints().iter().enumerate() {
        let mut terms: Vec<(usize, i128)> = c.terms.iter().map(|&(v, a)| (v, a as i128)).collect();
        if c.relation == Relation::LessEqual {
            let ConstraintTag::Capacity { arc, time } = c.tag else {
                unreachable!("only capacity rows are inequalities")
            };
            let z = model.vehicle_var(arc, time).expect("capacity row has a vehicle");
            let levels = (model.capacity() as u64 * model.variables()[z].upper_bound).max(1);
            let s = variables.len();
            variables.push(HamiltonianVariable {
                index: s,
                origin: VariableOrigin::Slack { constraint: ci },
                levels,
            });
            terms.push((s, 1));
        }
        // (sum a_i v_i - b)^2
        let b = c.rhs as i128;
        for (n, &(i, ai)) in terms.iter().enumerate() {
            *quad.entry((i, i)).or_default() += ai * ai;
            *lin.entry(i).or_default() -= 2 * b * ai;
            for &(j, aj) in &terms[n + 1..] {
                let key = if i <= j { (i, j) } else { (j, i) };
                *quad.entry(key).or_default() += 2 * ai * aj;
            }
        }
        constant += b * b;
    }

    let objective: BTreeMap<usize, f64> = model
        .objective()
        .iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|&(v, c)| (v, c))
        .collect();

    let mut linear: BTreeMap<usize, f64> = lin
        .into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|(i, c)| (i, alpha * c as f64))
        .collect();
    for (&i, &c) in &objective {
        *linear.entry(i).or_default() += c;
    }
    linear.retain(|_, c| *c != 0.0);
    let quadratic = quad
        .into_iter()
        .filter(|(_, c)| *c != 0)
        .map(|(k, c)| (k, alpha * c as f64))
        .collect();

    let sum_constraint = Some(variables.iter().map(|v| v.levels as f64).sum());

    Ok(Hamiltonian {
        variables,
        linear,
        quadratic,
        offset: alpha * constant as f64,
        alpha,
        sum_constraint,
        objective,
    })
}

/// `offset + sum C_i p_i + sum_{i<=j} J_ij p_i p_j`.
pub fn evaluate_energy(h: &Hamiltonian, p: &Point) -> Result<f64, HamiltonianError> {
    h.check_len(p)?;
    let v = &p.values;
    let linear: f64 = h.linear.iter().map(|(&i, &c)| c * v[i]).sum();
    let quadratic: f64 = h.quadratic.iter().map(|(&(i, j), &c)| c * v[i] * v[j]).sum();
    Ok(h.offset + linear + quadratic)
}

/// `10 log10(max |coef| / min nonzero |coef|)` over linear and quadratic
/// coefficients; the offset is excluded.
pub fn dynamic_range_db(h: &Hamiltonian) -> Result<f64, HamiltonianError> {
    coefficient_range_db(h.linear.values().chain(h.quadratic.values()).copied())
}

pub fn coefficient_range_db(coefs: impl IntoIterator<Item = f64>) -> Result<f64, HamiltonianError> {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for c in coefs.into_iter().map(f64::abs).filter(|c| *c > 0.0) {
        lo = lo.min(c);
        hi = hi.max(c);
    }
    if hi == 0.0 {
        return Err(HamiltonianError::AllZero);
    }
    Ok(10.0 * (hi / lo).log10())
}

/// Rounds decision values half away from zero, clamps them into bounds and
/// drops slacks.
pub fn decode_point(h: &Hamiltonian, model: &Model, p: &Point) -> Result<Assignment, HamiltonianError> {
    h.check_len(p)?;
    let mut values = vec![0u64; model.variables().len()];
    for hv in &h.variables {
        if let VariableOrigin::Decision { variable } = hv.origin {
            let ub = model.variables()[variable].upper_bound as f64;
            values[variable] = p.values[hv.index].round().clamp(0.0, ub) as u64;
        }
    }
    Ok(Assignment::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{evaluate_objective, expand_model, prune_model, verify_assignment};
    use crate::test_support::{case_study_unit_costs, micro_instance};

    fn micro_feasible(model: &Model) -> Assignment {
        let mut a = Assignment::zeros(model);
        a.values[model.flow_var(0, 0, 1).unwrap()] = 1;
        a.values[model.vehicle_var(0, 1).unwrap()] = 1;
        a
    }

    #[test]
    fn alpha_rule() {
        let model = expand_model(&case_study_unit_costs()).unwrap();
        assert_eq!(choose_alpha(&model), 145.0);
        let micro = expand_model(&micro_instance()).unwrap();
        // two vehicles, cost 5, ub 1
        assert_eq!(choose_alpha(&micro), 11.0);
    }

    #[test]
    fn micro_layout() {
        let model = expand_model(&micro_instance()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        assert_eq!(h.decision_count(), 4);
        assert_eq!(h.slack_count(), 2);
        assert!(h.quadratic().keys().all(|(i, j)| i <= j));
        assert_eq!(h.variables()[4].levels, 100);
        assert_eq!(h.sum_constraint(), Some(1.0 * 4.0 + 200.0));
    }

    #[test]
    fn micro_feasible_point_has_zero_penalty() {
        let model = expand_model(&micro_instance()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let a = micro_feasible(&model);
        let p = h.encode(&model, &a);
        assert_eq!(p.values[4], 90.0);
        assert_eq!(p.values[5], 0.0);
        assert_eq!(h.penalty_part(&p).unwrap(), 0.0);
        assert_eq!(evaluate_energy(&h, &p).unwrap(), 5.0);
    }

    #[test]
    fn micro_expansion_by_hand() {
        // x1 = x[t=1], x2 = x[t=2], z1, z2, s1, s2; alpha = 11
        // rows: 10x1 - 10 ; 10x2 ; -10x1 + 10 ; 0 (B,t=1 empty) ;
        //       10x1 - 100z1 + s1 ; 10x2 - 100z2 + s2
        let model = expand_model(&micro_instance()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let (x1, x2, z1, z2, s1, s2) = (0, 1, 2, 3, 4, 5);
        let a = 11.0;
        assert_eq!(h.offset(), a * 200.0);
        assert_eq!(h.linear()[&x1], a * -400.0);
        assert_eq!(h.linear().get(&x2), None);
        assert_eq!(h.linear()[&z1], 5.0);
        assert_eq!(h.linear()[&z2], 5.0);
        assert_eq!(h.quadratic()[&(x1, x1)], a * 300.0);
        assert_eq!(h.quadratic()[&(x2, x2)], a * 200.0);
        assert_eq!(h.quadratic()[&(z1, z1)], a * 10_000.0);
        assert_eq!(h.quadratic()[&(s2, s2)], a);
        assert_eq!(h.quadratic()[&(x1, z1)], a * -2000.0);
        assert_eq!(h.quadratic()[&(x1, s1)], a * 20.0);
        assert_eq!(h.quadratic()[&(z2, s2)], a * -200.0);
        assert_eq!(h.quadratic().len(), 12);
    }

    #[test]
    fn zero_demand_zero_point() {
        let inst = micro_instance();
        let empty = crate::instance::Instance::new(
            inst.depots().to_vec(),
            inst.arcs().to_vec(),
            inst.commodities().to_vec(),
            inst.horizon(),
            inst.capacity(),
            vec![],
        )
        .unwrap();
        let model = expand_model(&empty).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let zero = Point {
            values: vec![0.0; h.variables().len()],
        };
        assert_eq!(evaluate_energy(&h, &zero).unwrap(), 0.0);
        assert_eq!(h.offset(), 0.0);
    }

    #[test]
    fn slack_off_by_one_costs_alpha() {
        let model = expand_model(&micro_instance()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let mut p = h.encode(&model, &micro_feasible(&model));
        p.values[4] -= 1.0;
        let e = evaluate_energy(&h, &p).unwrap();
        assert_eq!(e - 5.0, h.alpha());
        assert!(e >= h.alpha());
    }

    #[test]
    fn feasible_energy_equals_objective_on_case_study() {
        let model = prune_model(&expand_model(&case_study_unit_costs()).unwrap()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let a = crate::expansion::reconstruct_solution(&model, &crate::test_support::reference_tables()).unwrap();
        assert!(verify_assignment(&model, &a).unwrap().feasible);
        let e = evaluate_energy(&h, &h.encode(&model, &a)).unwrap();
        let obj = evaluate_objective(&model, &a).unwrap();
        assert_eq!(obj, 17.0);
        assert!((e - obj).abs() < 1e-9 * h.offset().max(1.0), "{e} vs {obj}");
    }

    #[test]
    fn dynamic_range_conventions() {
        let db = coefficient_range_db([1.0, 200.0]).unwrap();
        assert!((db - 23.0103).abs() < 1e-3);
        assert_eq!(coefficient_range_db([3.0, -3.0, 3.0]).unwrap(), 0.0);
        assert!((coefficient_range_db([0.5, 500.0]).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(coefficient_range_db([0.0]), Err(HamiltonianError::AllZero));
    }

    #[test]
    fn decode_rounds_and_clamps() {
        let model = expand_model(&case_study_unit_costs()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let z = model.vehicle_var(0, 1).unwrap();
        let x = model.flow_var(0, 0, 1).unwrap();
        let mut p = Point {
            values: vec![0.0; h.variables().len()],
        };
        p.values[z] = 2.5;
        p.values[x] = 7.2;
        let a = decode_point(&h, &model, &p).unwrap();
        assert_eq!(a.values[z], 3);
        assert_eq!(a.values[x], 7);
        p.values[z] = 7.2;
        assert_eq!(decode_point(&h, &model, &p).unwrap().values[z], 3);
        p.values[z] = 0.5;
        assert_eq!(decode_point(&h, &model, &p).unwrap().values[z], 1);
    }

    #[test]
    fn invalid_alpha() {
        let model = expand_model(&micro_instance()).unwrap();
        assert!(compile_hamiltonian(&model, Some(0.0)).is_err());
        assert!(compile_hamiltonian(&model, Some(f64::NAN)).is_err());
    }

    #[test]
    fn length_mismatch() {
        let model = expand_model(&micro_instance()).unwrap();
        let h = compile_hamiltonian(&model, None).unwrap();
        let p = Point { values: vec![0.0] };
        assert!(evaluate_energy(&h, &p).is_err());
        assert!(decode_point(&h, &model, &p).is_err());
    }
}
