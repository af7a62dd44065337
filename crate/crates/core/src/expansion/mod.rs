//! Time-expanded integer program for an [`Instance`].
//!
//! Flow variables `x[arc, k, t]` count units of commodity `k` departing on
//! `arc` at step `t`; vehicle variables `z[arc, t]` count vehicles departing
//! at `t`. Cargo departing at `t` arrives at `t + travel_time`. Constraint
//! rows are kept in integer mass units so residuals are exact.

mod prune;
mod reconstruct;

use std::collections::HashMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::instance::{validate_instance, Finding, Instance};

pub use prune::prune_model;
pub use reconstruct::{reconstruct_solution, InventoryRow, ReconstructError, ReferenceTables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Flow,
    Vehicle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub index: usize,
    pub kind: VariableKind,
    /// Index into `Instance::arcs`.
    pub arc: usize,
    /// Commodity index; `None` for vehicle variables.
    pub commodity: Option<usize>,
    /// Departure step.
    pub time: u32,
    pub upper_bound: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equal,
    LessEqual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintTag {
    Conservation { depot: usize, commodity: usize, time: u32 },
    Capacity { arc: usize, time: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
    pub tag: ConstraintTag,
}

impl LinearConstraint {
    pub fn lhs(&self, values: &[u64]) -> i64 {
        self.terms.iter().map(|&(v, c)| c * values[v] as i64).sum()
    }

    /// `lhs - rhs` for equalities, `max(0, lhs - rhs)` for inequalities.
    pub fn residual(&self, values: &[u64]) -> i64 {
        let diff = self.lhs(values) - self.rhs;
        match self.relation {
            Relation::Equal => diff,
            Relation::LessEqual => diff.max(0),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpansionError {
    #[error("instance is not balanced: {0}")]
    Unbalanced(String),
    #[error("{what} must be an integer number of mass units, got {value}")]
    NonIntegral { what: String, value: f64 },
    #[error("pruning leaves constraint {0} with no variables and a nonzero right-hand side")]
    PrunedInfeasible(String),
    #[error("assignment has {got} values, model has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VarKey {
    Flow { arc: usize, commodity: usize, time: u32 },
    Vehicle { arc: usize, time: u32 },
}

impl VarKey {
    fn of(v: &Variable) -> VarKey {
        match v.commodity {
            Some(commodity) => VarKey::Flow {
                arc: v.arc,
                commodity,
                time: v.time,
            },
            None => VarKey::Vehicle {
                arc: v.arc,
                time: v.time,
            },
        }
    }
}

/// The expanded integer program. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Model {
    instance: Instance,
    variables: Vec<Variable>,
    constraints: Vec<LinearConstraint>,
    objective: Vec<(usize, f64)>,
    loads: Vec<i64>,
    capacity: i64,
    lookup: HashMap<VarKey, usize>,
}

impl Model {
    fn from_parts(instance: Instance, variables: Vec<Variable>, constraints: Vec<LinearConstraint>) -> Model {
        let loads = instance.commodities().iter().map(|c| c.load as i64).collect();
        let capacity = instance.capacity() as i64;
        let objective = variables
            .iter()
            .filter(|v| v.kind == VariableKind::Vehicle)
            .map(|v| (v.index, instance.arcs()[v.arc].cost))
            .collect();
        let lookup = variables.iter().map(|v| (VarKey::of(v), v.index)).collect();
        Model {
            instance,
            variables,
            constraints,
            objective,
            loads,
            capacity,
            lookup,
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    /// `(vehicle variable, cost)` pairs.
    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    /// Integer load of each commodity (mass per unit).
    pub fn loads(&self) -> &[i64] {
        &self.loads
    }

    /// Integer vehicle capacity.
    pub fn capacity(&self) -> i64 {
        self.capacity
    }

    pub fn flow_var(&self, arc: usize, commodity: usize, time: u32) -> Option<usize> {
        self.lookup.get(&VarKey::Flow { arc, commodity, time }).copied()
    }

    pub fn vehicle_var(&self, arc: usize, time: u32) -> Option<usize> {
        self.lookup.get(&VarKey::Vehicle { arc, time }).copied()
    }

    pub fn count(&self, kind: VariableKind) -> usize {
        self.variables.iter().filter(|v| v.kind == kind).count()
    }

    pub fn conservation_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| matches!(c.tag, ConstraintTag::Conservation { .. }))
            .count()
    }

    pub fn capacity_count(&self) -> usize {
        self.constraints
            .iter()
            .filter(|c| matches!(c.tag, ConstraintTag::Capacity { .. }))
            .count()
    }

    pub fn variable_label(&self, index: usize) -> String {
        let v = &self.variables[index];
        let arc = self.instance.arcs()[v.arc].key();
        match v.commodity {
            Some(k) => format!("x[{arc},{},t={}]", self.instance.commodities()[k].id, v.time),
            None => format!("z[{arc},t={}]", v.time),
        }
    }

    pub fn tag_label(&self, tag: &ConstraintTag) -> String {
        match *tag {
            ConstraintTag::Conservation { depot, commodity, time } => format!(
                "conservation({},{},t={time})",
                self.instance.depots()[depot].id,
                self.instance.commodities()[commodity].id
            ),
            ConstraintTag::Capacity { arc, time } => {
                format!("capacity({},t={time})", self.instance.arcs()[arc].key())
            }
        }
    }

    /// Model dump as JSON, for debugging and golden tests.
    pub fn dump_json(&self) -> String {
        #[derive(Serialize)]
        struct VarDump {
            index: usize,
            kind: VariableKind,
            arc: String,
            commodity: Option<String>,
            time: u32,
            upper_bound: u64,
        }
        #[derive(Serialize)]
        struct ConstraintDump {
            tag: String,
            relation: Relation,
            rhs: i64,
            terms: Vec<(usize, i64)>,
        }
        #[derive(Serialize)]
        struct Dump {
            variables: Vec<VarDump>,
            constraints: Vec<ConstraintDump>,
            objective: Vec<(usize, f64)>,
        }
        let dump = Dump {
            variables: self
                .variables
                .iter()
                .map(|v| VarDump {
                    index: v.index,
                    kind: v.kind,
                    arc: self.instance.arcs()[v.arc].key(),
                    commodity: v.commodity.map(|k| self.instance.commodities()[k].id.clone()),
                    time: v.time,
                    upper_bound: v.upper_bound,
                })
                .collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintDump {
                    tag: self.tag_label(&c.tag),
                    relation: c.relation,
                    rhs: c.rhs,
                    terms: c.terms.clone(),
                })
                .collect(),
            objective: self.objective.clone(),
        };
        serde_json::to_string_pretty(&dump).expect("dump serializes")
    }
}

/// A candidate solution: one nonnegative integer per model variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub values: Vec<u64>,
}

impl Assignment {
    pub fn new(values: Vec<u64>) -> Self {
        Assignment { values }
    }

    pub fn zeros(model: &Model) -> Self {
        Assignment {
            values: vec![0; model.variables().len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// One residual per constraint, in model order.
    pub residuals: Vec<i64>,
    /// Variables whose value exceeds the upper bound.
    pub bound_violations: Vec<usize>,
    pub feasible: bool,
    /// Constraint with the largest absolute residual, if any is nonzero.
    pub worst: Option<(ConstraintTag, i64)>,
}

impl FeasibilityReport {
    pub fn residual_of(&self, model: &Model, tag: &ConstraintTag) -> Option<i64> {
        model
            .constraints()
            .iter()
            .position(|c| &c.tag == tag)
            .map(|i| self.residuals[i])
    }
}

fn integral_mass(what: String, value: f64) -> Result<i64, ExpansionError> {
    if value.fract() != 0.0 || !value.is_finite() {
        return Err(ExpansionError::NonIntegral { what, value });
    }
    Ok(value as i64)
}

/// Expands an instance into flow/vehicle variables, conservation equalities
/// and capacity inequalities. Departures whose arrival would fall after
/// `T + 1` are never created.
pub fn expand_model(inst: &Instance) -> Result<Model, ExpansionError> {
    let report = validate_instance(inst);
    if let Some(f) = report
        .findings
        .iter()
        .find(|f| matches!(f, Finding::Imbalance { .. } | Finding::NotMultipleOfLoad { .. }))
    {
        return Err(ExpansionError::Unbalanced(f.to_string()));
    }

    let loads = inst
        .commodities()
        .iter()
        .map(|c| integral_mass(format!("load of {}", c.id), c.load))
        .collect::<Result<Vec<_>, _>>()?;
    let capacity = integral_mass("capacity".into(), inst.capacity())?;
    for e in inst.schedule() {
        integral_mass(
            format!("amount at ({}, {}, t={})", e.depot, e.commodity, e.time),
            e.amount,
        )?;
    }

    let horizon = inst.horizon();
    let supply_units: Vec<u64> = (0..loads.len())
        .map(|k| (inst.total_supply(k) as i64 / loads[k]) as u64)
        .collect();
    let total_mass: i64 = (0..loads.len()).map(|k| inst.total_supply(k) as i64).sum();
    let vehicle_ub = ((total_mass + capacity - 1) / capacity) as u64;

    let departs = |arc: usize, t: u32| t + inst.arcs()[arc].travel_time <= horizon + 1;

    let mut variables = Vec::new();
    for t in 1..=horizon {
        for arc in 0..inst.arcs().len() {
            if !departs(arc, t) {
                continue;
            }
            for (k, &ub) in supply_units.iter().enumerate() {
                variables.push(Variable {
                    index: variables.len(),
                    kind: VariableKind::Flow,
                    arc,
                    commodity: Some(k),
                    time: t,
                    upper_bound: ub,
                });
            }
        }
    }
    for t in 1..=horizon {
        for arc in 0..inst.arcs().len() {
            if departs(arc, t) {
                variables.push(Variable {
                    index: variables.len(),
                    kind: VariableKind::Vehicle,
                    arc,
                    commodity: None,
                    time: t,
                    upper_bound: vehicle_ub,
                });
            }
        }
    }
    let lookup: HashMap<VarKey, usize> = variables.iter().map(|v| (VarKey::of(v), v.index)).collect();

    let mut constraints = Vec::new();
    for t in 1..=horizon {
        for depot in 0..inst.depots().len() {
            for (k, &load) in loads.iter().enumerate() {
                let mut terms = Vec::new();
                for (a, arc) in inst.arcs().iter().enumerate() {
                    let (from, to) = inst.arc_ends(a);
                    if from == depot {
                        if let Some(&v) = lookup.get(&VarKey::Flow {
                            arc: a,
                            commodity: k,
                            time: t,
                        }) {
                            terms.push((v, load));
                        }
                    }
                    if to == depot && t > arc.travel_time {
                        if let Some(&v) = lookup.get(&VarKey::Flow {
                            arc: a,
                            commodity: k,
                            time: t - arc.travel_time,
                        }) {
                            terms.push((v, -load));
                        }
                    }
                }
                constraints.push(LinearConstraint {
                    terms,
                    relation: Relation::Equal,
                    rhs: inst.amount(depot, k, t) as i64,
                    tag: ConstraintTag::Conservation {
                        depot,
                        commodity: k,
                        time: t,
                    },
                });
            }
        }
    }
    for t in 1..=horizon {
        for arc in 0..inst.arcs().len() {
            let Some(&z) = lookup.get(&VarKey::Vehicle { arc, time: t }) else {
                continue;
            };
            let mut terms: Vec<(usize, i64)> = loads
                .iter()
                .enumerate()
                .filter_map(|(k, &load)| {
                    lookup
                        .get(&VarKey::Flow {
                            arc,
                            commodity: k,
                            time: t,
                        })
                        .map(|&v| (v, load))
                })
                .collect();
            terms.push((z, -capacity));
            constraints.push(LinearConstraint {
                terms,
                relation: Relation::LessEqual,
                rhs: 0,
                tag: ConstraintTag::Capacity { arc, time: t },
            });
        }
    }

    Ok(Model::from_parts(inst.clone(), variables, constraints))
}

/// Checks every constraint exactly in integer mass units.
pub fn verify_assignment(model: &Model, a: &Assignment) -> Result<FeasibilityReport, ExpansionError> {
    if a.values.len() != model.variables().len() {
        return Err(ExpansionError::LengthMismatch {
            expected: model.variables().len(),
            got: a.values.len(),
        });
    }
    let residuals: Vec<i64> = model.constraints().iter().map(|c| c.residual(&a.values)).collect();
    let bound_violations = model
        .variables()
        .iter()
        .filter(|v| a.values[v.index] > v.upper_bound)
        .map(|v| v.index)
        .collect();
    let worst = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| **r != 0)
        .max_by_key(|(i, r)| (r.abs(), std::cmp::Reverse(*i)))
        .map(|(i, r)| (model.constraints()[i].tag, *r));
    Ok(FeasibilityReport {
        feasible: worst.is_none(),
        residuals,
        bound_violations,
        worst,
    })
}

/// Total vehicle cost; flow variables do not contribute.
pub fn evaluate_objective(model: &Model, a: &Assignment) -> Result<f64, ExpansionError> {
    if a.values.len() != model.variables().len() {
        return Err(ExpansionError::LengthMismatch {
            expected: model.variables().len(),
            got: a.values.len(),
        });
    }
    Ok(model.objective().iter().map(|&(v, c)| c * a.values[v] as f64).sum())
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let violated = self.residuals.iter().filter(|r| **r != 0).count();
        write!(
            f,
            "{} constraints violated, {} bound violations",
            violated,
            self.bound_violations.len()
        )
    }
}
