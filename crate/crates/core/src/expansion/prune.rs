use super::{ConstraintTag, ExpansionError, LinearConstraint, Model, Variable, VariableKind};

/// Removes flow variables that no mass can reach or that cannot lead to a
/// demand, then the vehicles, capacity rows and empty conservation rows that
/// this leaves behind. Survivors are reindexed densely in their original order.
///
/// A flow `x[i->j, k, t]` survives when `t` is no earlier than the earliest
/// presence of `k` at `i`, and some demand depot of `k` lies within `T - t`
/// travel time of `j`.
pub fn prune_model(model: &Model) -> Result<Model, ExpansionError> {
    let inst = model.instance();
    let horizon = inst.horizon();
    let n_commodities = inst.commodities().len();

    let earliest: Vec<Vec<Option<u32>>> = (0..n_commodities).map(|k| inst.earliest_presence(k)).collect();
    let to_demand: Vec<Vec<Option<u32>>> = (0..n_commodities)
        .map(|k| {
            let mut sinks: Vec<usize> = inst
                .schedule()
                .iter()
                .filter(|e| e.amount < 0.0 && inst.commodity_index(&e.commodity) == Some(k))
                .map(|e| inst.depot_index(&e.depot).expect("resolved"))
                .collect();
            sinks.sort_unstable();
            sinks.dedup();
            inst.distance_to(&sinks)
        })
        .collect();

    let flow_survives = |v: &Variable| -> bool {
        let k = v.commodity.expect("flow variable");
        let (tail, head) = inst.arc_ends(v.arc);
        let reached = earliest[k][tail].is_some_and(|e| e <= v.time);
        let leads_to_demand = to_demand[k][head].is_some_and(|d| d <= horizon - v.time);
        reached && leads_to_demand
    };

    let mut keep = vec![false; model.variables().len()];
    for v in model.variables() {
        if v.kind == VariableKind::Flow {
            keep[v.index] = flow_survives(v);
        }
    }
    for v in model.variables() {
        if v.kind == VariableKind::Vehicle {
            keep[v.index] = model
                .variables()
                .iter()
                .any(|f| f.kind == VariableKind::Flow && keep[f.index] && f.arc == v.arc && f.time == v.time);
        }
    }

    let mut remap = vec![None; model.variables().len()];
    let mut variables = Vec::new();
    for v in model.variables() {
        if keep[v.index] {
            remap[v.index] = Some(variables.len());
            variables.push(Variable {
                index: variables.len(),
                ..v.clone()
            });
        }
    }

    let mut constraints = Vec::new();
    for c in model.constraints() {
        if let ConstraintTag::Capacity { arc, time } = c.tag {
            let z = model.vehicle_var(arc, time).expect("capacity row has a vehicle");
            if !keep[z] {
                continue;
            }
        }
        let terms: Vec<(usize, i64)> = c
            .terms
            .iter()
            .filter_map(|&(v, coef)| remap[v].map(|nv| (nv, coef)))
            .collect();
        if terms.is_empty() {
            if c.rhs != 0 {
                return Err(ExpansionError::PrunedInfeasible(model.tag_label(&c.tag)));
            }
            continue;
        }
        constraints.push(LinearConstraint {
            terms,
            relation: c.relation,
            rhs: c.rhs,
            tag: c.tag,
        });
    }

    Ok(Model::from_parts(inst.clone(), variables, constraints))
}
