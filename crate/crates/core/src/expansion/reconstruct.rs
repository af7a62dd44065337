//! Rebuilds a full assignment from reference schedule tables.
//!
//! The tables are per-arc vehicle counts, per-arc total cargo mass, and a
//! per-(node, commodity) inventory where delivered demand stays on the books.
//! Step labels in the vehicle and cargo tables are only used for ordering; the
//! timing comes from the inventory table, read as departing mass plus
//! cumulative delivered mass at each step.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Assignment, Model};
use crate::instance::arc_key;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InventoryRow {
    pub node: String,
    pub commodity: String,
    pub values: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceTables {
    /// `"from->to"` -> vehicles per step.
    pub vehicles: BTreeMap<String, Vec<u64>>,
    /// `"from->to"` -> total cargo mass per step.
    pub cargo: BTreeMap<String, Vec<i64>>,
    pub inventory: Vec<InventoryRow>,
}

impl ReferenceTables {
    pub fn from_json(text: &str) -> Result<Self, ReconstructError> {
        serde_json::from_str(text).map_err(|e| ReconstructError::Syntax(e.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("table document: {0}")]
    Syntax(String),
    #[error("unknown {kind} `{id}` in tables")]
    UnknownId { kind: &'static str, id: String },
    #[error("row `{row}` has {got} columns, horizon is {expected}")]
    BadLength { row: String, expected: usize, got: usize },
    #[error("tables are inconsistent: {0}")]
    Inconsistent(String),
    #[error("tables do not determine a unique integral split: {0}")]
    Ambiguous(String),
    #[error("solution uses {0}, which is not a model variable")]
    MissingVariable(String),
}

/// Splits the cargo of each arc and step into per-commodity flow units that
/// match the inventory table, attaches the vehicle counts, and returns the
/// result as an assignment on `model`.
pub fn reconstruct_solution(model: &Model, tables: &ReferenceTables) -> Result<Assignment, ReconstructError> {
    let inst = model.instance();
    let horizon = inst.horizon() as usize;
    let n_depots = inst.depots().len();
    let n_k = inst.commodities().len();
    let loads = model.loads();

    let check_len = |row: &str, len: usize| {
        if len != horizon {
            Err(ReconstructError::BadLength {
                row: row.to_string(),
                expected: horizon,
                got: len,
            })
        } else {
            Ok(())
        }
    };
    let arc_of = |key: &str| {
        inst.arcs()
            .iter()
            .position(|a| a.key() == key)
            .ok_or_else(|| ReconstructError::UnknownId {
                kind: "arc",
                id: key.to_string(),
            })
    };

    // inventory[k][i][t-1]
    let mut inventory = vec![vec![vec![0i64; horizon]; n_depots]; n_k];
    for row in &tables.inventory {
        let label = format!("{},{}", row.node, row.commodity);
        check_len(&label, row.values.len())?;
        let i = inst.depot_index(&row.node).ok_or_else(|| ReconstructError::UnknownId {
            kind: "node",
            id: row.node.clone(),
        })?;
        let k = inst
            .commodity_index(&row.commodity)
            .ok_or_else(|| ReconstructError::UnknownId {
                kind: "commodity",
                id: row.commodity.clone(),
            })?;
        inventory[k][i] = row.values.clone();
    }

    // departing and arriving units per (k, i, t)
    let mut departing = vec![vec![vec![0i64; horizon + 2]; n_depots]; n_k];
    let mut arriving = vec![vec![vec![0i64; horizon + 2]; n_depots]; n_k];
    for k in 0..n_k {
        let load = loads[k];
        for i in 0..n_depots {
            let mut delivered = 0i64;
            for t in 1..=horizon {
                let d = inst.amount(i, k, t as u32) as i64;
                if d < 0 {
                    delivered += -d;
                }
                let out_mass = inventory[k][i][t - 1] - delivered;
                let where_ = || format!("{}/{} at t={t}", inst.depots()[i].id, inst.commodities()[k].id);
                if out_mass < 0 || out_mass % load != 0 {
                    return Err(ReconstructError::Inconsistent(format!(
                        "inventory {} implies departing mass {out_mass}",
                        where_()
                    )));
                }
                let arr_mass = out_mass - d;
                if arr_mass < 0 {
                    return Err(ReconstructError::Inconsistent(format!(
                        "inventory {} implies negative arrivals",
                        where_()
                    )));
                }
                departing[k][i][t] = out_mass / load;
                arriving[k][i][t] = arr_mass / load;
            }
        }
    }

    // unknown flows x[(arc, k, t)]
    let mut unknowns: Vec<(usize, usize, usize)> = Vec::new();
    for (a, arc) in inst.arcs().iter().enumerate() {
        for k in 0..n_k {
            for t in 1..=horizon {
                if t + arc.travel_time as usize <= horizon + 1 {
                    unknowns.push((a, k, t));
                }
            }
        }
    }
    let position: HashMap<(usize, usize, usize), usize> =
        unknowns.iter().enumerate().map(|(u, key)| (*key, u)).collect();

    // equations: sum of unknowns = value
    let mut equations: Vec<(Vec<usize>, i64, String)> = Vec::new();
    for k in 0..n_k {
        for i in 0..n_depots {
            for t in 1..=horizon {
                let mut out_terms = Vec::new();
                let mut in_terms = Vec::new();
                for (a, arc) in inst.arcs().iter().enumerate() {
                    let (from, to) = inst.arc_ends(a);
                    if from == i {
                        if let Some(&u) = position.get(&(a, k, t)) {
                            out_terms.push(u);
                        }
                    }
                    let dt = arc.travel_time as usize;
                    if to == i && t > dt {
                        if let Some(&u) = position.get(&(a, k, t - dt)) {
                            in_terms.push(u);
                        }
                    }
                }
                let label = format!("{}/{} t={t}", inst.depots()[i].id, inst.commodities()[k].id);
                equations.push((out_terms, departing[k][i][t], format!("departures {label}")));
                equations.push((in_terms, arriving[k][i][t], format!("arrivals {label}")));
            }
        }
    }

    let mut solved: Vec<Option<i64>> = vec![None; unknowns.len()];
    loop {
        let mut progressed = false;
        for (terms, value, label) in &equations {
            let mut remaining = *value;
            let mut open = Vec::new();
            for &u in terms {
                match solved[u] {
                    Some(x) => remaining -= x,
                    None => open.push(u),
                }
            }
            if remaining < 0 || (open.is_empty() && remaining != 0) {
                return Err(ReconstructError::Inconsistent(format!("{label} cannot be matched")));
            }
            if open.is_empty() {
                continue;
            }
            if remaining == 0 {
                for u in open {
                    solved[u] = Some(0);
                }
                progressed = true;
            } else if open.len() == 1 {
                solved[open[0]] = Some(remaining);
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    if let Some(u) = solved.iter().position(Option::is_none) {
        let (a, k, t) = unknowns[u];
        return Err(ReconstructError::Ambiguous(format!(
            "flow of {} on {} departing t={t}",
            inst.commodities()[k].id,
            inst.arcs()[a].key()
        )));
    }

    let mut values = vec![0u64; model.variables().len()];
    for (u, &(a, k, t)) in unknowns.iter().enumerate() {
        let x = solved[u].expect("solved");
        if x > 0 {
            let var = model.flow_var(a, k, t as u32).ok_or_else(|| {
                ReconstructError::MissingVariable(format!(
                    "x[{},{},t={t}]",
                    inst.arcs()[a].key(),
                    inst.commodities()[k].id
                ))
            })?;
            values[var] = x as u64;
        }
    }

    // cross-check cargo and attach vehicles by order of appearance
    for (a, arc) in inst.arcs().iter().enumerate() {
        let key = arc_key(&arc.from, &arc.to);
        let mass_at = |t: usize| -> i64 {
            (0..n_k)
                .map(|k| {
                    position
                        .get(&(a, k, t))
                        .map_or(0, |&u| solved[u].expect("solved") * loads[k])
                })
                .sum()
        };
        let loaded_steps: Vec<usize> = (1..=horizon).filter(|&t| mass_at(t) > 0).collect();
        let rebuilt: Vec<i64> = loaded_steps.iter().map(|&t| mass_at(t)).collect();

        let table_cargo: Vec<i64> = match tables.cargo.get(&key) {
            Some(row) => {
                check_len(&key, row.len())?;
                row.iter().copied().filter(|&m| m != 0).collect()
            }
            None => Vec::new(),
        };
        if table_cargo != rebuilt {
            return Err(ReconstructError::Inconsistent(format!(
                "cargo on {key}: table {table_cargo:?}, inventory implies {rebuilt:?}"
            )));
        }

        let trips: Vec<u64> = match tables.vehicles.get(&key) {
            Some(row) => {
                check_len(&key, row.len())?;
                row.iter().copied().filter(|&z| z != 0).collect()
            }
            None => Vec::new(),
        };
        if trips.len() != loaded_steps.len() {
            return Err(ReconstructError::Inconsistent(format!(
                "{key} has {} vehicle entries but {} loaded departures",
                trips.len(),
                loaded_steps.len()
            )));
        }
        for (&t, &z) in loaded_steps.iter().zip(&trips) {
            let var = model
                .vehicle_var(a, t as u32)
                .ok_or_else(|| ReconstructError::MissingVariable(format!("z[{key},t={t}]")))?;
            values[var] = z;
        }
    }
    for key in tables.vehicles.keys().chain(tables.cargo.keys()) {
        arc_of(key)?;
    }

    Ok(Assignment::new(values))
}
