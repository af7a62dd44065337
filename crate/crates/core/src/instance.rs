//! Problem instances: depots, arcs, commodities and the supply/demand schedule.
//!
//! An [`Instance`] is built either from a JSON document ([`parse_instance`]),
//! programmatically through [`Instance::new`], or from the built-in Earth-Moon-Mars
//! scenario ([`build_case_study`]). Construction checks structural invariants
//! (ids, cross references, positivity); [`validate_instance`] reports the
//! modelling-level findings (mass balance, load multiples, reachability).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Depot {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arc {
    pub from: String,
    pub to: String,
    /// Per-vehicle traversal cost (delta-v, km/s).
    pub cost: f64,
    /// Time of flight in steps.
    pub travel_time: u32,
}

impl Arc {
    /// Canonical `"from->to"` key used by cost maps and report rows.
    pub fn key(&self) -> String {
        arc_key(&self.from, &self.to)
    }
}

pub fn arc_key(from: &str, to: &str) -> String {
    format!("{from}->{to}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Commodity {
    pub id: String,
    /// Mass per unit of flow.
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub depot: String,
    pub commodity: String,
    /// 1-based time step.
    pub time: u32,
    /// Mass units; positive is supply, negative is demand.
    pub amount: f64,
}

/// JSON shape of an instance document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    depots: Vec<Depot>,
    arcs: Vec<Arc>,
    commodities: Vec<Commodity>,
    horizon: u32,
    capacity: f64,
    schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: String, value: f64 },
    #[error("arc {arc}: {reason}")]
    InvalidArc { arc: String, reason: String },
    #[error("horizon {horizon} is shorter than the longest travel time {travel_time}")]
    HorizonTooShort { horizon: u32, travel_time: u32 },
    #[error("schedule entry ({depot}, {commodity}, t={time}): {reason}")]
    InvalidScheduleEntry {
        depot: String,
        commodity: String,
        time: u32,
        reason: String,
    },
    #[error("missing cost for case-study arc {0}")]
    MissingArcCost(String),
    #[error("cost map names arc {0}, which is not in the network")]
    UnknownArcCost(String),
}

/// A structurally valid MCNF instance. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    depots: Vec<Depot>,
    arcs: Vec<Arc>,
    commodities: Vec<Commodity>,
    horizon: u32,
    capacity: f64,
    schedule: Vec<ScheduleEntry>,
    arc_ends: Vec<(usize, usize)>,
    // (depot, commodity, time) -> amount
    amounts: HashMap<(usize, usize, u32), f64>,
}

impl Instance {
    pub fn new(
        depots: Vec<Depot>,
        arcs: Vec<Arc>,
        commodities: Vec<Commodity>,
        horizon: u32,
        capacity: f64,
        schedule: Vec<ScheduleEntry>,
    ) -> Result<Self, InstanceError> {
        let mut depot_index = HashMap::new();
        for (i, d) in depots.iter().enumerate() {
            if depot_index.insert(d.id.clone(), i).is_some() {
                return Err(InstanceError::DuplicateId {
                    kind: "depot",
                    id: d.id.clone(),
                });
            }
        }
        let mut commodity_index = HashMap::new();
        for (i, c) in commodities.iter().enumerate() {
            if commodity_index.insert(c.id.clone(), i).is_some() {
                return Err(InstanceError::DuplicateId {
                    kind: "commodity",
                    id: c.id.clone(),
                });
            }
            if !(c.load > 0.0) || !c.load.is_finite() {
                return Err(InstanceError::NonPositive {
                    what: format!("load of commodity {}", c.id),
                    value: c.load,
                });
            }
        }
        if horizon == 0 {
            return Err(InstanceError::NonPositive {
                what: "horizon".into(),
                value: 0.0,
            });
        }
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(InstanceError::NonPositive {
                what: "capacity".into(),
                value: capacity,
            });
        }

        let lookup = |index: &HashMap<String, usize>, kind: &'static str, id: &str| {
            index.get(id).copied().ok_or_else(|| InstanceError::UnknownId {
                kind,
                id: id.to_string(),
            })
        };

        let mut arc_ends = Vec::with_capacity(arcs.len());
        let mut seen_arcs = HashSet::new();
        for arc in &arcs {
            let from = lookup(&depot_index, "depot", &arc.from)?;
            let to = lookup(&depot_index, "depot", &arc.to)?;
            let invalid = |reason: &str| InstanceError::InvalidArc {
                arc: arc.key(),
                reason: reason.to_string(),
            };
            if from == to {
                return Err(invalid("self-loop"));
            }
            if !(arc.cost >= 0.0) || !arc.cost.is_finite() {
                return Err(invalid("cost must be a finite nonnegative number"));
            }
            if arc.travel_time == 0 {
                return Err(invalid("travel time must be at least 1"));
            }
            if !seen_arcs.insert((from, to)) {
                return Err(InstanceError::DuplicateId {
                    kind: "arc",
                    id: arc.key(),
                });
            }
            arc_ends.push((from, to));
        }
        if let Some(longest) = arcs.iter().map(|a| a.travel_time).max() {
            if longest > horizon {
                return Err(InstanceError::HorizonTooShort {
                    horizon,
                    travel_time: longest,
                });
            }
        }

        let mut amounts = HashMap::new();
        for entry in &schedule {
            let depot = lookup(&depot_index, "depot", &entry.depot)?;
            let commodity = lookup(&commodity_index, "commodity", &entry.commodity)?;
            let invalid = |reason: &str| InstanceError::InvalidScheduleEntry {
                depot: entry.depot.clone(),
                commodity: entry.commodity.clone(),
                time: entry.time,
                reason: reason.to_string(),
            };
            if entry.time == 0 || entry.time > horizon {
                return Err(invalid("time outside 1..=horizon"));
            }
            if !entry.amount.is_finite() {
                return Err(invalid("amount must be finite"));
            }
            if entry.amount == 0.0 {
                return Err(invalid("zero amount"));
            }
            if amounts.insert((depot, commodity, entry.time), entry.amount).is_some() {
                return Err(invalid("duplicate entry"));
            }
        }

        Ok(Instance {
            depots,
            arcs,
            commodities,
            horizon,
            capacity,
            schedule,
            arc_ends,
            amounts,
        })
    }

    pub fn depots(&self) -> &[Depot] {
        &self.depots
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn schedule(&self) -> &[ScheduleEntry] {
        &self.schedule
    }

    /// `(tail, head)` depot indices of arc `arc`.
    pub fn arc_ends(&self, arc: usize) -> (usize, usize) {
        self.arc_ends[arc]
    }

    pub fn depot_index(&self, id: &str) -> Option<usize> {
        self.depots.iter().position(|d| d.id == id)
    }

    pub fn commodity_index(&self, id: &str) -> Option<usize> {
        self.commodities.iter().position(|c| c.id == id)
    }

    pub fn arc_index(&self, from: &str, to: &str) -> Option<usize> {
        self.arcs.iter().position(|a| a.from == from && a.to == to)
    }

    /// Scheduled amount `d` at (depot, commodity, t), zero when absent.
    pub fn amount(&self, depot: usize, commodity: usize, time: u32) -> f64 {
        self.amounts.get(&(depot, commodity, time)).copied().unwrap_or(0.0)
    }

    /// Total positive supply mass of a commodity.
    pub fn total_supply(&self, commodity: usize) -> f64 {
        self.amounts
            .iter()
            .filter(|((_, k, _), a)| *k == commodity && **a > 0.0)
            .map(|(_, a)| *a)
            .sum()
    }

    /// Returns a copy with arc costs replaced from a `"from->to"` keyed map.
    /// Arcs missing from the map keep their cost.
    pub fn with_costs(&self, costs: &BTreeMap<String, f64>) -> Result<Instance, InstanceError> {
        let mut arcs = self.arcs.clone();
        for key in costs.keys() {
            if !arcs.iter().any(|a| &a.key() == key) {
                return Err(InstanceError::UnknownArcCost(key.clone()));
            }
        }
        for arc in &mut arcs {
            if let Some(c) = costs.get(&arc.key()) {
                arc.cost = *c;
            }
        }
        Instance::new(
            self.depots.clone(),
            arcs,
            self.commodities.clone(),
            self.horizon,
            self.capacity,
            self.schedule.clone(),
        )
    }

    /// Earliest time step at which mass of `commodity` can be present at each
    /// depot, starting from its supply entries and following arc travel times.
    pub fn earliest_presence(&self, commodity: usize) -> Vec<Option<u32>> {
        let mut earliest = vec![None::<u32>; self.depots.len()];
        for ((depot, k, t), amount) in &self.amounts {
            if *k == commodity && *amount > 0.0 {
                earliest[*depot] = Some(earliest[*depot].map_or(*t, |e: u32| e.min(*t)));
            }
        }
        // Bellman-Ford style relaxation; graphs are tiny.
        loop {
            let mut changed = false;
            for (a, arc) in self.arcs.iter().enumerate() {
                let (from, to) = self.arc_ends[a];
                if let Some(e) = earliest[from] {
                    let arrival = e + arc.travel_time;
                    if earliest[to].is_none_or(|cur| arrival < cur) {
                        earliest[to] = Some(arrival);
                        changed = true;
                    }
                }
            }
            if !changed {
                return earliest;
            }
        }
    }

    /// Shortest travel time from each depot to any depot in `targets`.
    pub fn distance_to(&self, targets: &[usize]) -> Vec<Option<u32>> {
        let mut dist = vec![None::<u32>; self.depots.len()];
        for &t in targets {
            dist[t] = Some(0);
        }
        loop {
            let mut changed = false;
            for (a, arc) in self.arcs.iter().enumerate() {
                let (from, to) = self.arc_ends[a];
                if let Some(d) = dist[to] {
                    let via = d + arc.travel_time;
                    if dist[from].is_none_or(|cur| via < cur) {
                        dist[from] = Some(via);
                        changed = true;
                    }
                }
            }
            if !changed {
                return dist;
            }
        }
    }

    fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            depots: self.depots.clone(),
            arcs: self.arcs.clone(),
            commodities: self.commodities.clone(),
            horizon: self.horizon,
            capacity: self.capacity,
            schedule: self.schedule.clone(),
        }
    }
}

fn is_integer_multiple(amount: f64, load: f64) -> bool {
    let ratio = amount / load;
    (ratio - ratio.round()).abs() <= 1e-9 * ratio.abs().max(1.0)
}

/// Parses an instance document. Schedule amounts must be integer multiples of
/// their commodity's load.
pub fn parse_instance(text: &str) -> Result<Instance, InstanceError> {
    let doc: InstanceDocument = serde_json::from_str(text).map_err(|e| InstanceError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let inst = Instance::new(
        doc.depots,
        doc.arcs,
        doc.commodities,
        doc.horizon,
        doc.capacity,
        doc.schedule,
    )?;
    for entry in inst.schedule() {
        let k = inst.commodity_index(&entry.commodity).expect("resolved");
        let load = inst.commodities[k].load;
        if !is_integer_multiple(entry.amount, load) {
            return Err(InstanceError::InvalidScheduleEntry {
                depot: entry.depot.clone(),
                commodity: entry.commodity.clone(),
                time: entry.time,
                reason: format!("amount {} is not a multiple of load {load}", entry.amount),
            });
        }
    }
    Ok(inst)
}

pub fn serialize_instance(inst: &Instance) -> String {
    serde_json::to_string_pretty(&inst.to_document()).expect("instance serializes")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// Supplies and demands of a commodity do not cancel.
    Imbalance { commodity: String, net: f64 },
    NotMultipleOfLoad {
        depot: String,
        commodity: String,
        time: u32,
        amount: f64,
        load: f64,
    },
    /// A demand occurs before any supply could possibly arrive.
    Unreachable {
        depot: String,
        commodity: String,
        time: u32,
        earliest: Option<u32>,
    },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Imbalance { commodity, net } => {
                write!(f, "commodity {commodity}: net supply {net} (must be 0)")
            }
            Finding::NotMultipleOfLoad {
                depot,
                commodity,
                time,
                amount,
                load,
            } => write!(
                f,
                "({depot}, {commodity}, t={time}): amount {amount} is not a multiple of load {load}"
            ),
            Finding::Unreachable {
                depot,
                commodity,
                time,
                earliest,
            } => match earliest {
                Some(e) => write!(
                    f,
                    "({depot}, {commodity}, t={time}): demand precedes earliest arrival t={e}"
                ),
                None => write!(
                    f,
                    "({depot}, {commodity}, t={time}): demand is unreachable from any supply"
                ),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_imbalance(&self) -> bool {
        self.findings.iter().any(|f| matches!(f, Finding::Imbalance { .. }))
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut findings = Vec::new();

    for (k, commodity) in inst.commodities.iter().enumerate() {
        let net: f64 = inst
            .schedule
            .iter()
            .filter(|e| e.commodity == commodity.id)
            .map(|e| e.amount)
            .sum();
        let scale = inst.total_supply(k).max(1.0);
        if net.abs() > 1e-9 * scale {
            findings.push(Finding::Imbalance {
                commodity: commodity.id.clone(),
                net,
            });
        }
    }

    for entry in &inst.schedule {
        let k = inst.commodity_index(&entry.commodity).expect("resolved");
        let load = inst.commodities[k].load;
        if !is_integer_multiple(entry.amount, load) {
            findings.push(Finding::NotMultipleOfLoad {
                depot: entry.depot.clone(),
                commodity: entry.commodity.clone(),
                time: entry.time,
                amount: entry.amount,
                load,
            });
        }
    }

    let earliest: Vec<_> = (0..inst.commodities.len()).map(|k| inst.earliest_presence(k)).collect();
    for entry in inst.schedule.iter().filter(|e| e.amount < 0.0) {
        let k = inst.commodity_index(&entry.commodity).expect("resolved");
        let i = inst.depot_index(&entry.depot).expect("resolved");
        let e = earliest[k][i];
        if e.is_none_or(|e| entry.time < e) {
            findings.push(Finding::Unreachable {
                depot: entry.depot.clone(),
                commodity: entry.commodity.clone(),
                time: entry.time,
                earliest: e,
            });
        }
    }

    ValidationReport { findings }
}

/// Arcs of the Earth-Moon-Mars network, in table order.
pub const CASE_STUDY_ARCS: [(&str, &str); 8] = [
    ("N1", "N2"),
    ("N2", "N3"),
    ("N2", "N4"),
    ("N3", "N6"),
    ("N3", "N4"),
    ("N4", "N5"),
    ("N6", "N7"),
    ("N4", "N3"),
];

const CASE_STUDY_DEPOTS: [(&str, &str); 7] = [
    ("N1", "Earth"),
    ("N2", "LEO"),
    ("N3", "LTO"),
    ("N4", "LLO"),
    ("N5", "LS"),
    ("N6", "LMO"),
    ("N7", "Mars"),
];

// (depot, t, L1 mass, L2 mass)
const CASE_STUDY_SCHEDULE: [(&str, u32, f64, f64); 6] = [
    ("N1", 1, 40.0, 80.0),
    ("N1", 2, 60.0, 120.0),
    ("N5", 5, -20.0, -40.0),
    ("N5", 6, -30.0, -60.0),
    ("N7", 5, -20.0, -40.0),
    ("N7", 6, -30.0, -60.0),
];

/// Builds the seven-depot Earth-Moon-Mars scenario (two commodities, W = 100,
/// T = 6, unit travel times) with arc costs taken from `costs`.
pub fn build_case_study(costs: &BTreeMap<String, f64>) -> Result<Instance, InstanceError> {
    for key in costs.keys() {
        if !CASE_STUDY_ARCS.iter().any(|(f, t)| &arc_key(f, t) == key) {
            return Err(InstanceError::UnknownArcCost(key.clone()));
        }
    }
    let depots = CASE_STUDY_DEPOTS
        .iter()
        .map(|(id, label)| Depot {
            id: id.to_string(),
            label: label.to_string(),
        })
        .collect();
    let arcs = CASE_STUDY_ARCS
        .iter()
        .map(|(from, to)| {
            let key = arc_key(from, to);
            let cost = *costs
                .get(&key)
                .ok_or_else(|| InstanceError::MissingArcCost(key.clone()))?;
            Ok(Arc {
                from: from.to_string(),
                to: to.to_string(),
                cost,
                travel_time: 1,
            })
        })
        .collect::<Result<Vec<_>, InstanceError>>()?;
    let commodities = vec![
        Commodity {
            id: "L1".into(),
            load: 10.0,
        },
        Commodity {
            id: "L2".into(),
            load: 20.0,
        },
    ];
    let mut schedule = Vec::new();
    for (depot, time, l1, l2) in CASE_STUDY_SCHEDULE {
        for (commodity, amount) in [("L1", l1), ("L2", l2)] {
            schedule.push(ScheduleEntry {
                depot: depot.into(),
                commodity: commodity.into(),
                time,
                amount,
            });
        }
    }
    Instance::new(depots, arcs, commodities, 6, 100.0, schedule)
}

/// Parses a JSON object mapping `"Ni->Nj"` to a cost.
pub fn parse_cost_map(text: &str) -> Result<BTreeMap<String, f64>, InstanceError> {
    serde_json::from_str(text).map_err(|e| InstanceError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Draws a small random instance (2-4 depots, 1-2 commodities, T <= 3) whose
/// supplies and demands balance. Feasibility is not guaranteed.
pub fn random_micro_instance<R: Rng + ?Sized>(rng: &mut R) -> Instance {
    loop {
        let n_depots = rng.gen_range(2..=4usize);
        let horizon = rng.gen_range(2..=3u32);
        let depots: Vec<Depot> = (0..n_depots)
            .map(|i| Depot {
                id: format!("D{i}"),
                label: format!("depot {i}"),
            })
            .collect();
        let mut arcs = Vec::new();
        for i in 0..n_depots {
            for j in 0..n_depots {
                if i != j && rng.gen_bool(0.45) {
                    arcs.push(Arc {
                        from: depots[i].id.clone(),
                        to: depots[j].id.clone(),
                        cost: rng.gen_range(1..=9) as f64,
                        travel_time: if horizon > 2 && rng.gen_bool(0.2) { 2 } else { 1 },
                    });
                }
            }
        }
        if arcs.is_empty() {
            continue;
        }
        let n_commodities = rng.gen_range(1..=2usize);
        let commodities: Vec<Commodity> = (0..n_commodities)
            .map(|k| Commodity {
                id: format!("K{k}"),
                load: [1.0, 2.0, 5.0][rng.gen_range(0..3)],
            })
            .collect();
        let capacity = [2.0, 5.0, 10.0][rng.gen_range(0..3)];

        let mut schedule: Vec<ScheduleEntry> = Vec::new();
        for c in &commodities {
            // one supply event and up to two demand events splitting it
            let units = rng.gen_range(1..=2u32);
            let origin = rng.gen_range(0..n_depots);
            let t0 = rng.gen_range(1..horizon);
            schedule.push(ScheduleEntry {
                depot: depots[origin].id.clone(),
                commodity: c.id.clone(),
                time: t0,
                amount: units as f64 * c.load,
            });
            let mut remaining = units;
            while remaining > 0 {
                let take = rng.gen_range(1..=remaining);
                remaining -= take;
                let dest = rng.gen_range(0..n_depots);
                let t = rng.gen_range(t0 + 1..=horizon);
                if let Some(e) = schedule
                    .iter_mut()
                    .find(|e| e.depot == depots[dest].id && e.commodity == c.id && e.time == t)
                {
                    e.amount -= take as f64 * c.load;
                } else {
                    schedule.push(ScheduleEntry {
                        depot: depots[dest].id.clone(),
                        commodity: c.id.clone(),
                        time: t,
                        amount: -(take as f64) * c.load,
                    });
                }
            }
        }
        schedule.retain(|e| e.amount != 0.0);

        if let Ok(inst) = Instance::new(depots, arcs, commodities, horizon, capacity, schedule) {
            return inst;
        }
    }
}
