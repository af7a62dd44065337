//! Depth-first branch-and-bound.
//!
//! The search walks time steps in order. Within a step, every (depot,
//! commodity) pair must ship exactly its arrivals plus scheduled amount, so
//! the branching decision is how those units split over the outgoing arcs.
//! Once a step's flows are fixed, its vehicles are forced to
//! `ceil(mass / W)` per arc, which is the cheapest covering. Subtrees are
//! cut with a bound of `cost so far + sum over future (depot, step) of
//! ceil(mass that must leave / W) * cheapest outgoing arc`, and step
//! boundaries are memoised on the vector of pending arrivals.

use std::collections::HashMap;

use super::{Sample, SolveError};
use crate::clock::Stopwatch;
use crate::expansion::{evaluate_objective, verify_assignment, Assignment, Model};

pub const DEFAULT_TIME_LIMIT_SECS: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub sample: Sample,
    /// `false` when the time limit stopped the search before it finished.
    pub optimal: bool,
    pub nodes: u64,
}

/// One outgoing flow option of a (depot, commodity, step) event.
#[derive(Debug, Clone, Copy)]
struct Outlet {
    var: usize,
    arc: usize,
    /// Index into the pending-arrival vector, `None` past the horizon.
    arrival_slot: Option<usize>,
    ub: u64,
}

#[derive(Debug, Clone)]
struct Event {
    commodity: usize,
    /// Scheduled amount in units.
    scheduled: i64,
    slot: usize,
    outlets: Vec<Outlet>,
}

#[derive(Debug, Clone, Copy)]
struct ArcStep {
    arc: usize,
    vehicle: Option<usize>,
    ub: u64,
    cost: f64,
}

#[derive(Debug, Clone)]
struct MemoEntry {
    value: f64,
    exact: bool,
    choice: Vec<(usize, u64)>,
}

struct Search<'m> {
    model: &'m Model,
    horizon: usize,
    n_depots: usize,
    n_k: usize,
    loads: Vec<i64>,
    capacity: i64,
    /// events[t] for t in 1..=T
    events: Vec<Vec<Event>>,
    arc_steps: Vec<Vec<ArcStep>>,
    /// cheapest outgoing arc cost per depot, `None` without outgoing arcs
    cheapest_out: Vec<Option<f64>>,
    /// scheduled units per slot
    scheduled: Vec<i64>,
    memo: HashMap<(usize, Vec<i64>), MemoEntry>,
    clock: Stopwatch,
    time_limit: f64,
    nodes: u64,
    timed_out: bool,
    incumbent: Option<(f64, Vec<(usize, u64)>)>,
    path: Vec<Vec<(usize, u64)>>,
}

impl<'m> Search<'m> {
    fn new(model: &'m Model, time_limit: f64) -> Self {
        let inst = model.instance();
        let horizon = inst.horizon() as usize;
        let n_depots = inst.depots().len();
        let n_k = inst.commodities().len();
        let loads = model.loads().to_vec();
        let slot = |depot: usize, k: usize, t: usize| (t * n_depots + depot) * n_k + k;

        let mut scheduled = vec![0i64; (horizon + 2) * n_depots * n_k];
        let mut events = vec![Vec::new(); horizon + 1];
        for t in 1..=horizon {
            for depot in 0..n_depots {
                for (k, &load) in loads.iter().enumerate() {
                    let units = inst.amount(depot, k, t as u32) as i64 / load;
                    scheduled[slot(depot, k, t)] = units;
                    let mut outlets: Vec<Outlet> = inst
                        .arcs()
                        .iter()
                        .enumerate()
                        .filter(|(a, _)| inst.arc_ends(*a).0 == depot)
                        .filter_map(|(a, arc)| {
                            let var = model.flow_var(a, k, t as u32)?;
                            let arrival = t + arc.travel_time as usize;
                            let arrival_slot = (arrival <= horizon).then(|| slot(inst.arc_ends(a).1, k, arrival));
                            Some(Outlet {
                                var,
                                arc: a,
                                arrival_slot,
                                // mass landing after the horizon is never
                                // part of a feasible plan
                                ub: if arrival_slot.is_some() {
                                    model.variables()[var].upper_bound
                                } else {
                                    0
                                },
                            })
                        })
                        .collect();
                    // expensive arcs first
                    outlets.sort_by(|a, b| {
                        inst.arcs()[b.arc]
                            .cost
                            .total_cmp(&inst.arcs()[a.arc].cost)
                            .then(a.arc.cmp(&b.arc))
                    });
                    events[t].push(Event {
                        commodity: k,
                        scheduled: units,
                        slot: slot(depot, k, t),
                        outlets,
                    });
                }
            }
        }

        let mut arc_steps = vec![Vec::new(); horizon + 1];
        for (t, steps) in arc_steps.iter_mut().enumerate().skip(1) {
            for (a, arc) in inst.arcs().iter().enumerate() {
                let vehicle = model.vehicle_var(a, t as u32);
                steps.push(ArcStep {
                    arc: a,
                    vehicle,
                    ub: vehicle.map_or(0, |z| model.variables()[z].upper_bound),
                    cost: arc.cost,
                });
            }
        }

        let mut cheapest_out: Vec<Option<f64>> = vec![None; n_depots];
        for (a, arc) in inst.arcs().iter().enumerate() {
            let from = inst.arc_ends(a).0;
            cheapest_out[from] = Some(cheapest_out[from].map_or(arc.cost, |c: f64| c.min(arc.cost)));
        }

        Search {
            model,
            horizon,
            n_depots,
            n_k,
            loads,
            capacity: model.capacity(),
            events,
            arc_steps,
            cheapest_out,
            scheduled,
            memo: HashMap::new(),
            clock: Stopwatch::start(),
            time_limit,
            nodes: 0,
            timed_out: false,
            incumbent: None,
            path: Vec::new(),
        }
    }

    fn slot_range(&self, t: usize) -> std::ops::Range<usize> {
        let per_step = self.n_depots * self.n_k;
        t * per_step..(self.horizon + 1) * per_step
    }

    /// Lower bound on the cost of steps `t..=T` given pending arrivals.
    fn bound_from(&self, t: usize, pending: &[i64]) -> f64 {
        let mut total = 0.0;
        for step in t..=self.horizon {
            for depot in 0..self.n_depots {
                let mut mass = 0i64;
                for k in 0..self.n_k {
                    let s = (step * self.n_depots + depot) * self.n_k + k;
                    mass += (self.scheduled[s] + pending[s]).max(0) * self.loads[k];
                }
                if mass > 0 {
                    match self.cheapest_out[depot] {
                        Some(c) => total += c * ((mass + self.capacity - 1) / self.capacity) as f64,
                        None => return f64::INFINITY,
                    }
                }
            }
        }
        total
    }

    fn out_of_time(&mut self) -> bool {
        if !self.timed_out && self.nodes.is_multiple_of(1024) && self.clock.elapsed_secs() > self.time_limit {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Minimum cost of steps `t..=T`, or a lower bound `>= budget` when every
    /// completion costs at least `budget`.
    fn future(&mut self, t: usize, pending: &mut [i64], spent: f64, budget: f64) -> f64 {
        if t > self.horizon {
            if self.incumbent.as_ref().is_none_or(|(c, _)| spent < *c) {
                self.incumbent = Some((spent, self.path.concat()));
            }
            return 0.0;
        }
        let key = (t, pending[self.slot_range(t)].to_vec());
        if let Some(entry) = self.memo.get(&key) {
            if entry.exact || entry.value >= budget {
                let value = entry.value;
                if entry.exact && value.is_finite() {
                    self.adopt_memo_path(t, pending, spent + value);
                }
                return value;
            }
        }

        let mut best = f64::INFINITY;
        let mut best_choice = Vec::new();
        let limit = budget;
        let mut budget = budget;
        let mut choice = Vec::new();
        let mut arc_mass = vec![0i64; self.model.instance().arcs().len()];
        self.split(
            t,
            0,
            pending,
            &mut arc_mass,
            &mut choice,
            spent,
            &mut budget,
            &mut best,
            &mut best_choice,
        );
        if !self.timed_out {
            let entry = if best < limit || limit.is_infinite() {
                MemoEntry {
                    value: best,
                    exact: true,
                    choice: best_choice,
                }
            } else {
                // every completion costs at least `limit`
                MemoEntry {
                    value: limit,
                    exact: false,
                    choice: Vec::new(),
                }
            };
            self.memo.insert(key, entry);
        }
        best
    }

    /// Enumerates splits for the events of step `t` from `idx` on.
    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        t: usize,
        idx: usize,
        pending: &mut [i64],
        arc_mass: &mut [i64],
        choice: &mut Vec<(usize, u64)>,
        spent: f64,
        budget: &mut f64,
        best: &mut f64,
        best_choice: &mut Vec<(usize, u64)>,
    ) {
        self.nodes += 1;
        if self.out_of_time() {
            return;
        }
        if idx == self.events[t].len() {
            self.close_step(t, pending, arc_mass, choice, spent, budget, best, best_choice);
            return;
        }
        let event = self.events[t][idx].clone();
        let must_ship = event.scheduled + pending[event.slot];
        if must_ship < 0 || (must_ship > 0 && event.outlets.is_empty()) {
            return;
        }
        let mut values = vec![0u64; event.outlets.len()];
        self.compose(
            t,
            idx,
            &event,
            0,
            must_ship as u64,
            &mut values,
            pending,
            arc_mass,
            choice,
            spent,
            budget,
            best,
            best_choice,
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn compose(
        &mut self,
        t: usize,
        idx: usize,
        event: &Event,
        j: usize,
        remaining: u64,
        values: &mut Vec<u64>,
        pending: &mut [i64],
        arc_mass: &mut [i64],
        choice: &mut Vec<(usize, u64)>,
        spent: f64,
        budget: &mut f64,
        best: &mut f64,
        best_choice: &mut Vec<(usize, u64)>,
    ) {
        if j == event.outlets.len() {
            if remaining == 0 {
                self.split(t, idx + 1, pending, arc_mass, choice, spent, budget, best, best_choice);
            }
            return;
        }
        let outlet = event.outlets[j];
        let rest_capacity: u64 = event.outlets[j + 1..].iter().map(|o| o.ub).sum();
        let hi = remaining.min(outlet.ub);
        let lo = remaining.saturating_sub(rest_capacity);
        if lo > hi {
            return;
        }
        let load = self.loads[event.commodity];
        for v in lo..=hi {
            if self.timed_out {
                return;
            }
            if v > 0 {
                if let Some(s) = outlet.arrival_slot {
                    pending[s] += v as i64;
                }
                arc_mass[outlet.arc] += v as i64 * load;
                choice.push((outlet.var, v));
            }
            values[j] = v;
            self.compose(
                t,
                idx,
                event,
                j + 1,
                remaining - v,
                values,
                pending,
                arc_mass,
                choice,
                spent,
                budget,
                best,
                best_choice,
            );
            if v > 0 {
                if let Some(s) = outlet.arrival_slot {
                    pending[s] -= v as i64;
                }
                arc_mass[outlet.arc] -= v as i64 * load;
                choice.pop();
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn close_step(
        &mut self,
        t: usize,
        pending: &mut [i64],
        arc_mass: &mut [i64],
        choice: &mut Vec<(usize, u64)>,
        spent: f64,
        budget: &mut f64,
        best: &mut f64,
        best_choice: &mut Vec<(usize, u64)>,
    ) {
        let mut step_cost = 0.0;
        let mut step_choice = choice.clone();
        for step in &self.arc_steps[t] {
            let mass = arc_mass[step.arc];
            if mass == 0 {
                continue;
            }
            let vehicles = ((mass + self.capacity - 1) / self.capacity) as u64;
            match step.vehicle {
                Some(z) if vehicles <= step.ub => {
                    step_cost += step.cost * vehicles as f64;
                    step_choice.push((z, vehicles));
                }
                _ => return,
            }
        }
        if step_cost + self.bound_from(t + 1, pending) >= *budget {
            return;
        }
        self.path.push(step_choice.clone());
        let rest = self.future(t + 1, pending, spent + step_cost, *budget - step_cost);
        self.path.pop();
        let total = step_cost + rest;
        if total < *best {
            *best = total;
            *best_choice = step_choice;
            if total < *budget {
                *budget = total;
            }
        }
    }

    /// Rebuilds the completion stored in the memo and offers it as incumbent.
    fn adopt_memo_path(&mut self, t: usize, pending: &[i64], total: f64) {
        if self.incumbent.as_ref().is_some_and(|(c, _)| *c <= total) {
            return;
        }
        let mut pending = pending.to_vec();
        let mut plan: Vec<(usize, u64)> = self.path.concat();
        for step in t..=self.horizon {
            let key = (step, pending[self.slot_range(step)].to_vec());
            let Some(entry) = self.memo.get(&key) else {
                return;
            };
            let choice = entry.choice.clone();
            for &(var, value) in &choice {
                let v = &self.model.variables()[var];
                if let Some(k) = v.commodity {
                    let arc = &self.model.instance().arcs()[v.arc];
                    let arrival = step + arc.travel_time as usize;
                    if arrival <= self.horizon {
                        let head = self.model.instance().arc_ends(v.arc).1;
                        pending[(arrival * self.n_depots + head) * self.n_k + k] += value as i64;
                    }
                }
            }
            plan.extend(choice);
        }
        self.incumbent = Some((total, plan));
    }
}

/// Finds a minimum-cost assignment. Returns the incumbent flagged
/// non-optimal when `time_limit` (seconds) expires first.
pub fn solve_exact(model: &Model, time_limit: f64) -> Result<ExactSolution, SolveError> {
    let mut search = Search::new(model, time_limit);
    let mut pending = vec![0i64; search.scheduled.len()];
    let value = search.future(1, &mut pending, 0.0, f64::INFINITY);

    let Some((_, plan)) = search.incumbent.take() else {
        return Err(if search.timed_out {
            SolveError::TimedOut(time_limit)
        } else {
            SolveError::Infeasible
        });
    };
    let mut values = vec![0u64; model.variables().len()];
    for (var, v) in plan {
        values[var] = v;
    }
    let assignment = Assignment::new(values);
    let report = verify_assignment(model, &assignment)?;
    debug_assert!(report.feasible, "branch-and-bound produced {report}");
    let objective = evaluate_objective(model, &assignment)?;
    debug_assert!(search.timed_out || (objective - value).abs() <= 1e-9 * value.abs().max(1.0));

    Ok(ExactSolution {
        sample: Sample {
            assignment,
            energy: objective,
            objective,
            feasible: report.feasible,
            restart_index: 0,
            wall_time: search.clock.elapsed_secs(),
        },
        optimal: !search.timed_out,
        nodes: search.nodes,
    })
}
