//! Restarted simulated annealing over the Hamiltonian's integer domain.
//!
//! The chain state is the decision vector only. Slacks are implied: each
//! capacity row contributes `r^2` where `r` is its residual after the
//! tightest slack, which is exactly the Hamiltonian with that slack plugged
//! in. Energies are tracked incrementally per touched row.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{postprocess_flows, Sample, SampleSet};
use crate::clock::Stopwatch;
use crate::expansion::{evaluate_objective, Assignment, ConstraintTag, Model, VariableKind};
use crate::hamiltonian::{Hamiltonian, VariableOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveKinds {
    /// One decision variable up or down by one.
    pub single: bool,
    /// One flow up or down by one, its arc's vehicle count reset to cover it.
    pub paired: bool,
    /// One unit of a commodity moved onto another route between its supply
    /// and a demand event, vehicles reset along both routes.
    pub reroute: bool,
}

impl Default for MoveKinds {
    fn default() -> Self {
        MoveKinds {
            single: true,
            paired: true,
            reroute: true,
        }
    }
}

/// Temperatures are in units of the penalty weight `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealParams {
    pub restarts: usize,
    pub sweeps: usize,
    pub initial_temperature: f64,
    pub final_temperature: f64,
    pub move_kinds: MoveKinds,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            restarts: 40,
            sweeps: 1000,
            initial_temperature: 0.05,
            final_temperature: 1e-4,
            move_kinds: MoveKinds::default(),
        }
    }
}

impl AnnealParams {
    fn normalized(&self) -> AnnealParams {
        let mut p = self.clone();
        p.restarts = p.restarts.max(1);
        p.sweeps = p.sweeps.max(1);
        if !(p.initial_temperature > 0.0) || !p.initial_temperature.is_finite() {
            p.initial_temperature = AnnealParams::default().initial_temperature;
        }
        if !(p.final_temperature > 0.0) || p.final_temperature > p.initial_temperature {
            p.final_temperature = p.initial_temperature.min(AnnealParams::default().final_temperature);
        }
        let m = p.move_kinds;
        if !(m.single || m.paired || m.reroute) {
            p.move_kinds = MoveKinds::default();
        }
        p
    }
}

#[derive(Debug, Clone, Copy)]
struct Hop {
    var: usize,
    head: usize,
    arrival: usize,
}

/// Static tables shared by all chains.
struct Landscape<'a> {
    model: &'a Model,
    alpha: f64,
    bounds: Vec<u64>,
    cost: Vec<f64>,
    /// rows touched by each variable, with coefficients
    incidence: Vec<Vec<(usize, i64)>>,
    /// slack levels for capacity rows, `None` for equalities
    slack_levels: Vec<Option<i64>>,
    rhs: Vec<i64>,
    flows: Vec<usize>,
    /// flow variable -> (its vehicle variable, its capacity row)
    cover: Vec<Option<(usize, usize)>>,
    /// outgoing hops per (depot, commodity, step)
    hops: Vec<Vec<Hop>>,
    /// (depot, step) pairs with positive supply, per commodity
    sources: Vec<Vec<(usize, usize)>>,
    /// demand flag per (depot, commodity, step)
    sink: Vec<bool>,
    n_depots: usize,
    n_k: usize,
    horizon: usize,
}

impl<'a> Landscape<'a> {
    fn new(h: &Hamiltonian, model: &'a Model) -> Self {
        let inst = model.instance();
        let n_vars = model.variables().len();
        let n_depots = inst.depots().len();
        let n_k = inst.commodities().len();
        let horizon = inst.horizon() as usize;

        let mut incidence = vec![Vec::new(); n_vars];
        for (r, c) in model.constraints().iter().enumerate() {
            for &(v, a) in &c.terms {
                incidence[v].push((r, a));
            }
        }
        let mut slack_levels = vec![None; model.constraints().len()];
        for hv in h.variables() {
            if let VariableOrigin::Slack { constraint } = hv.origin {
                slack_levels[constraint] = Some(hv.levels as i64);
            }
        }
        let mut cost = vec![0.0; n_vars];
        for &(v, c) in model.objective() {
            cost[v] += c;
        }
        let capacity_row = |arc: usize, time: u32| {
            model
                .constraints()
                .iter()
                .position(|c| c.tag == ConstraintTag::Capacity { arc, time })
        };

        let slot = |depot: usize, k: usize, t: usize| (t * n_depots + depot) * n_k + k;
        let mut hops = vec![Vec::new(); (horizon + 2) * n_depots * n_k];
        let mut cover = vec![None; n_vars];
        let mut flows = Vec::new();
        for v in model.variables() {
            if v.kind != VariableKind::Flow {
                continue;
            }
            flows.push(v.index);
            cover[v.index] = model.vehicle_var(v.arc, v.time).zip(capacity_row(v.arc, v.time));
            let (from, to) = inst.arc_ends(v.arc);
            let arrival = v.time as usize + inst.arcs()[v.arc].travel_time as usize;
            let k = v.commodity.expect("flow has a commodity");
            if arrival <= horizon {
                hops[slot(from, k, v.time as usize)].push(Hop {
                    var: v.index,
                    head: to,
                    arrival,
                });
            }
        }

        let mut sources = vec![Vec::new(); n_k];
        let mut sink = vec![false; hops.len()];
        for t in 1..=horizon {
            for depot in 0..n_depots {
                for (k, sources_k) in sources.iter_mut().enumerate() {
                    let amount = inst.amount(depot, k, t as u32);
                    if amount > 0.0 {
                        sources_k.push((depot, t));
                    } else if amount < 0.0 {
                        sink[slot(depot, k, t)] = true;
                    }
                }
            }
        }

        Landscape {
            model,
            alpha: h.alpha(),
            bounds: model.variables().iter().map(|v| v.upper_bound).collect(),
            cost,
            incidence,
            slack_levels,
            rhs: model.constraints().iter().map(|c| c.rhs).collect(),
            flows,
            cover,
            hops,
            sources,
            sink,
            n_depots,
            n_k,
            horizon,
        }
    }

    fn slot(&self, depot: usize, k: usize, t: usize) -> usize {
        (t * self.n_depots + depot) * self.n_k + k
    }

    /// Squared residual of row `r` at `lhs`, slack chosen tightest.
    fn penalty(&self, r: usize, lhs: i64) -> i128 {
        let res = match self.slack_levels[r] {
            Some(levels) => lhs + (-lhs).clamp(0, levels),
            None => lhs - self.rhs[r],
        } as i128;
        res * res
    }

    /// Exact `cost + alpha * penalty` of an assignment.
    fn energy_of(&self, values: &[u64]) -> f64 {
        let pen: i128 = self
            .model
            .constraints()
            .iter()
            .enumerate()
            .map(|(r, c)| self.penalty(r, c.lhs(values)))
            .sum();
        let cost: f64 = self.model.objective().iter().map(|&(v, c)| c * values[v] as f64).sum();
        cost + self.alpha * pen as f64
    }
}

struct Chain<'l, 'a> {
    land: &'l Landscape<'a>,
    values: Vec<u64>,
    lhs: Vec<i64>,
    energy: f64,
    /// scratch: pending changes as (var, old value)
    undo: Vec<(usize, u64)>,
    net: Vec<(usize, u64)>,
    stamp: Vec<u32>,
    shift: Vec<i64>,
    epoch: u32,
    rows: Vec<usize>,
}

impl<'l, 'a> Chain<'l, 'a> {
    fn new(land: &'l Landscape<'a>) -> Self {
        let values = vec![0u64; land.bounds.len()];
        let lhs: Vec<i64> = land.model.constraints().iter().map(|c| c.lhs(&values)).collect();
        let energy = land.energy_of(&values);
        Chain {
            land,
            values,
            lhs,
            energy,
            undo: Vec::new(),
            net: Vec::new(),
            stamp: vec![0; land.rhs.len()],
            shift: vec![0; land.rhs.len()],
            epoch: 0,
            rows: Vec::new(),
        }
    }

    fn set(&mut self, var: usize, value: u64) {
        let old = self.values[var];
        if old == value {
            return;
        }
        self.undo.push((var, old));
        self.values[var] = value;
        let diff = value as i64 - old as i64;
        for &(r, a) in &self.land.incidence[var] {
            self.lhs[r] += a * diff;
        }
    }

    fn rollback(&mut self) {
        while let Some((var, old)) = self.undo.pop() {
            let diff = old as i64 - self.values[var] as i64;
            self.values[var] = old;
            for &(r, a) in &self.land.incidence[var] {
                self.lhs[r] += a * diff;
            }
        }
    }

    /// Energy change of the pending edits relative to the committed state.
    fn pending_delta(&mut self) -> f64 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        // the earliest undo entry of a variable holds its committed value
        self.net.clear();
        for &(var, old) in &self.undo {
            if !self.net.iter().any(|(v, _)| *v == var) {
                self.net.push((var, old));
            }
        }
        self.rows.clear();
        let mut cost = 0.0;
        for &(var, old) in &self.net {
            let diff = self.values[var] as i64 - old as i64;
            cost += self.land.cost[var] * diff as f64;
            for &(r, a) in &self.land.incidence[var] {
                if self.stamp[r] != self.epoch {
                    self.stamp[r] = self.epoch;
                    self.shift[r] = 0;
                    self.rows.push(r);
                }
                self.shift[r] += a * diff;
            }
        }
        let mut pen: i128 = 0;
        for &r in &self.rows {
            pen += self.land.penalty(r, self.lhs[r]) - self.land.penalty(r, self.lhs[r] - self.shift[r]);
        }
        cost + self.land.alpha * pen as f64
    }

    fn cover_flow(&mut self, flow: usize) {
        if let Some((z, row)) = self.land.cover[flow] {
            let w = self.land.model.capacity();
            let mass = self.lhs[row] + w * self.values[z] as i64;
            let need = ((mass.max(0) + w - 1) / w) as u64;
            self.set(z, need.min(self.land.bounds[z]));
        }
    }

    fn propose_single<R: Rng>(&mut self, rng: &mut R) {
        let var = rng.gen_range(0..self.values.len());
        let v = self.values[var];
        let up = rng.gen_bool(0.5);
        if up && v < self.land.bounds[var] {
            self.set(var, v + 1);
        } else if !up && v > 0 {
            self.set(var, v - 1);
        }
    }

    fn propose_paired<R: Rng>(&mut self, rng: &mut R) {
        let Some(&flow) = self.land.flows.choose(rng) else {
            return;
        };
        let v = self.values[flow];
        let up = rng.gen_bool(0.5);
        if up && v < self.land.bounds[flow] {
            self.set(flow, v + 1);
        } else if !up && v > 0 {
            self.set(flow, v - 1);
        } else {
            return;
        }
        self.cover_flow(flow);
    }

    /// Random route for one unit of `k` from `(depot, t)`; `take` says
    /// whether to follow existing flow (remove) or spare capacity (add).
    fn walk<R: Rng>(&self, rng: &mut R, k: usize, mut depot: usize, mut t: usize, take: bool) -> Option<Vec<usize>> {
        let land = self.land;
        let mut route = Vec::new();
        let mut first = true;
        while t <= land.horizon {
            let slot = land.slot(depot, k, t);
            let options: Vec<&Hop> = land.hops[slot]
                .iter()
                .filter(|h| {
                    if take {
                        self.values[h.var] > 0
                    } else {
                        self.values[h.var] < land.bounds[h.var]
                    }
                })
                .collect();
            if !first && land.sink[slot] && (options.is_empty() || rng.gen_bool(0.5)) {
                return Some(route);
            }
            let hop = options.choose(rng)?;
            route.push(hop.var);
            depot = hop.head;
            t = hop.arrival;
            first = false;
        }
        None
    }

    fn propose_reroute<R: Rng>(&mut self, rng: &mut R) {
        let land = self.land;
        let k = rng.gen_range(0..land.n_k);
        let Some(&(depot, t)) = land.sources[k].choose(rng) else {
            return;
        };
        let mode = rng.gen_range(0..5);
        let old = if mode < 4 {
            match self.walk(rng, k, depot, t, true) {
                Some(r) => Some(r),
                None if mode < 3 => None,
                None => return,
            }
        } else {
            None
        };
        let new = if mode != 3 {
            self.walk(rng, k, depot, t, false)
        } else {
            None
        };
        if old.is_none() && new.is_none() {
            return;
        }
        let mut touched = Vec::new();
        for &var in old.iter().flatten() {
            let v = self.values[var];
            self.set(var, v - 1);
            touched.push(var);
        }
        for &var in new.iter().flatten() {
            let v = self.values[var];
            if v >= land.bounds[var] {
                self.rollback();
                return;
            }
            self.set(var, v + 1);
            touched.push(var);
        }
        for var in touched {
            self.cover_flow(var);
        }
    }

    fn run<R: Rng>(&mut self, rng: &mut R, params: &AnnealParams) -> (Vec<u64>, f64) {
        let land = self.land;
        let mut kinds: Vec<u8> = Vec::new();
        let m = params.move_kinds;
        if m.single {
            kinds.push(0);
        }
        if m.paired && !land.flows.is_empty() {
            kinds.push(1);
        }
        if m.reroute && land.sources.iter().any(|s| !s.is_empty()) {
            kinds.push(2);
        }
        let mut best = (self.values.clone(), self.energy);
        if self.values.is_empty() || kinds.is_empty() {
            return best;
        }
        let t0 = params.initial_temperature * land.alpha;
        let t1 = params.final_temperature * land.alpha;
        let per_sweep = self.values.len();
        for sweep in 0..params.sweeps {
            let frac = if params.sweeps > 1 {
                sweep as f64 / (params.sweeps - 1) as f64
            } else {
                1.0
            };
            let temperature = t0 * (t1 / t0).powf(frac);
            for _ in 0..per_sweep {
                match kinds[rng.gen_range(0..kinds.len())] {
                    0 => self.propose_single(rng),
                    1 => self.propose_paired(rng),
                    _ => self.propose_reroute(rng),
                }
                if self.undo.is_empty() {
                    continue;
                }
                let delta = self.pending_delta();
                if delta <= 0.0 || rng.gen::<f64>() < (-delta / temperature).exp() {
                    self.undo.clear();
                    self.energy += delta;
                    if self.energy < best.1 - 1e-9 {
                        best = (self.values.clone(), self.energy);
                    }
                } else {
                    self.rollback();
                }
            }
        }
        best
    }
}

fn run_restart(land: &Landscape, params: &AnnealParams, seed: u64, restart: usize) -> Sample {
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let mut chain = Chain::new(land);
    let (values, _) = chain.run(&mut rng, params);
    let raw = Assignment::new(values);
    let (assignment, report) = postprocess_flows(land.model, &raw).expect("assignment sized to model");
    let objective = evaluate_objective(land.model, &assignment).expect("assignment sized to model");
    let energy = land.energy_of(&assignment.values);
    Sample {
        assignment,
        energy,
        objective,
        feasible: report.feasible,
        restart_index: restart,
        wall_time: clock.elapsed_secs(),
    }
}

/// Runs `params.restarts` independent chains. Chain `i` draws from stream
/// `i` of a ChaCha8 generator seeded with `seed`, so results do not depend
/// on scheduling.
pub fn anneal_sample(h: &Hamiltonian, model: &Model, params: &AnnealParams, seed: u64) -> SampleSet {
    let params = params.normalized();
    let land = Landscape::new(h, model);

    #[cfg(feature = "parallel")]
    let mut samples: Vec<Sample> = {
        use rayon::prelude::*;
        (0..params.restarts)
            .into_par_iter()
            .map(|i| run_restart(&land, &params, seed, i))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut samples: Vec<Sample> = (0..params.restarts)
        .map(|i| run_restart(&land, &params, seed, i))
        .collect();

    samples.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then(a.restart_index.cmp(&b.restart_index))
    });
    SampleSet { samples, seed, params }
}
