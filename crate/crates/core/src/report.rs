//! Schedule tables and sample histograms.
//!
//! Step columns are departure steps: cargo in column `t` leaves its tail at
//! `t`. Inventory at `(node, commodity, t)` is the mass departing the node at
//! `t` plus all demand delivered there up to and including `t`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::{verify_assignment, Assignment, ExpansionError, Model};
use crate::solvers::{summarize_samples, SampleSet, SolveError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("refusing to render an infeasible assignment: {0}")]
    Unverified(String),
    #[error(transparent)]
    Model(#[from] ExpansionError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("solution document: {0}")]
    Syntax(String),
    #[error("solution refers to {0}, which is not a model variable")]
    UnknownVariable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcRow<T> {
    pub arc: String,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InventoryLine {
    pub node: String,
    pub commodity: String,
    pub values: Vec<i64>,
}

/// The three schedule tables, one column per departure step `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleTables {
    pub steps: u32,
    pub vehicles: Vec<ArcRow<u64>>,
    pub cargo: Vec<ArcRow<i64>>,
    pub inventory: Vec<InventoryLine>,
}

impl ScheduleTables {
    pub fn total_vehicles(&self) -> u64 {
        self.vehicles.iter().flat_map(|r| &r.values).sum()
    }
}

/// Builds the tables without checking feasibility.
pub fn schedule_tables(model: &Model, a: &Assignment) -> Result<ScheduleTables, ExpansionError> {
    if a.values.len() != model.variables().len() {
        return Err(ExpansionError::LengthMismatch {
            expected: model.variables().len(),
            got: a.values.len(),
        });
    }
    let inst = model.instance();
    let steps = inst.horizon();
    let n = steps as usize;
    let loads = model.loads();

    let mut vehicles: Vec<ArcRow<u64>> = inst
        .arcs()
        .iter()
        .map(|arc| ArcRow {
            arc: arc.key(),
            values: vec![0; n],
        })
        .collect();
    let mut cargo: Vec<ArcRow<i64>> = inst
        .arcs()
        .iter()
        .map(|arc| ArcRow {
            arc: arc.key(),
            values: vec![0; n],
        })
        .collect();
    let mut departing = vec![vec![vec![0i64; n]; inst.commodities().len()]; inst.depots().len()];

    for v in model.variables() {
        let value = a.values[v.index];
        let t = v.time as usize;
        if value == 0 || t == 0 || t > n {
            continue;
        }
        match v.commodity {
            Some(k) => {
                let mass = value as i64 * loads[k];
                cargo[v.arc].values[t - 1] += mass;
                departing[inst.arc_ends(v.arc).0][k][t - 1] += mass;
            }
            None => vehicles[v.arc].values[t - 1] += value,
        }
    }

    let mut inventory = Vec::new();
    for (k, commodity) in inst.commodities().iter().enumerate() {
        for (i, depot) in inst.depots().iter().enumerate() {
            let mut delivered = 0i64;
            let values = (1..=steps)
                .map(|t| {
                    let amount = inst.amount(i, k, t);
                    if amount < 0.0 {
                        delivered += (-amount) as i64;
                    }
                    departing[i][k][t as usize - 1] + delivered
                })
                .collect();
            inventory.push(InventoryLine {
                node: depot.id.clone(),
                commodity: commodity.id.clone(),
                values,
            });
        }
    }

    Ok(ScheduleTables {
        steps,
        vehicles,
        cargo,
        inventory,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub from: String,
    pub to: String,
    pub commodity: String,
    pub time: u32,
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleEntry {
    pub from: String,
    pub to: String,
    pub time: u32,
    pub count: u64,
}

/// Nonzero entries of an assignment, keyed by names rather than indices so
/// that it applies to any model of the same instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub objective: f64,
    pub flows: Vec<FlowEntry>,
    pub vehicles: Vec<VehicleEntry>,
}

impl SolutionDocument {
    pub fn from_assignment(model: &Model, a: &Assignment) -> Result<Self, ExpansionError> {
        let objective = crate::expansion::evaluate_objective(model, a)?;
        let inst = model.instance();
        let mut flows = Vec::new();
        let mut vehicles = Vec::new();
        for v in model.variables() {
            let value = a.values[v.index];
            if value == 0 {
                continue;
            }
            let arc = &inst.arcs()[v.arc];
            match v.commodity {
                Some(k) => flows.push(FlowEntry {
                    from: arc.from.clone(),
                    to: arc.to.clone(),
                    commodity: inst.commodities()[k].id.clone(),
                    time: v.time,
                    units: value,
                }),
                None => vehicles.push(VehicleEntry {
                    from: arc.from.clone(),
                    to: arc.to.clone(),
                    time: v.time,
                    count: value,
                }),
            }
        }
        Ok(SolutionDocument {
            objective,
            flows,
            vehicles,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|e| ReportError::Syntax(e.to_string()))
    }

    /// Maps the entries onto `model`; every named variable must exist there.
    /// The stored objective is not trusted.
    pub fn to_assignment(&self, model: &Model) -> Result<Assignment, ReportError> {
        let inst = model.instance();
        let mut a = Assignment::zeros(model);
        for f in &self.flows {
            let label = format!(
                "x[{},{},t={}]",
                crate::instance::arc_key(&f.from, &f.to),
                f.commodity,
                f.time
            );
            let var = inst
                .arc_index(&f.from, &f.to)
                .zip(inst.commodity_index(&f.commodity))
                .and_then(|(arc, k)| model.flow_var(arc, k, f.time))
                .ok_or(ReportError::UnknownVariable(label))?;
            a.values[var] += f.units;
        }
        for z in &self.vehicles {
            let label = format!("z[{},t={}]", crate::instance::arc_key(&z.from, &z.to), z.time);
            let var = inst
                .arc_index(&z.from, &z.to)
                .and_then(|arc| model.vehicle_var(arc, z.time))
                .ok_or(ReportError::UnknownVariable(label))?;
            a.values[var] += z.count;
        }
        Ok(a)
    }
}

const STEP_NOTE: &str = "# columns t1..tT are departure steps";

fn step_header(first: &[&str], steps: u32) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain((1..=steps).map(|t| format!("t{t}")))
        .collect()
}

fn csv_table<T: ToString>(header: Vec<String>, rows: impl Iterator<Item = (Vec<String>, Vec<T>)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for (lead, values) in rows {
        let record: Vec<String> = lead.into_iter().chain(values.iter().map(T::to_string)).collect();
        w.write_record(&record).expect("in-memory write");
    }
    let body = String::from_utf8(w.into_inner().expect("flush")).expect("utf8");
    format!("{STEP_NOTE}\n{body}")
}

/// `(file name, contents)` for the three tables.
pub fn render_tables(tables: &ScheduleTables, format: Format) -> Vec<(String, String)> {
    let name = |stem: &str| format!("{stem}.{}", format.extension());
    match format {
        Format::Csv => {
            let split = |arc: &str| {
                let (from, to) = arc.split_once("->").unwrap_or((arc, ""));
                vec![from.to_string(), to.to_string()]
            };
            vec![
                (
                    name("vehicles"),
                    csv_table(
                        step_header(&["from", "to"], tables.steps),
                        tables.vehicles.iter().map(|r| (split(&r.arc), r.values.clone())),
                    ),
                ),
                (
                    name("cargo"),
                    csv_table(
                        step_header(&["from", "to"], tables.steps),
                        tables.cargo.iter().map(|r| (split(&r.arc), r.values.clone())),
                    ),
                ),
                (
                    name("inventory"),
                    csv_table(
                        step_header(&["node", "commodity"], tables.steps),
                        tables
                            .inventory
                            .iter()
                            .map(|r| (vec![r.node.clone(), r.commodity.clone()], r.values.clone())),
                    ),
                ),
            ]
        }
        Format::Json => {
            let json = |v: serde_json::Value| serde_json::to_string_pretty(&v).expect("tables serialize") + "\n";
            let note = "columns are departure steps 1..T";
            vec![
                (
                    name("vehicles"),
                    json(serde_json::json!({ "note": note, "rows": tables.vehicles })),
                ),
                (
                    name("cargo"),
                    json(serde_json::json!({ "note": note, "rows": tables.cargo })),
                ),
                (
                    name("inventory"),
                    json(serde_json::json!({ "note": note, "rows": tables.inventory })),
                ),
            ]
        }
    }
}

/// Writes vehicles, cargo and inventory tables into `out`. Assignments that
/// fail verification are refused.
pub fn render_reports(model: &Model, a: &Assignment, out: &Path, format: Format) -> Result<Vec<PathBuf>, ReportError> {
    let report = verify_assignment(model, a)?;
    if !report.feasible || !report.bound_violations.is_empty() {
        let detail = match report.worst {
            Some((tag, r)) => format!("{report}; worst is {} with residual {r}", model.tag_label(&tag)),
            None => report.to_string(),
        };
        return Err(ReportError::Unverified(detail));
    }
    let tables = schedule_tables(model, a)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (name, contents) in render_tables(&tables, format) {
        let path = out.join(name);
        fs::write(&path, contents)?;
        written.push(path);
    }
    Ok(written)
}

/// Energy histogram: `bin_lower,bin_upper,count` for each bin, then a
/// `total,,<n>` row. Wall times are left out so equal seeds give equal bytes.
pub fn emit_histogram<W: Write>(s: &SampleSet, out: &mut W) -> Result<(), ReportError> {
    let stats = summarize_samples(s)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lower", "bin_upper", "count"])
        .expect("in-memory write");
    for bin in &stats.histogram {
        w.write_record([bin.lower.to_string(), bin.upper.to_string(), bin.count.to_string()])
            .expect("in-memory write");
    }
    w.write_record(["total".to_string(), String::new(), s.samples.len().to_string()])
        .expect("in-memory write");
    out.write_all(&w.into_inner().expect("flush"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::{expand_model, prune_model, reconstruct_solution};
    use crate::instance::Instance;
    use crate::solvers::{AnnealParams, Sample};
    use crate::test_support::{case_study_unit_costs, reference_tables};

    fn reference() -> (Model, Assignment) {
        let model = prune_model(&expand_model(&case_study_unit_costs()).unwrap()).unwrap();
        let a = reconstruct_solution(&model, &reference_tables()).unwrap();
        (model, a)
    }

    #[test]
    fn reference_cargo_and_inventory() {
        let (model, a) = reference();
        let t = schedule_tables(&model, &a).unwrap();
        let n1n2 = t.cargo.iter().find(|r| r.arc == "N1->N2").unwrap();
        assert_eq!(n1n2.values, vec![120, 180, 0, 0, 0, 0]);
        let last = |node: &str, k: &str| {
            *t.inventory
                .iter()
                .find(|r| r.node == node && r.commodity == k)
                .unwrap()
                .values
                .last()
                .unwrap()
        };
        assert_eq!(last("N5", "L1"), 50);
        assert_eq!(last("N7", "L1"), 50);
        assert_eq!(last("N5", "L2"), 100);
        assert_eq!(last("N7", "L2"), 100);
        assert_eq!(t.total_vehicles(), 17);
        let expected = reference_tables();
        for row in &t.inventory {
            let want = expected
                .inventory
                .iter()
                .find(|r| r.node == row.node && r.commodity == row.commodity)
                .unwrap();
            assert_eq!(row.values, want.values, "{} {}", row.node, row.commodity);
        }
        for (v, c) in t.vehicles.iter().zip(&t.cargo) {
            for (z, m) in v.values.iter().zip(&c.values) {
                assert!(*z as i64 * 100 >= *m);
            }
        }
    }

    #[test]
    fn refuses_infeasible() {
        let (model, mut a) = reference();
        let vehicle = model
            .variables()
            .iter()
            .find(|v| v.commodity.is_none() && a.values[v.index] > 0)
            .unwrap()
            .index;
        a.values[vehicle] -= 1;
        let dir = tempfile::tempdir().unwrap();
        let err = render_reports(&model, &a, dir.path(), Format::Csv).unwrap_err();
        assert!(matches!(err, ReportError::Unverified(_)));
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn empty_schedule_gives_zero_tables() {
        let inst = case_study_unit_costs();
        let empty = Instance::new(
            inst.depots().to_vec(),
            inst.arcs().to_vec(),
            inst.commodities().to_vec(),
            inst.horizon(),
            inst.capacity(),
            vec![],
        )
        .unwrap();
        let model = expand_model(&empty).unwrap();
        let t = schedule_tables(&model, &Assignment::zeros(&model)).unwrap();
        assert!(t.cargo.iter().all(|r| r.values.iter().all(|v| *v == 0)));
        assert!(t.inventory.iter().all(|r| r.values.iter().all(|v| *v == 0)));
        assert_eq!(t.total_vehicles(), 0);
    }

    #[test]
    fn csv_and_json_files() {
        let (model, a) = reference();
        let dir = tempfile::tempdir().unwrap();
        let files = render_reports(&model, &a, dir.path(), Format::Csv).unwrap();
        assert_eq!(files.len(), 3);
        let cargo = fs::read_to_string(dir.path().join("cargo.csv")).unwrap();
        assert!(cargo.starts_with(STEP_NOTE));
        assert!(cargo.contains("\nN1,N2,120,180,0,0,0,0\n"));
        render_reports(&model, &a, dir.path(), Format::Json).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("vehicles.json")).unwrap()).unwrap();
        assert_eq!(json["rows"][0]["arc"], "N1->N2");
    }

    #[test]
    fn solution_document_round_trip() {
        let (model, a) = reference();
        let doc = SolutionDocument::from_assignment(&model, &a).unwrap();
        assert_eq!(doc.vehicles.iter().map(|z| z.count).sum::<u64>(), 17);
        let parsed = SolutionDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(parsed.to_assignment(&model).unwrap(), a);
        // the same document lands on the unpruned model too
        let full = expand_model(model.instance()).unwrap();
        let on_full = parsed.to_assignment(&full).unwrap();
        assert!(verify_assignment(&full, &on_full).unwrap().feasible);
        let mut bad = parsed;
        bad.vehicles[0].from = "N9".into();
        assert!(matches!(
            bad.to_assignment(&model),
            Err(ReportError::UnknownVariable(_))
        ));
    }

    #[test]
    fn histogram_rows() {
        let samples = (0..40)
            .map(|i| Sample {
                assignment: Assignment::new(vec![]),
                energy: i as f64,
                objective: i as f64,
                feasible: true,
                restart_index: i,
                wall_time: 0.1 * i as f64,
            })
            .collect();
        let set = SampleSet {
            samples,
            seed: 1,
            params: AnnealParams::default(),
        };
        let mut buf = Vec::new();
        emit_histogram(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 22);
        assert_eq!(lines[21], "total,,40");
        let counted: usize = lines[1..21]
            .iter()
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(counted, 40);
    }
}
