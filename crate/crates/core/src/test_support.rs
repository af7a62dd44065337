use std::collections::BTreeMap;

use crate::expansion::ReferenceTables;
use crate::instance::{arc_key, build_case_study, parse_cost_map, parse_instance, Instance, CASE_STUDY_ARCS};

pub fn micro_instance() -> Instance {
    parse_instance(include_str!("../fixtures/micro.json")).unwrap()
}

pub fn case_study_unit_costs() -> Instance {
    let costs: BTreeMap<String, f64> = CASE_STUDY_ARCS.iter().map(|(f, t)| (arc_key(f, t), 1.0)).collect();
    build_case_study(&costs).unwrap()
}

pub fn case_study_fixture() -> Instance {
    let costs = parse_cost_map(include_str!("../fixtures/case_study_costs.json")).unwrap();
    build_case_study(&costs).unwrap()
}

pub fn reference_tables() -> ReferenceTables {
    ReferenceTables::from_json(include_str!("../fixtures/reference_tables.json")).unwrap()
}
