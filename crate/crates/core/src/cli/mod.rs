//! `hamflow` command-line front end.
//!
//! Exit codes: 0 success, 1 invalid or infeasible input, 2 usage error.
//! Diagnostics go to stderr; summaries go to stdout; data goes to `--out`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::expansion::{
    evaluate_objective, expand_model, prune_model, reconstruct_solution, verify_assignment, Assignment, Model,
    ReferenceTables, VariableKind,
};
use crate::hamiltonian::{compile_hamiltonian, dynamic_range_db, export_hamiltonian_with_notes, Hamiltonian};
use crate::instance::{parse_cost_map, parse_instance, validate_instance, Instance};
use crate::report::{emit_histogram, render_reports, Format, SolutionDocument};
use crate::solvers::{
    anneal_sample, brute_force_oracle, solve_exact, summarize_samples, AnnealParams, Sample, DEFAULT_TIME_LIMIT_SECS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check an instance and list its findings
    Validate,
    /// Build the Hamiltonian and write it to <out>/hamiltonian.txt
    Compile,
    /// Solve and write the schedule tables
    Solve,
    /// Check a stored solution against the instance
    Verify,
    /// Render the schedule tables of a stored solution
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Anneal,
    Bruteforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl From<OutputFormat> for Format {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Json => Format::Json,
        }
    }
}

/// Time-expanded network flow scheduling with penalty Hamiltonians.
#[derive(Debug, Clone, Parser)]
#[command(name = "hamflow", version)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Instance JSON document
    #[arg(long)]
    pub instance: PathBuf,
    /// JSON object of "from->to": cost overriding the instance's arc costs
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Penalty weight; defaults to one more than the largest reachable cost
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    pub method: Method,
    /// Annealing restarts
    #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    /// Annealing sweeps per restart
    #[arg(long, default_value_t = AnnealParams::default().sweeps as u64, value_parser = clap::value_parser!(u64).range(1..))]
    pub sweeps: u64,
    #[arg(long, env = "HAMFLOW_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Solution JSON written by `solve` (verify, report)
    #[arg(long, conflicts_with = "tables")]
    pub solution: Option<PathBuf>,
    /// Vehicle/cargo/inventory tables to rebuild a solution from (verify, report)
    #[arg(long)]
    pub tables: Option<PathBuf>,
    /// Branch-and-bound time limit in seconds
    #[arg(long, default_value_t = DEFAULT_TIME_LIMIT_SECS)]
    pub time_limit: f64,
    /// Skip reachability pruning
    #[arg(long)]
    pub no_prune: bool,
}

/// A failure that maps to exit code 1.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&config) {
        Ok(()) => 0,
        Err(Failure(msg)) => {
            eprintln!("hamflow: {msg}");
            1
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_instance(config: &RunConfig) -> Result<Instance, Failure> {
    let inst =
        parse_instance(&read(&config.instance)?).map_err(|e| Failure(format!("{}: {e}", config.instance.display())))?;
    match &config.costs {
        Some(path) => {
            let costs = parse_cost_map(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            Ok(inst.with_costs(&costs)?)
        }
        None => Ok(inst),
    }
}

fn build_model(config: &RunConfig, inst: &Instance) -> Result<Model, Failure> {
    let full = expand_model(inst)?;
    if config.no_prune {
        Ok(full)
    } else {
        Ok(prune_model(&full)?)
    }
}

fn run(config: &RunConfig) -> Outcome {
    let inst = load_instance(config)?;
    match config.command {
        Command::Validate => validate(&inst),
        Command::Compile => compile(config, &inst),
        Command::Solve => solve(config, &inst),
        Command::Verify => verify(config, &inst),
        Command::Report => report(config, &inst),
    }
}

fn validate(inst: &Instance) -> Outcome {
    let report = validate_instance(inst);
    for f in &report.findings {
        println!("{f}");
    }
    println!("{} findings", report.findings.len());
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure("instance has findings".into()))
    }
}

fn model_summary(model: &Model) -> String {
    format!(
        "{} flow, {} vehicle variables; {} conservation, {} capacity constraints",
        model.count(VariableKind::Flow),
        model.count(VariableKind::Vehicle),
        model.conservation_count(),
        model.capacity_count()
    )
}

fn write_hamiltonian(h: &Hamiltonian, out: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(out)?;
    let path = out.join("hamiltonian.txt");
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    // sampler settings, carried as metadata only
    let notes = [
        ("quantum_fluctuation_coefficient", "0.3779644730092272"),
        ("relaxation_schedule", "2"),
    ];
    export_hamiltonian_with_notes(h, &notes, &mut file)?;
    file.flush()?;
    Ok(path)
}

fn compile(config: &RunConfig, inst: &Instance) -> Outcome {
    let full = expand_model(inst)?;
    let model = build_model(config, inst)?;
    let h = compile_hamiltonian(&model, config.alpha)?;
    let path = write_hamiltonian(&h, &config.out)?;
    let dr = dynamic_range_db(&h).ok();
    match config.format {
        OutputFormat::Csv => {
            println!("expanded: {}", model_summary(&full));
            if !config.no_prune {
                println!("pruned:   {}", model_summary(&model));
            }
            println!(
                "hamiltonian: {} variables ({} decision, {} slack), {} levels",
                h.variables().len(),
                h.decision_count(),
                h.slack_count(),
                h.total_levels()
            );
            println!("alpha: {}", h.alpha());
            match dr {
                Some(db) => println!("dynamic range: {db:.2} dB"),
                None => println!("dynamic range: n/a"),
            }
            println!("wrote {}", path.display());
        }
        OutputFormat::Json => {
            let summary = serde_json::json!({
                "flow_variables": model.count(VariableKind::Flow),
                "vehicle_variables": model.count(VariableKind::Vehicle),
                "conservation_constraints": model.conservation_count(),
                "capacity_constraints": model.capacity_count(),
                "variables": h.variables().len(),
                "decision_variables": h.decision_count(),
                "slack_variables": h.slack_count(),
                "levels": h.total_levels(),
                "alpha": h.alpha(),
                "dynamic_range_db": dr,
                "file": path.display().to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
    }
    Ok(())
}

fn write_solution(model: &Model, a: &Assignment, out: &Path) -> Outcome {
    let doc = SolutionDocument::from_assignment(model, a)?;
    fs::write(out.join("solution.json"), doc.to_json())?;
    Ok(())
}

// drops float noise such as 61.21999999999999
fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn finish_solution(config: &RunConfig, model: &Model, best: &Sample) -> Outcome {
    render_reports(model, &best.assignment, &config.out, config.format.into())?;
    write_solution(model, &best.assignment, &config.out)?;
    let vehicles: u64 = model
        .variables()
        .iter()
        .filter(|v| v.kind == VariableKind::Vehicle)
        .map(|v| best.assignment.values[v.index])
        .sum();
    println!("objective: {}", tidy(best.objective));
    println!("vehicles: {vehicles}");
    println!("wrote reports to {}", config.out.display());
    Ok(())
}

fn solve(config: &RunConfig, inst: &Instance) -> Outcome {
    let model = build_model(config, inst)?;
    fs::create_dir_all(&config.out)?;
    match config.method {
        Method::Exact => {
            let solution = solve_exact(&model, config.time_limit)?;
            if !solution.optimal {
                eprintln!("hamflow: time limit reached, result is not certified optimal");
            }
            println!("status: {}", if solution.optimal { "optimal" } else { "incumbent" });
            finish_solution(config, &model, &solution.sample)
        }
        Method::Bruteforce => {
            let best = brute_force_oracle(&model)?;
            println!("status: optimal");
            finish_solution(config, &model, &best)
        }
        Method::Anneal => {
            let h = compile_hamiltonian(&model, config.alpha)?;
            let params = AnnealParams {
                restarts: config.samples as usize,
                sweeps: config.sweeps as usize,
                ..AnnealParams::default()
            };
            let set = anneal_sample(&h, &model, &params, config.seed);
            fs::write(config.out.join("samples.csv"), set.to_csv())?;
            let mut histogram = Vec::new();
            emit_histogram(&set, &mut histogram)?;
            fs::write(config.out.join("histogram.csv"), histogram)?;
            let stats = summarize_samples(&set)?;
            println!(
                "samples: {} (feasible fraction {:.3})",
                set.samples.len(),
                stats.feasible_fraction
            );
            println!(
                "energy: best {} median {} worst {}",
                stats.best, stats.median, stats.worst
            );
            println!("mean wall time: {:.3} s", stats.mean_wall_time);
            match set.best_feasible() {
                Some(best) => finish_solution(config, &model, best),
                None => Err(Failure("no feasible sample; try more --samples or --sweeps".into())),
            }
        }
    }
}

/// Full (unpruned) model and the assignment named by `--solution` or `--tables`.
fn stored_assignment(config: &RunConfig, inst: &Instance) -> Result<(Model, Assignment), Failure> {
    let model = expand_model(inst)?;
    let a = match (&config.solution, &config.tables) {
        (Some(path), None) => SolutionDocument::from_json(&read(path)?)?.to_assignment(&model)?,
        (None, Some(path)) => {
            let tables = ReferenceTables::from_json(&read(path)?)?;
            reconstruct_solution(&model, &tables)?
        }
        _ => return Err(Failure("one of --solution or --tables is required".into())),
    };
    Ok((model, a))
}

fn verify(config: &RunConfig, inst: &Instance) -> Outcome {
    let (model, a) = stored_assignment(config, inst)?;
    let report = verify_assignment(&model, &a)?;
    println!("{report}");
    for (c, r) in model.constraints().iter().zip(&report.residuals) {
        if *r != 0 {
            println!("  {} residual {r}", model.tag_label(&c.tag));
        }
    }
    for &v in &report.bound_violations {
        println!("  {} exceeds its bound", model.variable_label(v));
    }
    println!("objective: {}", tidy(evaluate_objective(&model, &a)?));
    if report.feasible && report.bound_violations.is_empty() {
        println!("feasible");
        Ok(())
    } else {
        Err(Failure("solution is infeasible".into()))
    }
}

fn report(config: &RunConfig, inst: &Instance) -> Outcome {
    let (model, a) = stored_assignment(config, inst)?;
    let files = render_reports(&model, &a, &config.out, config.format.into())?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
