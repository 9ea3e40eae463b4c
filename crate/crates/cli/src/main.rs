//! `ccpfr`: solve, validate and compare dispatch formulations.
//!
//! Exit codes: 0 success, 1 infeasible or iteration limit, 2 input/output or
//! parse failure, 3 case hash mismatch, 4 scenario seed mismatch.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use ccpfr::cceval::WeightScaleRule;
use ccpfr::grid::{apply_case_modifiers, GridCase};
use ccpfr::montecarlo::{compare, sample_wind, validate, ComparisonEntry, ValidateOptions};
use ccpfr::policy::{Deadband, DroopSet, TriggerRule};
use ccpfr::ptdf::build_ptdf;
use ccpfr::solver::{solve_ccopf, solve_ccopf_pfr, solve_dcopf, Formulation, PfrOptions, Status};
use ccpfr::uncertainty::WindStatistics;
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{read_json, write_json, ConfigFile, Outputs, ReportDocument, RunConfig, SolutionDocument};

#[derive(Parser)]
#[command(name = "ccpfr", version, about = "Chance-constrained dispatch with dead-zone frequency response")]
struct Cli {
    /// Worker threads for constraint evaluation and scenario replay.
    #[arg(long, env = "CCPFR_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one dispatch problem and write the solution document.
    Solve(SolveArgs),
    /// Replay a solution against sampled wind and write a report document.
    Validate(ValidateArgs),
    /// Tabulate several report documents as CSV.
    Compare(CompareArgs),
    /// Print a readable summary of a solution or report document.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormulationArg {
    Dcopf,
    Ccopf,
    CcopfPfr,
}

impl From<FormulationArg> for Formulation {
    fn from(f: FormulationArg) -> Self {
        match f {
            FormulationArg::Dcopf => Formulation::Dcopf,
            FormulationArg::Ccopf => Formulation::Ccopf,
            FormulationArg::CcopfPfr => Formulation::CcopfPfr,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TriggerArg {
    WithPrimary,
    FreeResponse,
}

impl From<TriggerArg> for TriggerRule {
    fn from(t: TriggerArg) -> Self {
        match t {
            TriggerArg::WithPrimary => TriggerRule::WithPrimary,
            TriggerArg::FreeResponse => TriggerRule::FreeResponse,
        }
    }
}

fn parse_weight_scale(s: &str) -> Result<WeightScaleRule, String> {
    match s {
        "tightest" => Ok(WeightScaleRule::Tightest),
        "limit" => Ok(WeightScaleRule::Limit),
        mw => match mw.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(WeightScaleRule::Fixed(v)),
            _ => Err(format!("expected `tightest`, `limit` or a positive MW value, got `{s}`")),
        },
    }
}

#[derive(Args)]
struct CaseArgs {
    /// Case document (TOML).
    #[arg(long)]
    case: Option<PathBuf>,
    /// Fraction removed from every line rating.
    #[arg(long)]
    line_derate: Option<f64>,
    /// Multiplier on every bus load.
    #[arg(long)]
    load_scale: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Defaults for any flag not given (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_enum)]
    formulation: Option<FormulationArg>,
    /// Violation probability for the chance-constrained formulations.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Dead-zone width as an aggregate imbalance, MW.
    #[arg(long)]
    deadband: Option<f64>,
    #[arg(long, value_enum)]
    trigger: Option<TriggerArg>,
    /// `tightest`, `limit` or a fixed scale in MW.
    #[arg(long, value_parser = parse_weight_scale)]
    weight_scale: Option<WeightScaleRule>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Solution document to write (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Solution document written by `solve`.
    #[arg(long)]
    solution: PathBuf,
    /// Overrides of the case recorded in the solution.
    #[command(flatten)]
    case: CaseArgs,
    /// Dead-zone width used for replay; defaults to the solve setting.
    #[arg(long)]
    deadband: Option<f64>,
    #[arg(long, value_enum)]
    trigger: Option<TriggerArg>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Clip negative wind realizations to zero.
    #[arg(long)]
    truncate: bool,
    /// Report document to write (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Report documents written by `validate`, baseline first.
    #[arg(required = true, num_args = 2..)]
    reports: Vec<PathBuf>,
    /// Row labels, comma separated; defaults to the formulation names.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<String>>,
    /// Comparison table (CSV); printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plot data (CSV).
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Leave the solve_seconds column empty.
    #[arg(long)]
    omit_timing: bool,
}

#[derive(Args)]
struct ReportArgs {
    document: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<ccpfr::Error>() {
            Some(ccpfr::Error::Infeasible(_)) => 1,
            Some(ccpfr::Error::CaseMismatch { .. }) => 3,
            Some(ccpfr::Error::SeedMismatch { .. }) => 4,
            _ => 2,
        };
        Failure { code, error }
    }
}

impl From<ccpfr::Error> for Failure {
    fn from(error: ccpfr::Error) -> Self {
        anyhow::Error::from(error).into()
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_case(path: &Path, line_derate: f64, load_scale: f64) -> anyhow::Result<GridCase> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read case {}", path.display()))?;
    let case = GridCase::from_toml_str(&text).with_context(|| format!("invalid case {}", path.display()))?;
    Ok(apply_case_modifiers(&case, line_derate, load_scale)?)
}

fn cmd_solve(a: SolveArgs) -> Outcome {
    let file = match &a.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let Some(case_path) = a.case.case.or(file.case) else {
        return Err(anyhow::anyhow!("no case given; pass --case").into());
    };
    let formulation: Formulation = a.formulation.map(Into::into).or(file.formulation).unwrap_or(Formulation::CcopfPfr);
    let epsilon = a.epsilon.or(file.epsilon);
    if formulation != Formulation::Dcopf {
        match epsilon {
            Some(e) if e > 0.0 && e < 1.0 => {}
            Some(e) => return Err(anyhow::anyhow!("epsilon must lie in (0, 1), got {e}").into()),
            None => return Err(anyhow::anyhow!("{} needs --epsilon", formulation.name()).into()),
        }
    }
    let line_derate = a.case.line_derate.or(file.line_derate).unwrap_or(0.0);
    let load_scale = a.case.load_scale.or(file.load_scale).unwrap_or(1.0);
    let case = load_case(&case_path, line_derate, load_scale)?;
    let droops = DroopSet::from_case(&case)?;
    let config = RunConfig {
        case: case_path,
        line_derate,
        load_scale,
        formulation,
        epsilon: if formulation == Formulation::Dcopf { None } else { epsilon },
        deadband_mw: a.deadband.or(file.deadband_mw).unwrap_or(100.0),
        trigger: a.trigger.map(Into::into).or(file.trigger).unwrap_or_default(),
        weight_scale: a.weight_scale.or(file.weight_scale).unwrap_or(WeightScaleRule::Tightest),
        max_iterations: a.max_iterations.or(file.max_iterations).unwrap_or(PfrOptions::default().max_iterations),
        droops,
        samples: None,
        seed: None,
        truncate_negative: false,
        outputs: Outputs { solution: a.out.clone(), report: None },
    };

    let ptdf = build_ptdf(&case)?;
    let wind = WindStatistics::from_case(&case);
    let deadband = Deadband::with_trigger(config.deadband_mw, config.trigger)?;
    let start = Instant::now();
    let solution = match formulation {
        Formulation::Dcopf => solve_dcopf(&case, &ptdf)?,
        Formulation::Ccopf => solve_ccopf(&case, &ptdf, &config.droops, &wind, epsilon.unwrap_or_default())?,
        Formulation::CcopfPfr => {
            let options = PfrOptions {
                weight_rule: config.weight_scale,
                max_iterations: config.max_iterations,
                ..PfrOptions::default()
            };
            solve_ccopf_pfr(&case, &ptdf, &config.droops, &wind, epsilon.unwrap_or_default(), deadband, options)?
        }
    };
    let solve_seconds = start.elapsed().as_secs_f64();
    println!(
        "{} status {} objective {:.4} iterations {} wall {:.3} s",
        formulation.name(),
        status_name(solution.status),
        solution.objective,
        solution.iterations,
        solve_seconds
    );
    let status = solution.status;
    let doc = SolutionDocument { config, case_hash: case.content_hash(), solve_seconds, solution };
    if let Some(out) = &a.out {
        write_json(out, &doc)?;
    }
    if status != Status::Optimal {
        return Err(Failure { code: 1, error: anyhow::anyhow!("solver stopped with status {}", status_name(status)) });
    }
    Ok(())
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Optimal => "optimal",
        Status::Infeasible => "infeasible",
        Status::IterationLimit => "iteration-limit",
    }
}

fn cmd_validate(a: ValidateArgs) -> Outcome {
    let doc: SolutionDocument = read_json(&a.solution)?;
    let mut config = doc.config.clone();
    if let Some(c) = a.case.case {
        config.case = c;
    }
    config.line_derate = a.case.line_derate.unwrap_or(config.line_derate);
    config.load_scale = a.case.load_scale.unwrap_or(config.load_scale);
    config.deadband_mw = a.deadband.unwrap_or(config.deadband_mw);
    config.trigger = a.trigger.map(Into::into).unwrap_or(config.trigger);
    config.samples = Some(a.samples);
    config.seed = Some(a.seed);
    config.truncate_negative = a.truncate;
    config.outputs.report = a.out.clone();

    let case = load_case(&config.case, config.line_derate, config.load_scale)?;
    let hash = case.content_hash();
    if hash != doc.case_hash {
        return Err(ccpfr::Error::CaseMismatch { expected: doc.case_hash, found: hash }.into());
    }
    if doc.solution.status != Status::Optimal {
        bail_code(1, format!("{} holds a non-optimal solution", a.solution.display()))?;
    }
    let ptdf = build_ptdf(&case)?;
    let droops = DroopSet::from_case(&case)?;
    let wind = WindStatistics::from_case(&case);
    let deadband = Deadband::with_trigger(config.deadband_mw, config.trigger)?;
    let scenarios = sample_wind(&wind, a.samples, a.seed)?;
    let options = ValidateOptions { truncate_negative: a.truncate };
    let report = validate(&doc.solution, &case, &ptdf, &droops, &deadband, &scenarios, options)?;
    println!(
        "{} samples {} seed {} cost mean {:.4} std {:.4} generator rate {} line rate {} system rate {}",
        doc.solution.formulation.name(),
        report.n,
        report.seed,
        report.cost_mean,
        report.cost_std,
        report.generator_rate,
        report.line_rate,
        report.system_wide_rate
    );
    let out = ReportDocument { config, case_hash: hash, solve_seconds: doc.solve_seconds, solution: doc.solution, report };
    if let Some(path) = &a.out {
        write_json(path, &out)?;
    }
    Ok(())
}

fn bail_code(code: u8, message: String) -> Outcome {
    Err(Failure { code, error: anyhow::anyhow!(message) })
}

fn cmd_compare(a: CompareArgs) -> Outcome {
    let docs = a.reports.iter().map(|p| read_json::<ReportDocument>(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let labels: Vec<String> = match a.labels {
        Some(l) if l.len() == docs.len() => l,
        Some(l) => return bail_code(2, format!("{} labels for {} reports", l.len(), docs.len())),
        None => docs.iter().map(|d| d.solution.formulation.name().to_string()).collect(),
    };
    let entries: Vec<ComparisonEntry<'_>> = docs
        .iter()
        .zip(&labels)
        .map(|(d, label)| ComparisonEntry {
            label,
            solution: &d.solution,
            report: &d.report,
            solve_seconds: Some(d.solve_seconds),
        })
        .collect();
    let table = compare(&entries)?;
    let csv = table.to_csv(!a.omit_timing);
    match &a.out {
        Some(path) => std::fs::write(path, &csv).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{csv}"),
    }
    if let Some(path) = &a.plot {
        std::fs::write(path, table.plot_csv()).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Outcome {
    let value: serde_json::Value = read_json(&a.document)?;
    let is_report = value.get("report").is_some();
    let (config, solution): (RunConfig, _) = if is_report {
        let d: ReportDocument = serde_json::from_value(value.clone()).context("not a report document")?;
        (d.config, d.solution)
    } else {
        let d: SolutionDocument = serde_json::from_value(value.clone()).context("not a solution document")?;
        (d.config, d.solution)
    };
    println!("case        {}", config.case.display());
    println!("modifiers   derate {} load scale {}", config.line_derate, config.load_scale);
    println!("formulation {}", solution.formulation.name());
    if let Some(e) = solution.epsilon {
        println!("epsilon     {e}");
    }
    println!("status      {}", status_name(solution.status));
    println!("objective   {:.4}", solution.objective);
    println!("iterations  {}", solution.iterations);
    if !solution.constraints.is_empty() {
        let worst = solution.constraints.iter().max_by(|a, b| a.value.total_cmp(&b.value));
        if let Some(w) = worst {
            println!("tightest    {} = {:.3e}", w.label, w.value);
        }
        println!("cuts        {}", solution.cuts.len());
    }
    if is_report {
        let d: ReportDocument = serde_json::from_value(value).context("not a report document")?;
        let r = d.report;
        println!("samples     {} (seed {})", r.n, r.seed);
        println!("cost        mean {:.4} std {:.4}", r.cost_mean, r.cost_std);
        println!("violations  generators {} lines {} any {}", r.generator_rate, r.line_rate, r.system_wide_rate);
        println!("worst       {}", r.max_individual_rate());
    }
    Ok(())
}
