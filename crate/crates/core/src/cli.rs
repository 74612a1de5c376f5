//! `dcsim run|verify|oracle` implementation.
//!
//! Exit codes: 0 ok, 1 verification or oracle mismatch, 2 usage or scenario
//! error, 3 internal invariant breach.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::kernel::SimError;
use crate::oracle;
use crate::report::{render_csv, render_table, RunReport};
use crate::scenario::{load_scenario, Expectations, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISMATCH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Seconds a verified time may differ from its expectation.
pub const TIME_TOLERANCE: f64 = 1e-6;
/// Money a verified debt may differ from its expectation.
pub const DEBT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Parser)]
#[command(
    name = "dcsim",
    version,
    about = "Deterministic IaaS datacenter simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run a scenario and print its report
    Run(CommonArgs),
    /// Run a scenario and compare it against its expectations section
    Verify(CommonArgs),
    /// Cross-check event-driven finish times against a fixed-step integrator
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    pub scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print every delivered event to stderr
    #[arg(long)]
    pub trace: bool,
    /// Oracle step size in seconds
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Verify,
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliOptions {
    pub command: Command,
    pub scenario_path: PathBuf,
    pub output_format: OutputFormat,
    pub output_path: Option<PathBuf>,
    pub trace: bool,
    pub oracle_dt: f64,
}

impl CliOptions {
    pub fn new(command: Command, scenario_path: impl Into<PathBuf>) -> Self {
        CliOptions {
            command,
            scenario_path: scenario_path.into(),
            output_format: OutputFormat::Table,
            output_path: None,
            trace: false,
            oracle_dt: 0.01,
        }
    }
}

impl From<Cli> for CliOptions {
    fn from(cli: Cli) -> Self {
        let (command, args) = match cli.command {
            CliCommand::Run(a) => (Command::Run, a),
            CliCommand::Verify(a) => (Command::Verify, a),
            CliCommand::Oracle(a) => (Command::Oracle, a),
        };
        CliOptions {
            command,
            scenario_path: args.scenario,
            output_format: args.format,
            output_path: args.out,
            trace: args.trace,
            oracle_dt: args.dt,
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl fmt::Display) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::InvariantBreach { .. } => EXIT_INTERNAL,
            SimError::NoUsers
            | SimError::NoDatacenter
            | SimError::Broker(_)
            | SimError::Infrastructure(_) => EXIT_USAGE,
            _ => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Runs one command, writing results to `stdout` (or `--out`) and
/// diagnostics to `stderr`. Returns the process exit code.
pub fn execute(opts: &CliOptions, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match opts.command {
        Command::Run => cmd_run(opts, stdout),
        Command::Verify => cmd_verify(opts, stdout),
        Command::Oracle => cmd_oracle(opts, stdout),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

fn load(opts: &CliOptions) -> Result<Scenario, Failure> {
    load_scenario(&opts.scenario_path).map_err(Failure::usage)
}

fn simulate(scenario: &Scenario, trace: bool) -> Result<RunReport, Failure> {
    let mut kernel = scenario.build_kernel()?;
    if trace {
        kernel.set_trace_sink(Box::new(std::io::stderr()));
    }
    Ok(kernel.run()?)
}

fn emit(opts: &CliOptions, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match &opts.output_path {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
        }
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::usage(format!("stdout: {e}"))),
    }
}

fn render(report: &RunReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Table => render_table(report),
        OutputFormat::Csv => render_csv(report),
    }
}

fn cmd_run(opts: &CliOptions, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = load(opts)?;
    let report = simulate(&scenario, opts.trace)?;
    emit(opts, &render(&report, opts.output_format), stdout)?;
    Ok(EXIT_OK)
}

fn cmd_verify(opts: &CliOptions, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let scenario = load(opts)?;
    let expectations = scenario.expectations.clone().ok_or_else(|| {
        Failure::usage(format!(
            "{}: no expectations section to verify against",
            opts.scenario_path.display()
        ))
    })?;
    let report = simulate(&scenario, opts.trace)?;
    let mismatches = verify_report(&report, &expectations);
    let mut text = String::new();
    if mismatches.is_empty() {
        text.push_str(&format!(
            "OK: {} rows and {} debts match\n",
            expectations.rows.len(),
            expectations.debts.len()
        ));
    } else {
        for m in &mismatches {
            text.push_str(&format!("MISMATCH {m}\n"));
        }
    }
    emit(opts, &text, stdout)?;
    Ok(if mismatches.is_empty() {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    })
}

fn time_matches(expected: Option<f64>, actual: Option<f64>) -> bool {
    match (expected, actual) {
        (None, _) => true,
        (Some(e), Some(a)) => (e - a).abs() <= TIME_TOLERANCE,
        (Some(_), None) => false,
    }
}

fn show(value: Option<f64>) -> String {
    value.map_or_else(|| "none".into(), |v| v.to_string())
}

/// Lists every cell where the report departs from the expectations.
/// Optional expectation fields that are left out are not checked.
pub fn verify_report(report: &RunReport, expected: &Expectations) -> Vec<String> {
    let mut out = Vec::new();
    if report.rows.len() != expected.rows.len() {
        out.push(format!(
            "row count: expected {}, got {}",
            expected.rows.len(),
            report.rows.len()
        ));
    }
    for (i, (want, got)) in expected.rows.iter().zip(&report.rows).enumerate() {
        let cell = |name: &str| format!("row {i} (cloudlet {}) {name}", want.cloudlet_id);
        if want.cloudlet_id != got.cloudlet_id {
            out.push(format!(
                "row {i} cloudlet_id: expected {}, got {}",
                want.cloudlet_id, got.cloudlet_id
            ));
            continue;
        }
        if want.status != got.status {
            out.push(format!(
                "{}: expected {}, got {}",
                cell("status"),
                want.status,
                got.status
            ));
        }
        if want.datacenter_id.is_some() && want.datacenter_id != got.datacenter_id.map(|d| d.0) {
            out.push(format!(
                "{}: expected {:?}, got {:?}",
                cell("datacenter_id"),
                want.datacenter_id,
                got.datacenter_id.map(|d| d.0)
            ));
        }
        if want.vm_id.is_some() && want.vm_id != got.vm_id {
            out.push(format!(
                "{}: expected {:?}, got {:?}",
                cell("vm_id"),
                want.vm_id,
                got.vm_id
            ));
        }
        for (name, e, a) in [
            ("time", want.time, got.time),
            ("start_time", want.start_time, got.start_time),
            ("finish_time", want.finish_time, got.finish_time),
        ] {
            if !time_matches(e, a) {
                out.push(format!(
                    "{}: expected {}, got {}",
                    cell(name),
                    show(e),
                    show(a)
                ));
            }
        }
    }
    for want in &expected.debts {
        let actual = report
            .debts
            .iter()
            .find(|d| d.name == want.datacenter)
            .and_then(|d| d.ledger.debt(crate::kernel::EntityId(want.user_id)));
        match actual {
            Some(a) if (a - want.debt).abs() <= DEBT_TOLERANCE => {}
            other => out.push(format!(
                "debt {} user {}: expected {}, got {}",
                want.datacenter,
                want.user_id,
                want.debt,
                show(other)
            )),
        }
    }
    out
}

fn cmd_oracle(opts: &CliOptions, stdout: &mut dyn Write) -> Result<i32, Failure> {
    if !(opts.oracle_dt.is_finite() && opts.oracle_dt > 0.0) {
        return Err(Failure::usage(format!(
            "--dt must be a positive number of seconds, got {}",
            opts.oracle_dt
        )));
    }
    let scenario = load(opts)?;
    let report = simulate(&scenario, opts.trace)?;
    let integrated = oracle::integrate(&scenario, opts.oracle_dt).map_err(|e| Failure {
        code: EXIT_INTERNAL,
        message: e.to_string(),
    })?;
    let divergences = oracle::compare(&report, &integrated, opts.oracle_dt);

    let mut text = String::new();
    for row in &report.rows {
        if let (Some(finish), Some(t)) =
            (row.finish_time, integrated.finished.get(&row.cloudlet_id))
        {
            text.push_str(&format!(
                "cloudlet {}: event {} oracle {} delta {:+e}\n",
                row.cloudlet_id,
                finish,
                t.finish,
                finish - t.finish
            ));
        }
    }
    if divergences.is_empty() {
        text.push_str(&format!("OK: agreement within {} s\n", opts.oracle_dt));
    } else {
        for d in &divergences {
            text.push_str(&format!(
                "DIVERGENCE cloudlet {}: {}\n",
                d.cloudlet_id, d.detail
            ));
        }
    }
    emit(opts, &text, stdout)?;
    Ok(if divergences.is_empty() {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    })
}
