//! Command-line surface binding the computational modules together.
//!
//! Exit codes: 0 on success (verdicts live in the report, never in the
//! exit code), 2 on input errors, 3 on internal errors. Every error
//! path prints a single diagnostic line prefixed `error[input]:` or
//! `error[internal]:` to stderr.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::classical::realize;
use crate::io::{
    parse_responses, render_report_text, to_json_pretty, write_responses, Envelope, RunManifest,
};
use crate::prob::{cond_bell_delta, ConditionalTriple};
use crate::protocol::{run_protocol_with_records, AgentModel, ProtocolResult};
use crate::quantum::{exact_conditional_triple, maximize_violation};
use crate::stats::{self, TestConfig, TestMethod};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "condbell",
    version,
    about = "Conditional-probability Bell test: exact models, protocol simulation and analysis"
)]
pub struct Cli {
    /// Output format for results printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Z,
    Chi2,
}

impl From<MethodArg> for TestMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Z => TestMethod::ZTest,
            MethodArg::Chi2 => TestMethod::Chi2Fit,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a model's exact conditional triple and delta.
    Exact {
        /// Agent model JSON (classical, quantum or table).
        #[arg(long)]
        model: PathBuf,
    },
    /// Simulate the splitting protocol over a model population.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Population size (even, at least 4).
        #[arg(long)]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Where the result JSON is written.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-subject CSV export.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Analyze a protocol result (JSON) or response file (CSV).
    Analyze {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Decide whether a conditional triple admits a classical joint.
    Realizable {
        /// Conditional triple JSON.
        #[arg(long)]
        triple: PathBuf,
    },
    /// Search for the directions maximizing the inequality violation.
    Maximize {
        /// Grid step in degrees, in (0, 30].
        #[arg(long, default_value_t = 1.0)]
        grid_step: f64,
        /// Refinement iterations after the grid pass.
        #[arg(long, default_value_t = 50)]
        refine: u32,
    },
    /// Per-branch sample size for a target delta.
    Power {
        #[arg(long)]
        target_delta: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 0.9)]
        power: f64,
    },
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Practical-significance threshold on delta.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Confidence level of the reported lower bound.
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Z)]
    pub method: MethodArg,
}

enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> Self {
        CliError::Input(e.to_string())
    }
    fn internal(e: impl std::fmt::Display) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(argv.iter().cloned()) {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage text; --help/--version are not errors.
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let command_line = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    match dispatch(cli, &command_line) {
        Ok(()) => EXIT_OK,
        Err(CliError::Input(msg)) => {
            eprintln!("error[input]: {msg}");
            EXIT_INPUT
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("error[internal]: {msg}");
            EXIT_INTERNAL
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>), CliError> {
    let bytes = read_file(path)?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((value, bytes))
}

fn emit<T: Serialize>(
    format: Format,
    envelope: &Envelope<T>,
    text: impl FnOnce(&T, &RunManifest) -> String,
) -> Result<(), CliError> {
    match format {
        Format::Json => {
            let doc = to_json_pretty(envelope).map_err(CliError::internal)?;
            print!("{doc}");
        }
        Format::Text => print!("{}", text(&envelope.result, &envelope.manifest)),
    }
    Ok(())
}

fn dispatch(cli: Cli, command_line: &str) -> Result<(), CliError> {
    match cli.command {
        Command::Exact { model } => cmd_exact(cli.format, &model, command_line),
        Command::Simulate {
            model,
            n,
            seed,
            out,
            csv,
        } => cmd_simulate(cli.format, &model, n, seed, &out, csv.as_deref(), command_line),
        Command::Analyze { data, test } => cmd_analyze(cli.format, &data, &test, command_line),
        Command::Realizable { triple } => cmd_realizable(cli.format, &triple, command_line),
        Command::Maximize { grid_step, refine } => {
            cmd_maximize(cli.format, grid_step, refine, command_line)
        }
        Command::Power {
            target_delta,
            alpha,
            power,
        } => cmd_power(cli.format, target_delta, alpha, power, command_line),
    }
}

#[derive(Debug, Serialize)]
struct ExactOutput {
    triple: ConditionalTriple,
    delta: f64,
    violated: bool,
    marginals: [f64; 3],
    homogeneous: bool,
}

fn cmd_exact(format: Format, model_path: &Path, command_line: &str) -> Result<(), CliError> {
    let (model, bytes): (AgentModel, _) = load_json(model_path)?;
    let (triple, marginals) = match &model {
        AgentModel::Classical { pmf } => (
            pmf.conditionals_from_joint().map_err(CliError::input)?,
            pmf.marginals().p_plus,
        ),
        AgentModel::Quantum { experiment } => (
            exact_conditional_triple(experiment).map_err(CliError::input)?,
            experiment.first_marginals(),
        ),
        AgentModel::Table { triple, marginals } => (*triple, marginals.p_plus),
    };
    let homogeneous = marginals.iter().all(|p| (p - 0.5).abs() <= crate::prob::DATA_TOL);
    let verdict = cond_bell_delta(&triple);

    let mut manifest = RunManifest::new(command_line.to_string(), json!({}), None);
    manifest.add_input(&model_path.display().to_string(), &bytes);
    let envelope = Envelope {
        manifest,
        result: ExactOutput {
            triple,
            delta: verdict.delta,
            violated: verdict.violated,
            marginals,
            homogeneous,
        },
    };
    emit(format, &envelope, |r, _| {
        let mut out = String::new();
        out.push_str(&format!(
            "P(a=+1|b=+1) = {:.6}\nP(c=+1|b=-1) = {:.6}\nP(a=+1|c=+1) = {:.6}\n",
            r.triple.p_a_given_b_plus, r.triple.p_c_given_b_minus, r.triple.p_a_given_c_plus
        ));
        out.push_str(&format!("delta = {:.6}\n", r.delta));
        if !r.homogeneous {
            out.push_str(&format!(
                "marginals = [{:.4}, {:.4}, {:.4}] are not all 1/2: the symmetric-marginal \
                 premise fails, so a positive delta does not certify quantum-like behaviour\n",
                r.marginals[0], r.marginals[1], r.marginals[2]
            ));
        }
        out.push_str(if r.violated {
            "inequality VIOLATED (delta > 0)\n"
        } else {
            "inequality holds (delta <= 0)\n"
        });
        out
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    format: Format,
    model_path: &Path,
    n: u64,
    seed: u64,
    out_path: &Path,
    csv_path: Option<&Path>,
    command_line: &str,
) -> Result<(), CliError> {
    let (model, bytes): (AgentModel, _) = load_json(model_path)?;
    let (result, records) =
        run_protocol_with_records(&model, n, seed).map_err(CliError::input)?;

    let mut manifest = RunManifest::new(
        command_line.to_string(),
        json!({"n": n, "seed": seed}),
        Some(seed),
    );
    manifest.add_input(&model_path.display().to_string(), &bytes);
    let envelope = Envelope {
        manifest,
        result: result.clone(),
    };
    let doc = to_json_pretty(&envelope).map_err(CliError::internal)?;
    fs::write(out_path, &doc)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", out_path.display())))?;

    if let Some(csv_path) = csv_path {
        let file = fs::File::create(csv_path)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", csv_path.display())))?;
        write_responses(&records, file).map_err(CliError::internal)?;
    }

    match format {
        Format::Json => print!("{doc}"),
        Format::Text => {
            println!(
                "simulated {} subjects (seed {seed}): U {}(+{}/-{}), V {}(+{}/-{}); wrote {}",
                result.n_total,
                result.n_u,
                result.u_b_plus,
                result.u_b_minus,
                result.n_v,
                result.v_c_plus,
                result.v_c_minus,
                out_path.display()
            );
        }
    }
    Ok(())
}

fn load_protocol_result(path: &Path) -> Result<(ProtocolResult, Vec<u8>), CliError> {
    let extension = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match extension.as_deref() {
        Some("csv") => {
            let bytes = read_file(path)?;
            let result = parse_responses(bytes.as_slice())
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            Ok((result, bytes))
        }
        Some("json") => {
            let bytes = read_file(path)?;
            // Accept both a bare result and the simulate envelope.
            let parsed: Result<Envelope<ProtocolResult>, _> = serde_json::from_slice(&bytes);
            let result = match parsed {
                Ok(envelope) => envelope.result,
                Err(_) => serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?,
            };
            Ok((result, bytes))
        }
        _ => Err(CliError::Input(format!(
            "{}: data file must end in .csv or .json",
            path.display()
        ))),
    }
}

fn cmd_analyze(
    format: Format,
    data_path: &Path,
    test: &TestArgs,
    command_line: &str,
) -> Result<(), CliError> {
    let config = TestConfig::new(test.delta, test.alpha, test.confidence, test.method.into())
        .map_err(CliError::input)?;
    let (result, bytes) = load_protocol_result(data_path)?;
    let report = stats::analyze(&result, &config).map_err(CliError::input)?;

    let mut manifest = RunManifest::new(
        command_line.to_string(),
        serde_json::to_value(config).map_err(CliError::internal)?,
        result.seed,
    );
    manifest.add_input(&data_path.display().to_string(), &bytes);
    let envelope = Envelope {
        manifest,
        result: report,
    };
    emit(format, &envelope, |report, manifest| {
        render_report_text(report, manifest)
    })
}

fn cmd_realizable(format: Format, triple_path: &Path, command_line: &str) -> Result<(), CliError> {
    let (triple, bytes): (ConditionalTriple, _) = load_json(triple_path)?;
    let verdict = realize(&triple);
    let mut manifest = RunManifest::new(command_line.to_string(), json!({}), None);
    manifest.add_input(&triple_path.display().to_string(), &bytes);
    let envelope = Envelope {
        manifest,
        result: verdict,
    };
    emit(format, &envelope, |verdict, _| {
        let mut out = String::new();
        if verdict.feasible {
            out.push_str("realizable: yes\n");
            if let Some(witness) = &verdict.witness {
                out.push_str(&format!("witness atoms: {:?}\n", witness.atoms()));
            }
        } else {
            out.push_str(&format!(
                "realizable: no (constraint gap {:.6}); the triple is quantum-like\n",
                verdict.max_violation
            ));
        }
        out
    })
}

fn cmd_maximize(
    format: Format,
    grid_step: f64,
    refine: u32,
    command_line: &str,
) -> Result<(), CliError> {
    let found = maximize_violation(grid_step, refine).map_err(CliError::input)?;
    let manifest = RunManifest::new(
        command_line.to_string(),
        json!({"grid_step": grid_step, "refine": refine}),
        None,
    );
    let envelope = Envelope {
        manifest,
        result: found,
    };
    emit(format, &envelope, |r, _| {
        format!(
            "delta_max = {:.9}\ntheta_a = {:.6} deg\ntheta_b = {:.6} deg\ntheta_c = {:.6} deg\n",
            r.delta_max,
            r.theta_a.degrees(),
            r.theta_b.degrees(),
            r.theta_c.degrees()
        )
    })
}

fn cmd_power(
    format: Format,
    target_delta: f64,
    alpha: f64,
    power: f64,
    command_line: &str,
) -> Result<(), CliError> {
    let config = TestConfig::new(0.0, alpha, 0.95, TestMethod::ZTest).map_err(CliError::input)?;
    let plan = stats::required_sample_size(target_delta, &config, power).map_err(CliError::input)?;
    let manifest = RunManifest::new(
        command_line.to_string(),
        json!({"target_delta": target_delta, "alpha": alpha, "power": power}),
        None,
    );
    let envelope = Envelope {
        manifest,
        result: plan,
    };
    emit(format, &envelope, |plan, _| {
        let mut out = format!(
            "n per branch = {} (planning triple ({:.4}, {:.4}, {:.4}))\n",
            plan.n_per_branch,
            plan.triple.p_a_given_b_plus,
            plan.triple.p_c_given_b_minus,
            plan.triple.p_a_given_c_plus
        );
        if plan.boundary_variance {
            out.push_str("warning: planning triple is at the boundary; variance degenerates\n");
        }
        if plan.degenerate_config {
            out.push_str("warning: alpha/power configuration is degenerate\n");
        }
        out
    })
}
