//! Command-line front end: problem ingestion, the exact-search solver, Bell
//! inequality evaluation, boundary curves, noise thresholds, and protocol
//! simulation, with CSV or JSON emission.
//!
//! Exit codes: 0 success, 1 computational guard or numerical failure,
//! 2 input error.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use commbell::bell::{
    self, asymptotic_phm, noise_threshold, phm_crossover, vsp_curves, AsymptoticConstants,
    BellReport, Inequality, RhsSource,
};
use commbell::classical_cc::{self, CcError};
use commbell::correlations::{check_nonsignaling, summarize, CorrelationBox, LhvError};
use commbell::problems::CommProblem;
use commbell::protocol_sim;
use commbell::quantum::{box_from_protocol, QState, QuantumProtocol};

#[derive(Parser)]
#[command(
    name = "commbell",
    version,
    about = "One-way communication complexity and nonlinear Bell inequalities",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact one-way success table of a problem, one row per bit budget.
    Cc(CcArgs),
    /// Evaluate a Bell inequality on a correlation box.
    Bell(BellArgs),
    /// Boundary curves of an asymptotic family.
    Curves(CurvesArgs),
    /// Isotropic-noise robustness threshold of a protocol.
    Noise(NoiseArgs),
    /// Compile a box into the indexing protocol and validate it by
    /// Monte Carlo.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format.
    #[arg(long)]
    format: Option<Format>,
}

#[derive(Args)]
struct CcArgs {
    /// Problem JSON file.
    #[arg(long, conflicts_with = "builtin")]
    input: Option<PathBuf>,
    /// Built-in problem name (rac).
    #[arg(long)]
    builtin: Option<String>,
    /// Largest message budget to tabulate.
    #[arg(long, default_value_t = 2)]
    max_bits: u32,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct BellArgs {
    /// Box JSON file (requires --problem).
    #[arg(long, conflicts_with = "builtin")]
    input: Option<PathBuf>,
    /// Problem JSON file for --input boxes.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Built-in protocol/problem pair (rac).
    #[arg(long)]
    builtin: Option<String>,
    /// Shared state for built-in protocols: phiplus, werner:P, iso:P.
    #[arg(long, default_value = "phiplus")]
    state: String,
    /// Which inequality to evaluate.
    #[arg(long, value_enum)]
    inequality: InequalityKind,
    /// Comma-separated delta grid override.
    #[arg(long)]
    delta_grid: Option<String>,
    /// Right-hand side: exact, pumped:C, or vsp.
    #[arg(long, default_value = "exact")]
    rhs: String,
    /// Cube-root scale constant for the vsp right-hand side.
    #[arg(long, default_value_t = 1.0)]
    const_c: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum InequalityKind {
    Rac,
    Theorem1,
}

#[derive(Args)]
struct CurvesArgs {
    /// Family: vsp or phm.
    #[arg(long)]
    family: Family,
    /// Problem size.
    #[arg(long)]
    n: u64,
    /// Number of grid points.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    const_c: f64,
    #[arg(long, default_value_t = 1.0)]
    const_cp: f64,
    #[arg(long, default_value_t = 1.0)]
    const_cpp: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Delta for the phm rows.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Family {
    Vsp,
    Phm,
}

#[derive(Args)]
struct NoiseArgs {
    /// Built-in protocol (rac).
    #[arg(long, default_value = "rac")]
    builtin: String,
    #[arg(long, value_enum)]
    inequality: InequalityKind,
    /// Bisection tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    delta_grid: Option<String>,
    #[arg(long, default_value = "exact")]
    rhs: String,
    #[arg(long, default_value_t = 1.0)]
    const_c: f64,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Box JSON file (requires --problem).
    #[arg(long, conflicts_with = "builtin")]
    input: Option<PathBuf>,
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Built-in protocol/problem pair (rac).
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long, default_value = "phiplus")]
    state: String,
    /// Abort exponent; the protocol targets abort probability 2^-k.
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// RNG seed (default 0; identical seeds reproduce byte-identical
    /// output).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

enum CliError {
    /// Exit code 2.
    Input(String),
    /// Exit code 1.
    Guard(String),
}

impl CliError {
    fn input(e: impl ToString) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<CcError> for CliError {
    fn from(e: CcError) -> Self {
        match e {
            CcError::SearchGuard { .. } => CliError::Guard(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<bell::BellError> for CliError {
    fn from(e: bell::BellError) -> Self {
        match e {
            bell::BellError::Cc(CcError::SearchGuard { .. }) => CliError::Guard(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<LhvError> for CliError {
    fn from(e: LhvError) -> Self {
        match e {
            LhvError::Guard { .. } | LhvError::Numerical(_) => CliError::Guard(e.to_string()),
            LhvError::Box(b) => CliError::Input(b.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cc(args) => cmd_cc(args),
        Command::Bell(args) => cmd_bell(args),
        Command::Curves(args) => cmd_curves(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Guard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn emit(
    out: &OutputArgs,
    default_format: Format,
    csv: String,
    json: String,
) -> Result<(), CliError> {
    let format = out.format.unwrap_or(default_format);
    let body = match format {
        Format::Csv => csv,
        Format::Json => json,
    };
    match &out.output {
        Some(path) => fs::write(path, body).map_err(CliError::input),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn load_problem(
    input: &Option<PathBuf>,
    builtin: &Option<String>,
) -> Result<CommProblem, CliError> {
    match (input, builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(CliError::input)?;
            CommProblem::from_json(&text).map_err(CliError::input)
        }
        (None, Some(name)) if name == "rac" => Ok(CommProblem::rac21()),
        (None, Some(name)) => Err(CliError::Input(format!("unknown builtin problem '{name}'"))),
        (None, None) => Err(CliError::Input(
            "one of --input or --builtin is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn parse_state(spec: &str, dim: usize) -> Result<QState, CliError> {
    let (kind, arg) = match spec.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (spec, None),
    };
    let weight = |a: Option<&str>| -> Result<f64, CliError> {
        a.ok_or_else(|| CliError::Input(format!("state '{spec}' needs a weight, e.g. werner:0.5")))?
            .parse::<f64>()
            .map_err(CliError::input)
    };
    match kind {
        "phiplus" => QState::phi_plus(dim).map_err(CliError::input),
        "werner" => {
            if dim != 2 {
                return Err(CliError::Input("werner states are two-qubit".into()));
            }
            QState::werner(weight(arg)?).map_err(CliError::input)
        }
        "iso" => QState::isotropic(dim, weight(arg)?).map_err(CliError::input),
        _ => Err(CliError::Input(format!(
            "unknown state '{spec}' (expected phiplus, werner:<p>, iso:<p>)"
        ))),
    }
}

fn parse_delta_grid(spec: &Option<String>) -> Result<Vec<f64>, CliError> {
    match spec {
        None => Ok(bell::default_delta_grid()),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(CliError::input))
            .collect(),
    }
}

fn parse_rhs(spec: &str, const_c: f64) -> Result<RhsSource, CliError> {
    if spec == "exact" {
        return Ok(RhsSource::ExactSearch);
    }
    if spec == "vsp" {
        return Ok(RhsSource::VspBound {
            constants: AsymptoticConstants {
                c: const_c,
                ..AsymptoticConstants::default()
            },
        });
    }
    if let Some(value) = spec.strip_prefix("pumped:") {
        let c_two_thirds = value.parse::<f64>().map_err(CliError::input)?;
        return Ok(RhsSource::PumpedBound { c_two_thirds });
    }
    Err(CliError::Input(format!(
        "unknown rhs '{spec}' (expected exact, pumped:<C>, or vsp)"
    )))
}

/// Resolve a (box, problem) pair from a file or the built-in protocol.
fn load_box(
    input: &Option<PathBuf>,
    problem: &Option<PathBuf>,
    builtin: &Option<String>,
    state: &str,
) -> Result<(CorrelationBox, CommProblem), CliError> {
    match (input, builtin) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(CliError::input)?;
            let bx = CorrelationBox::from_json(&text).map_err(CliError::input)?;
            let problem_path = problem
                .as_ref()
                .ok_or_else(|| CliError::Input("--input boxes need --problem".into()))?;
            let ptext = fs::read_to_string(problem_path).map_err(CliError::input)?;
            let problem = CommProblem::from_json(&ptext).map_err(CliError::input)?;
            Ok((bx, problem))
        }
        (None, Some(name)) if name == "rac" => {
            let protocol = QuantumProtocol::rac();
            let problem = CommProblem::rac21();
            let shared = parse_state(state, protocol.dim())?;
            let bx = box_from_protocol(&protocol, &shared, &problem).map_err(CliError::input)?;
            Ok((bx, problem))
        }
        (None, Some(name)) => Err(CliError::Input(format!("unknown builtin '{name}'"))),
        (None, None) => Err(CliError::Input(
            "one of --input or --builtin is required".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

fn cmd_cc(args: CcArgs) -> Result<(), CliError> {
    let problem = load_problem(&args.input, &args.builtin)?;
    let curve = classical_cc::curve(&problem, args.max_bits)?;

    let mut csv = String::from("bits,optimal_success\n");
    for (bits, value) in curve.points.iter().enumerate() {
        writeln!(csv, "{bits},{value}").expect("string write");
    }
    #[derive(Serialize)]
    struct CcOut<'a> {
        problem_id: &'a str,
        points: Vec<CcRow>,
    }
    #[derive(Serialize)]
    struct CcRow {
        bits: u32,
        optimal_success: f64,
    }
    let json_doc = CcOut {
        problem_id: &curve.problem_id,
        points: curve
            .points
            .iter()
            .enumerate()
            .map(|(bits, &optimal_success)| CcRow {
                bits: bits as u32,
                optimal_success,
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&json_doc).expect("serialize") + "\n";
    emit(&args.out, Format::Csv, csv, json)
}

#[derive(Serialize)]
struct BellOut {
    #[serde(skip_serializing_if = "Option::is_none")]
    nonsignaling_warning: Option<bool>,
    #[serde(flatten)]
    report: BellReport,
}

fn cmd_bell(args: BellArgs) -> Result<(), CliError> {
    let (bx, problem) = load_box(&args.input, &args.problem, &args.builtin, &args.state)?;
    let ns = check_nonsignaling(&bx, 1e-10);
    if !ns.pass {
        eprintln!(
            "warning: box fails the non-signaling check (max marginal deviation {:.3e}); evaluating anyway",
            ns.max_dev_alice.max(ns.max_dev_bob)
        );
    }
    match args.inequality {
        InequalityKind::Rac => {
            let rep = bell::rac_inequality(&bx)?;
            let csv = format!(
                "value,bound,violated\n{},{},{}\n",
                rep.value, rep.bound, rep.violated
            );
            let json = serde_json::to_string_pretty(&rep).expect("serialize") + "\n";
            emit(&args.out, Format::Json, csv, json)
        }
        InequalityKind::Theorem1 => {
            let grid = parse_delta_grid(&args.delta_grid)?;
            let source = parse_rhs(&args.rhs, args.const_c)?;
            let summary = summarize(&bx, &problem).map_err(CliError::input)?;
            let report = bell::evaluate(&summary, &problem, &grid, &source)?;
            let mut csv = String::from("delta,target_success,lhs,rhs,gap\n");
            for row in &report.per_delta {
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    row.delta,
                    row.target_success,
                    row.lhs,
                    row.rhs.map_or("unattainable".into(), |v| v.to_string()),
                    row.gap.map_or("".into(), |v| v.to_string()),
                )
                .expect("string write");
            }
            let out = BellOut {
                nonsignaling_warning: if ns.pass { None } else { Some(true) },
                report,
            };
            let json = serde_json::to_string_pretty(&out).expect("serialize") + "\n";
            emit(&args.out, Format::Json, csv, json)
        }
    }
}

fn cmd_curves(args: CurvesArgs) -> Result<(), CliError> {
    let constants = AsymptoticConstants {
        c: args.const_c,
        c_prime: args.const_cp,
        c_double_prime: args.const_cpp,
        alpha: args.alpha,
    };
    if args.points < 2 {
        return Err(CliError::Input("--points must be at least 2".into()));
    }
    match args.family {
        Family::Vsp => {
            let grid: Vec<f64> = (0..args.points)
                .map(|i| 0.5 + 0.5 * i as f64 / (args.points - 1) as f64)
                .collect();
            let rows = vsp_curves(args.n, &constants, &grid)?;
            let mut csv = String::from("p_b,cc_bound,boundary\n");
            for r in &rows {
                writeln!(csv, "{},{},{}", r.p_b, r.cc_bound, r.boundary).expect("string write");
            }
            #[derive(Serialize)]
            struct VspOut<'a> {
                family: &'a str,
                n: u64,
                constants: &'a AsymptoticConstants,
                regions: Regions<'a>,
                rows: &'a [bell::CurveRow],
            }
            #[derive(Serialize)]
            struct Regions<'a> {
                bell_detected: &'a str,
                undetected_advantage: &'a str,
                classical: &'a str,
            }
            let out = VspOut {
                family: "vsp",
                n: args.n,
                constants: &constants,
                regions: Regions {
                    bell_detected: "log2(1/p_A) below the boundary curve",
                    undetected_advantage: "between the boundary and cc_bound curves",
                    classical: "at or above the cc_bound curve",
                },
                rows: &rows,
            };
            let json = serde_json::to_string_pretty(&out).expect("serialize") + "\n";
            emit(&args.out, Format::Csv, csv, json)
        }
        Family::Phm => {
            // log-spaced sizes from 2 to n
            let mut sizes = Vec::with_capacity(args.points);
            let ln_lo = 2f64.ln();
            let ln_hi = (args.n.max(3) as f64).ln();
            for i in 0..args.points {
                let t = i as f64 / (args.points - 1) as f64;
                let v = (ln_lo + t * (ln_hi - ln_lo)).exp().round() as u64;
                sizes.push(v.clamp(2, args.n.max(2)));
            }
            sizes.dedup();
            let mut rows = Vec::with_capacity(sizes.len());
            for &n in &sizes {
                let v = asymptotic_phm(n, args.delta, &constants)?;
                rows.push((n, v));
            }
            let crossover = phm_crossover(args.delta, &constants, args.n)?;
            let mut csv = String::from("n,lhs,rhs,violated\n");
            for (n, v) in &rows {
                writeln!(csv, "{},{},{},{}", n, v.lhs, v.rhs, v.violated).expect("string write");
            }
            #[derive(Serialize)]
            struct PhmRow {
                n: u64,
                lhs: f64,
                rhs: f64,
                violated: bool,
            }
            #[derive(Serialize)]
            struct PhmOut<'a> {
                family: &'a str,
                delta: f64,
                constants: &'a AsymptoticConstants,
                crossover_n: Option<u64>,
                rows: Vec<PhmRow>,
            }
            let out = PhmOut {
                family: "phm",
                delta: args.delta,
                constants: &constants,
                crossover_n: crossover,
                rows: rows
                    .into_iter()
                    .map(|(n, v)| PhmRow {
                        n,
                        lhs: v.lhs,
                        rhs: v.rhs,
                        violated: v.violated,
                    })
                    .collect(),
            };
            let json = serde_json::to_string_pretty(&out).expect("serialize") + "\n";
            emit(&args.out, Format::Csv, csv, json)
        }
    }
}

fn cmd_noise(args: NoiseArgs) -> Result<(), CliError> {
    if args.builtin != "rac" {
        return Err(CliError::Input(format!(
            "unknown builtin protocol '{}'",
            args.builtin
        )));
    }
    let protocol = QuantumProtocol::rac();
    let problem = CommProblem::rac21();
    let inequality = match args.inequality {
        InequalityKind::Rac => Inequality::Rac,
        InequalityKind::Theorem1 => Inequality::Theorem {
            delta_grid: parse_delta_grid(&args.delta_grid)?,
            source: parse_rhs(&args.rhs, args.const_c)?,
        },
    };
    let threshold = noise_threshold(&protocol, &problem, &inequality, args.tol)?;
    let kind = match args.inequality {
        InequalityKind::Rac => "rac",
        InequalityKind::Theorem1 => "theorem1",
    };
    #[derive(Serialize)]
    struct NoiseOut<'a> {
        inequality: &'a str,
        tol: f64,
        threshold: Option<f64>,
        verdict: &'a str,
    }
    let verdict = if threshold.is_some() {
        "threshold"
    } else {
        "none"
    };
    let csv = format!(
        "inequality,threshold,tol\n{},{},{}\n",
        kind,
        threshold.map_or("none".into(), |v| v.to_string()),
        args.tol
    );
    let out = NoiseOut {
        inequality: kind,
        tol: args.tol,
        threshold,
        verdict,
    };
    let json = serde_json::to_string_pretty(&out).expect("serialize") + "\n";
    emit(&args.out, Format::Json, csv, json)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (bx, problem) = load_box(&args.input, &args.problem, &args.builtin, &args.state)?;
    let compiled = protocol_sim::compile(&bx, &problem, args.k).map_err(CliError::input)?;
    let sim = compiled
        .simulate(args.trials, args.seed)
        .map_err(CliError::input)?;
    #[derive(Serialize)]
    struct SimOut {
        k: u32,
        delta: f64,
        copies: u64,
        message_bits: u32,
        ceiling_form_bits: f64,
        p_a: f64,
        p_b: f64,
        exact: f64,
        guaranteed: f64,
        empirical: f64,
        std_error: f64,
        trials: u64,
        seed: u64,
    }
    let out = SimOut {
        k: compiled.k(),
        delta: compiled.delta(),
        copies: compiled.copies(),
        message_bits: compiled.message_bits(),
        ceiling_form_bits: compiled.ceiling_form_bits(),
        p_a: compiled.summary().p_a,
        p_b: compiled.summary().p_b,
        exact: compiled.exact_success(),
        guaranteed: compiled.guaranteed_success(),
        empirical: sim.estimate,
        std_error: sim.std_error,
        trials: sim.trials,
        seed: args.seed,
    };
    let csv = format!(
        "k,delta,copies,message_bits,exact,guaranteed,empirical,std_error,trials,seed\n{},{},{},{},{},{},{},{},{},{}\n",
        out.k, out.delta, out.copies, out.message_bits, out.exact, out.guaranteed,
        out.empirical, out.std_error, out.trials, out.seed
    );
    let json = serde_json::to_string_pretty(&out).expect("serialize") + "\n";
    emit(&args.out, Format::Json, csv, json)
}
