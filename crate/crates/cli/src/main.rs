//! Command-line front-end for the anti-collusion certification toolkit.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anticollusion::behaviors::{game_score, lhv_behavior, Behavior, GameKernel, LhvModel};
use anticollusion::exec::Execution;
use anticollusion::extlp::{collusive_vulnerability, verification_corpus, ExtensionClass, ExtensionProblem};
use anticollusion::finitedata::{
    estimate_correlators, lcb_from_estimate, lower_confidence_bound, simulate_trials, single_trial_lcb, TrialBatch,
    TrialSource, ASSUMPTIONS,
};
use anticollusion::frontier::{
    certify, classical_separation, gamma_plus, linspace, omega_from_s, quantum_separation, s13_max, werner_scan,
    CertificateRecord,
};
use anticollusion::npa::{alpha0_sanity_from_rows, assemble, scan, write_scan_csv, ScanRow, SolverSettings};
use anticollusion::qkernel::QuantumStrategy;
use anticollusion::{format_sig, Error, TSIRELSON, VERSION};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_INPUT: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;
const EXIT_SOLVER: u8 = 4;

/// Tolerances for the checks that decide the verification exit code.
const DISTANCE_TOL: f64 = 1e-6;
const WITNESS_TOL: f64 = 1e-9;
const SANITY_MAX_DEV: f64 = 1e-3;
const SANITY_FLOOR: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(name = "anticollusion", version, about = "Certify anti-collusion power of mediated Bell correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for tabular subcommands.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate the closed-form CHSH frontier.
    Frontier {
        #[arg(long, default_value_t = 0.0)]
        s_min: f64,
        #[arg(long, default_value_t = TSIRELSON)]
        s_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Certify an authorized score, a reported estimate or a trial file.
    Certify(CertifyArgs),
    /// Simulate Bell trials to a CSV file.
    Simulate {
        /// `bell`, `werner:ETA` or `lhv:FILE`.
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Scan the certified gap under Werner noise.
    Werner {
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Level-2 moment-relaxation bounds for tilted CHSH.
    NpaScan(NpaArgs),
    /// Compare capacity and shadow distance on random instances.
    VerifyDistance {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ClassArg::NoSignalling)]
        class: ClassArg,
    },
    /// Payoff separation between classical and quantum mediators.
    GameSeparation,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    /// Authorized CHSH score, treated as exact.
    #[arg(long)]
    s12: Option<f64>,
    /// Reported score estimate; requires --n-min.
    #[arg(long, requires = "n_min")]
    s_hat: Option<f64>,
    /// Samples in the least populated setting cell.
    #[arg(long)]
    n_min: Option<u64>,
    /// Trial file with header x,y,a,b.
    #[arg(long)]
    trials: Option<PathBuf>,
    /// Error probability of the confidence bound.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::CorrelatorWise)]
    estimator: EstimatorArg,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    CorrelatorWise,
    SingleTrial,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Classical,
    NoSignalling,
}

impl From<ClassArg> for ExtensionClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Classical => ExtensionClass::Classical,
            ClassArg::NoSignalling => ExtensionClass::NoSignalling,
        }
    }
}

#[derive(Args, Debug)]
struct NpaArgs {
    /// Comma-separated tilt values in [0, 2].
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 60)]
    grid: usize,
    #[arg(long, default_value_t = SolverSettings::default().abs_tol)]
    abs_tol: f64,
    #[arg(long, default_value_t = SolverSettings::default().rel_tol)]
    rel_tol: f64,
    #[arg(long, default_value_t = SolverSettings::default().max_iters)]
    max_iters: usize,
    /// Also write the problem description for the first grid point of each
    /// tilt as JSON.
    #[arg(long)]
    dump: Option<PathBuf>,
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Verification(String),
    Solver(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Lp(_) | Error::Sdp(_) => Failure::Solver(e.into()),
            other => Failure::Input(other.into()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn input_err(msg: impl Into<String>) -> Failure {
    Failure::Input(anyhow::anyhow!(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver failure: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let exec = if cli.common.sequential { Execution::Sequential } else { Execution::Parallel };
    let mut out = open_output(cli.common.out.as_deref())?;
    let format = cli.common.format;
    match cli.command {
        Command::Frontier { s_min, s_max, points } => cmd_frontier(&mut out, format, s_min, s_max, points)?,
        Command::Certify(args) => cmd_certify(&mut out, &args)?,
        Command::Simulate { strategy, n, seed } => cmd_simulate(&mut out, &strategy, n, seed)?,
        Command::Werner { points } => cmd_werner(&mut out, format, points)?,
        Command::NpaScan(args) => cmd_npa_scan(&mut out, format, &args, exec)?,
        Command::VerifyDistance { instances, seed, class } => {
            cmd_verify_distance(&mut out, instances, seed, class.into(), exec)?
        }
        Command::GameSeparation => cmd_game_separation(&mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| input_err(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_line(out: &mut dyn Write, values: &[f64]) -> io::Result<()> {
    let cells: Vec<String> = values.iter().map(|v| format_sig(*v, 9)).collect();
    writeln!(out, "{}", cells.join(","))
}

fn cmd_frontier(out: &mut dyn Write, format: Format, s_min: f64, s_max: f64, points: usize) -> CliResult {
    if !(0.0..=TSIRELSON).contains(&s_min) || !(0.0..=TSIRELSON).contains(&s_max) || s_min > s_max {
        return Err(input_err(format!("range [{s_min}, {s_max}] must lie within [0, 2√2] and be ordered")));
    }
    if points < 2 {
        return Err(input_err("need at least 2 points"));
    }
    let mut rows = Vec::with_capacity(points);
    for s in linspace(s_min, s_max, points) {
        let s13 = s13_max(s)?;
        rows.push([s, s13, omega_from_s(s)?, 0.5 + s13 / 8.0, gamma_plus(s)?]);
    }
    match format {
        Format::Csv => {
            writeln!(out, "s,s13_max,omega12,omega13_max,gamma_plus")?;
            for r in &rows {
                csv_line(out, r)?;
            }
        }
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|r| json!({"s": r[0], "s13_max": r[1], "omega12": r[2], "omega13_max": r[3], "gamma_plus": r[4]}))
                .collect();
            writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        }
    }
    Ok(())
}

fn analytic_json(cert: &CertificateRecord) -> CliResult<String> {
    let mut v = serde_json::to_value(cert)?;
    v["tool_version"] = json!(VERSION);
    v["assumptions"] = json!(ASSUMPTIONS);
    Ok(serde_json::to_string_pretty(&v)?)
}

fn read_trials(path: &Path) -> CliResult<TrialBatch> {
    let f = File::open(path).map_err(|e| input_err(format!("cannot open {}: {e}", path.display())))?;
    Ok(TrialBatch::read_csv(f, path.display().to_string())?)
}

fn cmd_certify(out: &mut dyn Write, a: &CertifyArgs) -> CliResult {
    let given = [a.s12.is_some(), a.s_hat.is_some(), a.trials.is_some()].iter().filter(|b| **b).count();
    if given != 1 {
        return Err(input_err("give exactly one of --s12, --s-hat (with --n-min) or --trials"));
    }
    let text = if let Some(s12) = a.s12 {
        analytic_json(&certify(s12)?)?
    } else if let Some(s_hat) = a.s_hat {
        let n_min = a.n_min.ok_or_else(|| input_err("--s-hat requires --n-min"))?;
        lcb_from_estimate(s_hat, n_min, a.alpha)?.to_json()?
    } else {
        let batch = read_trials(a.trials.as_deref().expect("one source given"))?;
        let cert = match a.estimator {
            EstimatorArg::CorrelatorWise => lower_confidence_bound(&estimate_correlators(&batch)?, a.alpha)?,
            EstimatorArg::SingleTrial => single_trial_lcb(&batch, a.alpha)?,
        };
        cert.to_json()?
    };
    writeln!(out, "{text}")?;
    Ok(())
}

fn parse_strategy(strategy: &str) -> CliResult<TrialSource> {
    if strategy == "bell" {
        return Ok(TrialSource::Quantum(QuantumStrategy::bell()));
    }
    if let Some(eta) = strategy.strip_prefix("werner:") {
        let eta: f64 = eta.parse().map_err(|_| input_err(format!("bad visibility in {strategy:?}")))?;
        return Ok(TrialSource::Quantum(QuantumStrategy::werner(eta)?));
    }
    if let Some(path) = strategy.strip_prefix("lhv:") {
        let text = std::fs::read_to_string(path).map_err(|e| input_err(format!("cannot read {path}: {e}")))?;
        // A hidden-variable model, or a behavior table to sample from directly.
        if let Ok(model) = serde_json::from_str::<LhvModel>(&text) {
            return Ok(TrialSource::Lhv(model));
        }
        let b: Behavior = serde_json::from_str(&text)
            .map_err(|e| input_err(format!("{path} is neither a model nor a behavior: {e}")))?;
        return Ok(TrialSource::Behavior(b));
    }
    Err(input_err(format!("unknown strategy {strategy:?}; expected bell, werner:ETA or lhv:FILE")))
}

fn cmd_simulate(out: &mut dyn Write, strategy: &str, n: usize, seed: u64) -> CliResult {
    let source = parse_strategy(strategy)?;
    simulate_trials(&source, n, seed)?.write_csv(out)?;
    Ok(())
}

fn cmd_werner(out: &mut dyn Write, format: Format, points: usize) -> CliResult {
    if points < 2 {
        return Err(input_err("need at least 2 points"));
    }
    let rows = werner_scan(&linspace(0.0, 1.0, points))?;
    match format {
        Format::Csv => {
            writeln!(out, "eta,s12,a12,c13_max_bound,gap")?;
            for r in &rows {
                csv_line(out, &[r.eta, r.s12, r.a12, r.c13_max_bound, r.gap])?;
            }
        }
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
    }
    Ok(())
}

fn cmd_npa_scan(out: &mut dyn Write, format: Format, a: &NpaArgs, exec: Execution) -> CliResult {
    if a.alphas.is_empty() {
        return Err(input_err("no tilt values given"));
    }
    let settings = SolverSettings { abs_tol: a.abs_tol, rel_tol: a.rel_tol, max_iters: a.max_iters };
    if let Some(path) = &a.dump {
        let dumps = a
            .alphas
            .iter()
            .map(|&alpha| Ok(assemble(alpha, 2.0 + alpha)?.dump()))
            .collect::<Result<Vec<_>, Error>>()?;
        let f = File::create(path).map_err(|e| input_err(format!("cannot create {}: {e}", path.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &dumps)?;
    }
    let rows = scan(&a.alphas, a.grid, &settings, exec)?;
    match format {
        Format::Csv => write_scan_csv(&rows, &mut *out)?,
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&rows)?)?,
    }
    let failed = rows.iter().filter(|r| !r.status.is_optimal_like()).count();
    eprintln!(
        "{} points, {} certified, {} solver failures",
        rows.len(),
        rows.iter().filter(|r| r.certified).count(),
        failed
    );
    let zero: Vec<ScanRow> = rows.iter().filter(|r| r.alpha == 0.0).cloned().collect();
    if !zero.is_empty() {
        let sanity = alpha0_sanity_from_rows(zero);
        eprintln!(
            "alpha=0 check: max deviation {:.3e}, mean deviation {:.3e}, {} of {} certified",
            sanity.max_dev,
            sanity.mean_dev,
            sanity.certified_mask.iter().filter(|c| **c).count(),
            sanity.certified_mask.len()
        );
        let below = sanity
            .rows
            .iter()
            .filter(|r| r.certified && r.primal < (8.0 - r.s * r.s).max(0.0).sqrt() - SANITY_FLOOR)
            .count();
        if sanity.max_dev > SANITY_MAX_DEV || below > 0 {
            out.flush()?;
            return Err(Failure::Verification(format!(
                "alpha=0 bounds deviate from the analytic curve (max {:.3e}, {below} below it)",
                sanity.max_dev
            )));
        }
    }
    Ok(())
}

fn cmd_verify_distance(
    out: &mut dyn Write,
    instances: usize,
    seed: u64,
    class: ExtensionClass,
    exec: Execution,
) -> CliResult {
    if instances == 0 {
        return Err(input_err("need at least one instance"));
    }
    let records = verification_corpus(instances, class, seed, exec)?;
    let chsh = GameKernel::chsh();
    let mut max_diff = 0.0f64;
    let mut witness_failures = 0;
    for (i, r) in records.iter().enumerate() {
        max_diff = max_diff.max(r.abs_diff);
        // Copied-seed witness: a classical colluder matches the authorized score.
        let witness = if class == ExtensionClass::Classical {
            let a12 = game_score(&r.behavior, &chsh)?;
            let v13 = collusive_vulnerability(&ExtensionProblem::new(r.behavior.clone(), class)?, &chsh)?;
            let holds = v13 >= a12 - WITNESS_TOL;
            if !holds {
                witness_failures += 1;
            }
            json!({"a12": a12, "v13": v13, "holds": holds})
        } else {
            serde_json::Value::Null
        };
        let line = json!({
            "instance": i,
            "class": r.class,
            "capacity": r.capacity,
            "distance": r.distance,
            "discrepancy": r.abs_diff,
            "copied_seed_witness": witness,
            "behavior": r.behavior,
        });
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    let summary = json!({
        "summary": true,
        "instances": instances,
        "class": class,
        "seed": seed,
        "max_discrepancy": max_diff,
        "witness_failures": witness_failures,
    });
    writeln!(out, "{}", serde_json::to_string(&summary)?)?;
    if max_diff >= DISTANCE_TOL || witness_failures > 0 {
        out.flush()?;
        return Err(Failure::Verification(format!(
            "max discrepancy {max_diff:.3e}, {witness_failures} witness failures"
        )));
    }
    Ok(())
}

fn cmd_game_separation(out: &mut dyn Write) -> CliResult {
    let best = LhvModel::best_chsh();
    let flat = LhvModel::uniform_output(2);
    let classical_best = classical_separation(&best)?;
    let classical_flat = classical_separation(&flat)?;
    let quantum = quantum_separation(&QuantumStrategy::bell())?;
    let report = json!({
        "classical": {
            "best_chsh": {
                "behavior": lhv_behavior(&best)?,
                "a12": classical_best.a12,
                "copied_seed_v13": classical_best.v13,
                "u1": classical_best.u1,
            },
            "uniform_output": {
                "a12": classical_flat.a12,
                "copied_seed_v13": classical_flat.v13,
                "u1": classical_flat.u1,
            },
        },
        "quantum": {
            "strategy": "bell",
            "a12": quantum.a12,
            "v13": quantum.v13,
            "u1": quantum.u1,
        },
        "tool_version": VERSION,
    });
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
