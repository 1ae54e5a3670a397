//! `subchain`: preimage solvers, Clarke subdifferential oracles and seeded
//! certificates for factorization maps, one operation per invocation.
//!
//! Exit codes: 0 on success, 1 when a check fails or a certificate is not
//! confirmed, 2 on usage, input or schema errors.

mod commands;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use subchain_core::Error;

#[derive(Parser, Debug)]
#[command(name = "subchain", version, about = "Preimage solvers, Clarke subdifferential oracles and certificates for factorization maps")]
struct Cli {
    /// Master seed for every random sub-stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a map at a point.
    Eval(EvalArgs),
    /// Compare Jacobian products with central differences.
    JacobianCheck(JacobianArgs),
    /// Constructive preimage of a target near a base point.
    Preimage(PreimageArgs),
    /// Chain-rule upper set of a separable loss composed with a map.
    Chainrule(ChainruleArgs),
    /// Clarke subdifferential of the FM training loss on a qualified dataset.
    SubdiffFm(SubdiffFmArgs),
    /// Clarke subdifferential of a GMF training objective.
    SubdiffGmf(SubdiffGmfArgs),
    /// Check that no two samples share more than one feature.
    Qualify(QualifyArgs),
    /// Run a named certificate.
    Certify(CertifyArgs),
    /// Success rate of reaching targets from the origin across latent dimensions.
    PhaseSweep(PhaseSweepArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub map: String,
    /// Point JSON for the map.
    #[arg(long)]
    pub point: PathBuf,
}

#[derive(Args, Debug)]
pub struct JacobianArgs {
    #[arg(long)]
    pub map: String,
    /// Fixed point; random instances are drawn when absent.
    #[arg(long)]
    pub point: Option<PathBuf>,
    /// Number of point/direction pairs.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
}

#[derive(Args, Debug)]
pub struct PreimageArgs {
    /// One of mf, fm, cp, cpdagger.
    #[arg(long)]
    pub map: String,
    #[arg(long)]
    pub target: PathBuf,
    /// Base point; MF and CP solve at the origin when absent.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Latent dimension for origin solves.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub t: f64,
    #[arg(long, default_value = "strict")]
    pub mode: String,
}

#[derive(Args, Debug)]
pub struct ChainruleArgs {
    #[arg(long)]
    pub map: String,
    /// Point JSON; a random instance is drawn when absent.
    #[arg(long)]
    pub point: Option<PathBuf>,
    #[arg(long)]
    pub loss: String,
    /// Loss target, label or shift; the catalog default when absent.
    #[arg(long)]
    pub loss_param: Option<f64>,
    /// Radius of the ball in which gradients are sampled.
    #[arg(long, default_value_t = 1e-3)]
    pub radius: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Args, Debug)]
pub struct SubdiffFmArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Factor matrix `P` as `{rows, cols, data}`.
    #[arg(long)]
    pub params: PathBuf,
    /// Each sample's label is the loss parameter, except for shifted_relu.
    #[arg(long)]
    pub loss: String,
    #[arg(long)]
    pub loss_param: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SubdiffGmfArgs {
    /// `{v, h, p, q}` with optional 1-based `pairs` and per-pair `targets`.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, default_value = "square")]
    pub loss: String,
    #[arg(long)]
    pub loss_param: Option<f64>,
    #[arg(long, default_value = "shifted_relu")]
    pub activation: String,
    #[arg(long)]
    pub activation_param: Option<f64>,
}

#[derive(Args, Debug)]
pub struct QualifyArgs {
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    #[arg(long = "case")]
    pub case_id: String,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub d0: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// FM coefficients as pair-vector JSON.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PhaseSweepArgs {
    /// mf or fm.
    #[arg(long)]
    pub map: String,
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d0: usize,
    /// Latent dimensions, comma separated; defaults to the threshold and one below.
    #[arg(long, value_delimiter = ',')]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub restarts: usize,
}

/// What a command produced: its result, whether its check passed, and the
/// tolerances it used.
pub struct Outcome {
    pub result: Value,
    pub passed: bool,
    pub tolerances: Value,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Admissibility { .. }
        | Error::Dimension(_)
        | Error::Qualification(_)
        | Error::Inapplicable(_)
        | Error::DegenerateSampling { .. } => 1,
        _ => 2,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("SUBCHAIN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("SUBCHAIN_THREADS must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err("SUBCHAIN_THREADS must be positive".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

/// Writes via a sibling temporary file and a rename.
fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp)?;
    file.write_all(text.as_bytes())?;
    file.sync_all()?;
    std::fs::rename(&tmp, path)
}

fn diagnostic(kind: &str, message: &str) {
    eprintln!("{}", json!({"error": kind, "message": message}));
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        diagnostic("usage", &msg);
        return ExitCode::from(2);
    }
    let seed = cli.seed;
    let (name, outcome) = match &cli.command {
        Command::Eval(a) => ("eval", commands::eval(a)),
        Command::JacobianCheck(a) => ("jacobian-check", commands::jacobian_check(a, seed)),
        Command::Preimage(a) => ("preimage", commands::preimage(a)),
        Command::Chainrule(a) => ("chainrule", commands::chainrule(a, seed)),
        Command::SubdiffFm(a) => ("subdiff-fm", commands::subdiff_fm(a)),
        Command::SubdiffGmf(a) => ("subdiff-gmf", commands::subdiff_gmf(a)),
        Command::Qualify(a) => ("qualify", commands::qualify(a)),
        Command::Certify(a) => ("certify", commands::certify(a, seed)),
        Command::PhaseSweep(a) => ("phase-sweep", commands::phase_sweep(a, seed)),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            diagnostic(e.kind(), &e.to_string());
            return ExitCode::from(exit_code(&e));
        }
    };
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let report = json!({
        "tool": "subchain",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "argv": argv,
        "seed": seed,
        "tolerances": outcome.tolerances,
        "passed": outcome.passed,
        "result": outcome.result,
        "timestamp": timestamp,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &cli.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, &text) {
                diagnostic("io", &format!("{}: {e}", path.display()));
                return ExitCode::from(2);
            }
        }
        None => print!("{text}"),
    }
    ExitCode::from(if outcome.passed { 0 } else { 1 })
}
