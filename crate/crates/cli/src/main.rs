//! `beamrep` command-line tool.
//!
//! Logs go to stderr; results are written only to the files named on the
//! command line. Exit status is 0 on success, 2 when an input is rejected
//! and 3 when a verification command finds a mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamrep::alloc::{optimize, Method};
use beamrep::oracle::{check_pairwise, check_two_candidate, check_waterfill, pairwise_grid, OracleReport};
use beamrep::prior::{read_training_csv, train_prior_model, PriorVector, Threshold, TrainConfig};
use beamrep::reference::{verify_table2, Table2Block, TABLE2_DEFAULT_SEED};
use beamrep::sim::{run_sweep, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "beamrep", version, about = "Prior-aware beam alignment planning and simulation")]
struct Cli {
    /// Random seed; overrides the seed stored in a scenario file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a location-to-prior classifier from a `scene_id,x,y,optimal_index` CSV.
    TrainPrior(TrainArgs),
    /// Choose candidate beams and repetitions for one prior.
    Optimize(OptimizeArgs),
    /// Run a scenario sweep.
    Simulate(SimulateArgs),
    /// Recompute the four-location reference table and compare.
    VerifyTable2(VerifyArgs),
    /// Cross-check the closed forms against simulation and enumeration.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    /// `auto` (one over the number of training scenes) or a probability.
    #[arg(long, default_value = "auto", value_parser = parse_threshold)]
    threshold: Threshold,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Codebook size; defaults to the largest beam index in the data.
    #[arg(long)]
    n_beams: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Algorithm1,
    Theorem1,
    Brute,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Algorithm1 => Method::Algorithm1,
            MethodArg::Theorem1 => Method::Theorem1,
            MethodArg::Brute => Method::Brute,
        }
    }
}

#[derive(Args)]
struct OptimizeArgs {
    /// Prior probabilities as a JSON array (or `{"prior": [...]}`) or a CSV
    /// list of numbers; the first entry is beam 1.
    #[arg(long)]
    prior: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    snr_db: f64,
    #[arg(long)]
    budget: u32,
    #[arg(long, value_enum, default_value = "algorithm1")]
    method: MethodArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Overrides the trial count of the scenario.
    #[arg(long)]
    trials: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional JSON report of every cell.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Simulated trials per pairwise grid point.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Random two-candidate instances.
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    /// Random priors for the water-filling enumeration.
    #[arg(long, default_value_t = 1000)]
    priors: usize,
    /// Accepted deviation of the pairwise check, in standard errors.
    #[arg(long, default_value_t = 3.0)]
    sigmas: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Invalid(String),
    Rejected(String),
}

impl From<beamrep::Error> for Failure {
    fn from(e: beamrep::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn parse_threshold(s: &str) -> std::result::Result<Threshold, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threshold::Auto);
    }
    match s.parse::<f64>() {
        Ok(t) if (0.0..1.0).contains(&t) => Ok(Threshold::Fixed(t)),
        _ => Err(format!("expected `auto` or a number in [0, 1), got `{s}`")),
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn require_file(path: &Path) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("input file {} does not exist", path.display())))
    }
}

fn require_writable(path: &Path) -> Outcome {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Failure::Invalid(format!("output directory {} does not exist", parent.display())))
    }
}

fn write_output(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> std::result::Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Invalid(e.to_string()))
}

fn train_prior(args: &TrainArgs, seed: u64, log: &Log) -> Outcome {
    require_file(&args.data)?;
    require_writable(&args.out)?;
    let samples = read_training_csv(&args.data)?;
    let n_beams = match args.n_beams {
        Some(n) => n,
        None => {
            let n = samples.iter().map(|s| s.optimal_index + 1).max().unwrap_or(0);
            log.info(format!("codebook size not given, using {n} from the data"));
            n
        }
    };
    let config = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        seed,
        batch_size: args.batch_size,
        threshold: args.threshold,
        ..TrainConfig::new(n_beams)
    };
    log.info(format!(
        "training on {} samples, {} beams, {} epochs (seed {seed})",
        samples.len(),
        n_beams,
        args.epochs
    ));
    let model = train_prior_model(&samples, &config)?;
    model.save(&args.out)?;
    log.info(format!(
        "final loss {:.5}, threshold {:.3e}, config hash {}; wrote {}",
        model.final_loss,
        model.threshold,
        config.config_hash(),
        args.out.display()
    ));
    Ok(())
}

fn read_prior(path: &Path) -> std::result::Result<PriorVector, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let probs: Vec<f64> = if is_csv {
        let mut values = Vec::new();
        for (i, field) in text.split([',', '\n', '\r']).map(str::trim).filter(|f| !f.is_empty()).enumerate() {
            match field.parse::<f64>() {
                Ok(v) => values.push(v),
                // a header in front of the numbers is allowed
                Err(_) if values.is_empty() && i == 0 => {}
                Err(_) => return Err(Failure::Invalid(format!("{}: `{field}` is not a number", path.display()))),
            }
        }
        values
    } else {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
        let array = value.get("prior").cloned().unwrap_or(value);
        serde_json::from_value(array)
            .map_err(|e| Failure::Invalid(format!("{}: expected an array of probabilities ({e})", path.display())))?
    };
    Ok(PriorVector::new(probs)?)
}

#[derive(Serialize)]
struct OptimizeInputs<'a> {
    prior: &'a [f64],
    snr_db: f64,
    budget: u32,
    method: Method,
}

#[derive(Serialize)]
struct OptimizeOutput {
    /// One-based beam indices.
    candidates: Vec<usize>,
    repetitions: Vec<u32>,
    p_miss_sel: f64,
    p_miss_det_bound: f64,
    p_miss_bound: f64,
    p_miss_bound_clamped: f64,
    /// Bound for each set size evaluated, starting at one beam.
    trace: Vec<f64>,
    method: Method,
    snr_db: f64,
    budget: u32,
    seed: u64,
    config_hash: String,
}

fn run_optimize(args: &OptimizeArgs, seed: u64, log: &Log) -> Outcome {
    require_file(&args.prior)?;
    require_writable(&args.out)?;
    if !args.snr_db.is_finite() {
        return Err(Failure::Invalid("--snr-db must be finite".into()));
    }
    let prior = read_prior(&args.prior)?;
    let method = Method::from(args.method);
    let rho = 10f64.powf(args.snr_db / 10.0);
    let outcome = optimize(&prior, rho, args.budget, method)?;
    let inputs = OptimizeInputs {
        prior: prior.probs(),
        snr_db: args.snr_db,
        budget: args.budget,
        method,
    };
    let config_hash = sha256_hex(serde_json::to_string(&inputs).expect("inputs serialize").as_bytes());
    let out = OptimizeOutput {
        candidates: outcome.plan.candidates.iter().map(|c| c + 1).collect(),
        repetitions: outcome.plan.repetitions.clone(),
        p_miss_sel: outcome.estimate.p_miss_sel,
        p_miss_det_bound: outcome.estimate.p_miss_det_bound,
        p_miss_bound: outcome.estimate.p_miss_bound,
        p_miss_bound_clamped: outcome.estimate.p_miss_bound_clamped,
        trace: outcome.trace,
        method,
        snr_db: args.snr_db,
        budget: args.budget,
        seed,
        config_hash,
    };
    write_output(&args.out, &to_json(&out)?)?;
    log.info(format!(
        "{} beams {:?} with repetitions {:?}, bound {:.4}; wrote {}",
        out.candidates.len(),
        out.candidates,
        out.repetitions,
        out.p_miss_bound,
        args.out.display()
    ));
    Ok(())
}

fn simulate(args: &SimulateArgs, seed: Option<u64>, log: &Log) -> Outcome {
    require_file(&args.scenario)?;
    if args.out_csv.is_none() && args.out_json.is_none() {
        return Err(Failure::Invalid("give --out-csv, --out-json or both".into()));
    }
    for path in args.out_csv.iter().chain(&args.out_json) {
        require_writable(path)?;
    }
    let mut config = ScenarioConfig::load(&args.scenario)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    log.info(format!(
        "{} strategies x {} SNR points x {} budgets, {} trials each (seed {})",
        config.strategies.len(),
        config.snr_db_list.len(),
        config.budgets().len(),
        config.trials,
        config.seed
    ));
    let result = run_sweep(&config)?;
    if let Some(path) = &args.out_csv {
        write_output(path, &result.to_csv())?;
        log.info(format!("wrote {}", path.display()));
    }
    if let Some(path) = &args.out_json {
        write_output(path, &result.to_json()?)?;
        log.info(format!("wrote {}", path.display()));
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    seed: u64,
    config_hash: String,
    passed: usize,
    failed: usize,
    cells: Vec<beamrep::reference::Table2Cell>,
}

fn verify(args: &VerifyArgs, seed: u64, log: &Log) -> Outcome {
    if let Some(path) = &args.out {
        require_writable(path)?;
    }
    let cells = verify_table2(seed)?;
    for c in &cells {
        let block = match c.block {
            Table2Block::Estimated => "estimated",
            Table2Block::Simulated => "simulated",
        };
        log.info(format!(
            "{} {block:9} S={} {:>4} dB: {:.4} expected {:.3} (tol {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.s,
            c.snr_db,
            c.got,
            c.expected,
            c.tolerance
        ));
    }
    let failed = cells.iter().filter(|c| !c.passed).count();
    let passed = cells.len() - failed;
    log.info(format!("{passed}/{} cells within tolerance", cells.len()));
    if let Some(path) = &args.out {
        let config_hash = beamrep::reference::table2_scenario(seed).config_hash();
        write_output(path, &to_json(&VerifyReport { seed, config_hash, passed, failed, cells })?)?;
    }
    if failed > 0 {
        return Err(Failure::Rejected(format!("{failed} cells outside tolerance")));
    }
    Ok(())
}

#[derive(Serialize)]
struct OracleOutput {
    seed: u64,
    config_hash: String,
    reports: Vec<OracleReport>,
}

#[derive(Serialize)]
struct OracleSettings {
    trials: u64,
    instances: usize,
    priors: usize,
    sigmas: f64,
}

fn oracle(args: &OracleArgs, seed: u64, log: &Log) -> Outcome {
    if let Some(path) = &args.out {
        require_writable(path)?;
    }
    if args.trials == 0 || args.instances == 0 || args.priors == 0 {
        return Err(Failure::Invalid("trial and instance counts must be positive".into()));
    }
    if !(args.sigmas.is_finite() && args.sigmas > 0.0) {
        return Err(Failure::Invalid("--sigmas must be positive".into()));
    }
    let reports = vec![
        check_pairwise(&pairwise_grid(), args.trials, args.sigmas, seed)?,
        check_two_candidate(args.instances, 0.05, seed)?,
        check_waterfill(args.priors, seed)?,
    ];
    for r in &reports {
        log.info(format!(
            "{} {}: {}/{} agree, max deviation {:.3e} ({})",
            if r.passed() { "PASS" } else { "FAIL" },
            r.name,
            r.agreed,
            r.checked,
            r.max_deviation,
            r.detail
        ));
    }
    if let Some(path) = &args.out {
        let settings = OracleSettings {
            trials: args.trials,
            instances: args.instances,
            priors: args.priors,
            sigmas: args.sigmas,
        };
        let config_hash = sha256_hex(serde_json::to_string(&settings).expect("settings serialize").as_bytes());
        write_output(path, &to_json(&OracleOutput { seed, config_hash, reports: reports.clone() })?)?;
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(Failure::Rejected(format!("{failed} oracle checks disagree")));
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let log = Log { quiet: cli.quiet };
    match &cli.command {
        Command::TrainPrior(a) => train_prior(a, cli.seed.unwrap_or(0), &log),
        Command::Optimize(a) => run_optimize(a, cli.seed.unwrap_or(0), &log),
        Command::Simulate(a) => simulate(a, cli.seed, &log),
        Command::VerifyTable2(a) => verify(a, cli.seed.unwrap_or(TABLE2_DEFAULT_SEED), &log),
        Command::OracleCheck(a) => oracle(a, cli.seed.unwrap_or(1), &log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.threads {
        None => run(&cli),
        Some(0) => Err(Failure::Invalid("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(Failure::Invalid(format!("cannot start {n} threads: {e}"))),
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Rejected(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(3)
        }
    }
}
