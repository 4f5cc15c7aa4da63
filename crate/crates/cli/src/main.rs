//! `blocksparse`: dictionary analysis, recovery and regression from the command line.
//!
//! Exit codes: 0 success, 1 invalid input, 2 solver did not converge (outputs
//! are still written, flagged in the sidecar), 3 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde_json::{json, Value};

use blocksparse::certificates::{exact_recovery_certificate, regression_certificate, CertMode};
use blocksparse::conditioning::monte_carlo_conditioning;
use blocksparse::dictgen::{generate, DictGenSpec, DictKind};
use blocksparse::experiments::{emit_outputs, run_recovery_experiment, run_regression_experiment, ExperimentConfig, NoiseConfig};
use blocksparse::io::{fmt_f64, format_matrix, format_vector, parse_matrix, parse_vector, read_to_string, write_atomic};
use blocksparse::metrics::{check_bic, dictionary_metrics};
use blocksparse::solvers::{
    detect_block_support, group_lasso, l1_basis_pursuit, l21_basis_pursuit, lasso, SupportThresholds,
};
use blocksparse::{BicConstants, Dictionary64, Error, SolverConfig, SolverResult64};

#[derive(Parser)]
#[command(name = "blocksparse", version, about = "Block-sparse recovery and regression toolkit")]
struct Cli {
    /// Cap on worker threads; 1 runs serially.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coherences, spectral norm and the block incoherence condition of a matrix file.
    Analyze(AnalyzeArgs),
    /// Write a random dictionary and a JSON sidecar describing how to regenerate it.
    Generate(GenerateArgs),
    /// Monte Carlo conditioning of random k-block subdictionaries.
    Condition(ConditionArgs),
    /// Noiseless recovery by ℓ2,1 (or ℓ1) basis pursuit.
    Recover(RecoverArgs),
    /// Group-lasso (or lasso) regression.
    Regress(RegressArgs),
    /// Exact-recovery or regression certificate for a known signal.
    Certify(CertifyArgs),
    /// Monte Carlo experiments writing summary.csv, trials.csv and metrics.json.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Args)]
struct MatrixArgs {
    /// Matrix file (`n p m` header, then n rows).
    #[arg(long)]
    matrix: PathBuf,
    /// Block size, overriding the file header.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: MatrixArgs,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Spectral,
    Kronecker,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Spectral multiplier τ (only with `--kind spectral`).
    #[arg(long, default_value_t = 1)]
    tau: u32,
    #[arg(long, value_enum, default_value_t = KindArg::Random)]
    kind: KindArg,
    /// Matrix path; the sidecar goes to `<output>.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ConditionArgs {
    #[command(flatten)]
    input: MatrixArgs,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-trial CSV; the summary goes to `<output>.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative (KKT) tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Least-squares refit on the detected support.
    #[arg(long)]
    debias: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(t) = self.tol {
            c.rel_tol = t;
        }
        if let Some(k) = self.max_iters {
            c.max_iters = k;
        }
        c.debias = self.debias;
        c
    }
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    input: MatrixArgs,
    /// Observation vector file (length n).
    #[arg(long)]
    observation: PathBuf,
    /// Entrywise ℓ1 instead of ℓ2,1.
    #[arg(long)]
    l1: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Estimate path; diagnostics go to `<output>.json`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[command(flatten)]
    input: MatrixArgs,
    #[arg(long)]
    observation: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    sigma: f64,
    /// Entrywise lasso instead of group lasso.
    #[arg(long)]
    lasso: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum CertArg {
    Exact,
    Lasso,
    Group,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    input: MatrixArgs,
    /// True signal as a vector file; its support line is used.
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, value_enum, default_value_t = CertArg::Exact)]
    mode: CertArg,
    /// Observation; the noise `y − Φβ` enters the regression conditions.
    #[arg(long)]
    observation: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ExperimentCommand {
    Recover(ExperimentArgs),
    Regress(ExperimentArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON object whose keys override the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from n=858, p=5000, m=10 instead of the desk defaults (hours of runtime).
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
}

/// Outcome of a command that ran to completion.
enum Done {
    Ok,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("thread pool is configured once");
    }
    let res = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Generate(a) => generate_cmd(a),
        Command::Condition(a) => condition(a),
        Command::Recover(a) => recover(a),
        Command::Regress(a) => regress(a),
        Command::Certify(a) => certify(a),
        Command::Experiment(ExperimentCommand::Recover(a)) => experiment(a, false),
        Command::Experiment(ExperimentCommand::Regress(a)) => experiment(a, true),
    };
    match res {
        Ok(Done::Ok) => ExitCode::SUCCESS,
        Ok(Done::NotConverged) => {
            eprintln!("warning: solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => 3,
                _ => 1,
            })
        }
    }
}

fn load_dictionary(args: &MatrixArgs) -> blocksparse::Result<(Dictionary64, usize)> {
    let file = parse_matrix::<f64>(&read_to_string(&args.matrix)?)?;
    Dictionary64::with_renormalized_count(file.entries, args.m.unwrap_or(file.block_size))
}

fn load_vector(path: &Path, len: usize, what: &str) -> blocksparse::Result<blocksparse::io::VectorFile<f64>> {
    let v = parse_vector::<f64>(&read_to_string(path)?)?;
    if v.values.len() != len {
        return Err(Error::Input(format!(
            "{what} in {} has length {}, expected {len}",
            path.display(),
            v.values.len()
        )));
    }
    Ok(v)
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn emit_json(v: &Value, output: Option<&Path>) -> blocksparse::Result<()> {
    match output {
        Some(path) => write_atomic(path, to_json(v).as_bytes()),
        None => {
            print!("{}", to_json(v));
            Ok(())
        }
    }
}

fn analyze(a: AnalyzeArgs) -> blocksparse::Result<Done> {
    let (d, renormalized) = load_dictionary(&a.input)?;
    let metrics = dictionary_metrics(&d)?;
    let constants = BicConstants {
        c0: a.c0,
        c1: a.c1,
        c2: a.c2,
    };
    let bic = check_bic(&metrics, d.p(), d.num_blocks(), constants)?;
    let mut report = json!({
        "n": d.n(),
        "p": d.p(),
        "m": d.block_size(),
        "metrics": metrics,
        "bic": bic,
    });
    if renormalized > 0 {
        report["warning"] = json!(format!("{renormalized} columns were not unit norm and were renormalized"));
    }
    emit_json(&report, a.output.as_deref())?;
    Ok(Done::Ok)
}

fn generate_cmd(a: GenerateArgs) -> blocksparse::Result<Done> {
    let kind = match a.kind {
        KindArg::Random => DictKind::RandomUnitNorm,
        KindArg::Spectral => DictKind::SpectralMultiplied,
        KindArg::Kronecker => DictKind::Kronecker,
    };
    if a.tau != 1 && kind != DictKind::SpectralMultiplied {
        return Err(Error::Input("--tau applies only to --kind spectral".into()));
    }
    let spec = DictGenSpec {
        n: a.n,
        p: a.p,
        m: a.m,
        seed: a.seed,
        multiplier: a.tau,
        kind,
    };
    let d = generate::<f64>(&spec)?;
    let sidecar = json!({ "spec": spec, "seed": a.seed });
    write_atomic(&a.output, format_matrix(d.entries(), d.block_size()).as_bytes())?;
    write_atomic(&sidecar_path(&a.output), to_json(&sidecar).as_bytes())?;
    Ok(Done::Ok)
}

fn condition(a: ConditionArgs) -> blocksparse::Result<Done> {
    let (d, _) = load_dictionary(&a.input)?;
    let report = monte_carlo_conditioning(&d, a.k, a.trials, a.epsilon, a.seed)?;
    let mut csv = String::from("trial,seed,k,sigma_min,sigma_max,within_interval\n");
    for t in &report.records {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.trial,
            t.seed,
            t.k,
            fmt_f64(t.sigma_min),
            fmt_f64(t.sigma_max),
            u8::from(t.within_interval)
        ));
    }
    let summary = json!({
        "seed": a.seed,
        "k": report.k,
        "trials": report.trials,
        "epsilon": report.epsilon,
        "fraction_within": report.fraction_within,
        "worst_sigma_min": report.worst_sigma_min,
        "worst_sigma_max": report.worst_sigma_max,
        "exhaustive": report.exhaustive,
        "warnings": report.warnings,
    });
    write_atomic(&a.output, csv.as_bytes())?;
    write_atomic(&sidecar_path(&a.output), to_json(&summary).as_bytes())?;
    Ok(Done::Ok)
}

fn write_estimate(d: &Dictionary64, r: &SolverResult64, output: &Path, extra: Value) -> blocksparse::Result<Done> {
    let m = d.block_size();
    let support = detect_block_support(&r.beta_hat, m, SupportThresholds::default());
    let mut diag = json!(r.diagnostics());
    if let (Value::Object(o), Value::Object(e)) = (&mut diag, extra) {
        o.extend(e);
    }
    write_atomic(output, format_vector(&r.beta_hat, m, &support).as_bytes())?;
    write_atomic(&sidecar_path(output), to_json(&diag).as_bytes())?;
    Ok(if r.converged { Done::Ok } else { Done::NotConverged })
}

fn recover(a: RecoverArgs) -> blocksparse::Result<Done> {
    let (d, _) = load_dictionary(&a.input)?;
    let y = load_vector(&a.observation, d.n(), "observation")?.values;
    let cfg = a.solver.config();
    let r = if a.l1 {
        l1_basis_pursuit(&d, &y, &cfg)?
    } else {
        l21_basis_pursuit(&d, &y, &cfg)?
    };
    let program = if a.l1 { "l1_basis_pursuit" } else { "l21_basis_pursuit" };
    write_estimate(&d, &r, &a.output, json!({ "program": program }))
}

fn regress(a: RegressArgs) -> blocksparse::Result<Done> {
    let (d, _) = load_dictionary(&a.input)?;
    let y = load_vector(&a.observation, d.n(), "observation")?.values;
    if !(a.lambda > 0.0 && a.sigma >= 0.0) {
        return Err(Error::Input("need --lambda > 0 and --sigma >= 0".into()));
    }
    let cfg = a.solver.config();
    let (r, program) = if a.lasso {
        (lasso(&d, &y, a.lambda, a.sigma, &cfg)?, "lasso")
    } else {
        (group_lasso(&d, &y, a.lambda, a.sigma, &cfg)?, "group_lasso")
    };
    write_estimate(
        &d,
        &r,
        &a.output,
        json!({ "program": program, "lambda": a.lambda, "sigma": a.sigma }),
    )
}

fn certify(a: CertifyArgs) -> blocksparse::Result<Done> {
    let (d, _) = load_dictionary(&a.input)?;
    let signal = load_vector(&a.signal, d.p(), "signal")?;
    let beta = signal.values;
    let support = signal.support;
    let report = match a.mode {
        CertArg::Exact => exact_recovery_certificate(&d, &support, &beta)?,
        CertArg::Lasso | CertArg::Group => {
            let (Some(lambda), Some(sigma)) = (a.lambda, a.sigma) else {
                return Err(Error::Input("regression certificates need --lambda and --sigma".into()));
            };
            let z = match &a.observation {
                Some(path) => load_vector(path, d.n(), "observation")?.values - d.entries() * &beta,
                None => DVector::zeros(d.n()),
            };
            let mode = if matches!(a.mode, CertArg::Lasso) {
                CertMode::Lasso
            } else {
                CertMode::Group
            };
            regression_certificate(&d, &support, &beta, &z, lambda, sigma, mode)?
        }
    };
    emit_json(&json!(report), a.output.as_deref())?;
    Ok(Done::Ok)
}

/// Shallow merge of `overrides` onto `base`; nested objects merge recursively.
fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn experiment_config(a: &ExperimentArgs) -> blocksparse::Result<ExperimentConfig> {
    let base = if a.paper_scale {
        ExperimentConfig::paper_scale()
    } else {
        ExperimentConfig::desk()
    };
    let mut value = serde_json::to_value(&base).expect("config serializes");
    if let Some(path) = &a.config {
        let text = read_to_string(path)?;
        let overrides: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        if !overrides.is_object() {
            return Err(Error::Input(format!("{}: config must be a JSON object", path.display())));
        }
        merge(&mut value, overrides);
    }
    let mut config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Input(format!("config: {e}")))?;
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(t) = a.trials {
        config.trials_per_point = t;
    }
    config.validate()?;
    Ok(config)
}

fn experiment(a: ExperimentArgs, regression: bool) -> blocksparse::Result<Done> {
    let mut config = experiment_config(&a)?;
    if regression && config.noise.is_none() {
        config.noise = Some(NoiseConfig::default());
    }
    let out = if regression {
        run_regression_experiment::<f64>(&config)?
    } else {
        run_recovery_experiment::<f64>(&config)?
    };
    emit_outputs(&out, &a.output)?;
    let sidecar = json!({ "seed": config.master_seed, "config": config });
    write_atomic(&a.output.join("config.json"), to_json(&sidecar).as_bytes())?;
    Ok(Done::Ok)
}
