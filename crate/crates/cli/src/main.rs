//! `nsplab` command line front end.
//!
//! Exit status: 0 on success, 1 when the computation itself fails (bad
//! matrix file, dictionary failing NSP, budget exceeded, ...), 2 on usage
//! errors. `NSPLAB_THREADS` caps the rayon pool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nsplab_core::dictionary::{make_dictionary, Dictionary, DictionaryKind};
use nsplab_core::harness::{self, ExperimentConfig, ExperimentKind};
use nsplab_core::nsp::certify_nsp;
use nsplab_core::numerics::{label_id, read_matrix, read_vector, RngStream};
use nsplab_core::smallball::BoundInputs;
use nsplab_core::solver::{
    best_s_term_error, evaluate_recovery, solve_l1_synthesis, AdmmParams, RecoveryBoundInputs, RecoveryProblem,
};
use nsplab_core::width::{width_ds_gamma_dual, width_ds_gamma_mc, ConeParams};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(
    name = "nsplab",
    version,
    about = "Null space property certification and measurement-count experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the null space property of order s for a matrix file; prints JSON.
    NspCheck {
        #[arg(long = "A")]
        a: PathBuf,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = harness::NSP_TOL)]
        tol: f64,
    },
    /// Gaussian width of D S_gamma, or a width_compare campaign with --config.
    Width(WidthArgs),
    /// Measurement-count bounds of every formula as CSV.
    Bounds(BoundsArgs),
    /// Solve min ||x||_1 s.t. ||Bx - y||_2 <= eps; prints JSON.
    Recover(RecoverArgs),
    /// Recovery phase transition over an m grid.
    Phase(CampaignArgs),
    /// NSP preservation frequency of Phi D over an m grid.
    Preserve(CampaignArgs),
}

#[derive(Args, Debug)]
struct WidthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, conflicts_with_all = ["dict", "d", "n", "s", "gamma"])]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dictionary matrix file; otherwise one is generated from --dictionary, --d and --n.
    #[arg(long = "D", conflicts_with = "dictionary")]
    dict: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratedDictionary::GaussianUnitNorm)]
    dictionary: GeneratedDictionary,
    #[arg(long, required_unless_present_any = ["config", "dict"])]
    d: Option<usize>,
    #[arg(long, required_unless_present_any = ["config", "dict"])]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    s: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = Estimator::Both)]
    estimator: Estimator,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GeneratedDictionary {
    GaussianUnitNorm,
    Identity,
    ParsevalRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Estimator {
    Mc,
    Dual,
    Both,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    n: usize,
    /// Ambient dimension; defaults to n.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    sigma: f64,
    #[arg(long = "C")]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Width fed to thm_S; defaults to the closed-form width bound.
    #[arg(long)]
    width: Option<f64>,
    /// Measurement count for prob_at_m; defaults to each formula's m_min.
    #[arg(long)]
    m: Option<f64>,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    #[arg(long = "B")]
    b: PathBuf,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long = "D")]
    dict: Option<PathBuf>,
    /// Ground truth; adds error and bound columns.
    #[arg(long)]
    x0: Option<PathBuf>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, default_value_t = AdmmParams::default().max_iter)]
    max_iter: usize,
}

#[derive(Args, Debug)]
struct CampaignArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: u64,
    /// Overrides the config output path; without either, records go to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Error carrying its exit status.
enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<nsplab_core::Error> for Failure {
    fn from(e: nsplab_core::Error) -> Self {
        Failure::Domain(e.into())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("NSPLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("NSPLAB_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::NspCheck { a, s, tol } => {
            let a = read_matrix(&a)?;
            let cert = certify_nsp(&a, s, tol)?;
            print_json(&serde_json::to_value(&cert).context("serializing certificate")?);
        }
        Command::Width(args) => width(args)?,
        Command::Bounds(args) => {
            let inputs = BoundInputs {
                eta: args.eta,
                gamma: args.gamma,
                rho: args.rho,
                alpha: args.alpha,
                sigma: args.sigma,
                width_constant: args.c,
                s: args.s,
                n: args.n,
                d: args.d.unwrap_or(args.n),
                kappa: Some(args.kappa),
            };
            print!(
                "{}",
                harness::bounds_csv(&harness::bounds_table(&inputs, args.width, args.m)?)
            );
        }
        Command::Recover(args) => recover(args)?,
        Command::Phase(args) => campaign(args, ExperimentKind::PhaseTransition)?,
        Command::Preserve(args) => campaign(args, ExperimentKind::PreserveNsp)?,
    }
    Ok(())
}

fn print_json(v: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(v).expect("json values always serialize")
    );
}

fn load_config(path: &Path) -> Result<(ExperimentConfig, Option<PathBuf>), Failure> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    let base = path.parent().map(Path::to_path_buf);
    // the config's own output path is relative to the config file
    if let (Some(out), Some(b)) = (&cfg.output, &base) {
        if out.is_relative() {
            cfg.output = Some(b.join(out));
        }
    }
    Ok((cfg, base))
}

fn emit(cfg: &ExperimentConfig, output: Option<PathBuf>, out: &harness::ExperimentOutput) -> Result<(), Failure> {
    match output.or_else(|| cfg.output.clone()) {
        Some(path) => {
            harness::write_output(&path, cfg.experiment, out)?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            print!("{}", out.records);
            if let Some(summary) = &out.summary {
                eprint!("{summary}");
            }
        }
    }
    Ok(())
}

fn campaign(args: CampaignArgs, kind: ExperimentKind) -> Result<(), Failure> {
    let (mut cfg, base) = load_config(&args.config)?;
    if cfg.experiment != kind {
        return Err(Failure::Usage(format!(
            "config describes a {} experiment, expected {}",
            cfg.experiment.label(),
            kind.label()
        )));
    }
    cfg.seed = args.seed;
    let out = harness::run_experiment(&cfg, base.as_deref())?;
    emit(&cfg, args.output, &out)
}

fn width(args: WidthArgs) -> Result<(), Failure> {
    if let Some(path) = &args.config {
        let (mut cfg, base) = load_config(path)?;
        if cfg.experiment != ExperimentKind::WidthCompare {
            return Err(Failure::Usage(format!(
                "config describes a {} experiment",
                cfg.experiment.label()
            )));
        }
        cfg.seed = args.seed;
        let out = harness::run_experiment(&cfg, base.as_deref())?;
        return emit(&cfg, args.output, &out);
    }
    let dict = match &args.dict {
        Some(path) => Dictionary::from_matrix(read_matrix(path)?)?,
        None => {
            let kind = match args.dictionary {
                GeneratedDictionary::GaussianUnitNorm => DictionaryKind::GaussianUnitNorm,
                GeneratedDictionary::Identity => DictionaryKind::Identity,
                GeneratedDictionary::ParsevalRandom => DictionaryKind::ParsevalRandom,
            };
            let mut rng = RngStream::new(args.seed, label_id("dictionary"));
            make_dictionary(&kind, args.d.unwrap_or(0), args.n.unwrap_or(0), &mut rng)?
        }
    };
    let (s, gamma) = (args.s.unwrap_or(0), args.gamma.unwrap_or(0.0));
    let c = ConeParams::new(gamma, s, dict.n())?;
    let rng = RngStream::new(args.seed, label_id("width"));
    let mut report = serde_json::Map::new();
    if args.estimator != Estimator::Dual {
        let est = width_ds_gamma_mc(&dict, &c, args.samples, &rng)?;
        report.insert("mc".into(), serde_json::to_value(est).context("serializing estimate")?);
    }
    if args.estimator != Estimator::Mc {
        let est = width_ds_gamma_dual(&dict, &c, args.samples, &rng)?;
        report.insert(
            "dual".into(),
            serde_json::to_value(est).context("serializing estimate")?,
        );
    }
    print_json(&serde_json::Value::Object(report));
    Ok(())
}

fn recover(args: RecoverArgs) -> Result<(), Failure> {
    let b = read_matrix(&args.b)?;
    let y = read_vector(&args.y)?;
    let dict = args
        .dict
        .as_ref()
        .map(|p| read_matrix(p).and_then(Dictionary::from_matrix))
        .transpose()?;
    if let Some(d) = &dict {
        if d.n() != b.ncols() {
            return Err(anyhow!("D has {} columns but B has {}", d.n(), b.ncols()).into());
        }
    }
    let problem = RecoveryProblem::new(b, y, args.eps, dict.clone())?;
    let params = AdmmParams {
        max_iter: args.max_iter,
        ..AdmmParams::default()
    };
    let result = solve_l1_synthesis(&problem, &params)?;
    let mut value = serde_json::to_value(&result).context("serializing result")?;
    if let Some(path) = &args.x0 {
        let x0 = read_vector(path)?;
        if x0.len() != result.x_hat.len() {
            return Err(anyhow!("x0 has length {} but B has {} columns", x0.len(), result.x_hat.len()).into());
        }
        let err_x = (&result.x_hat - &x0).norm();
        let mut extra = json!({ "err_x": err_x });
        if let Some(d) = &dict {
            extra["err_z"] = json!((d.matrix() * (&result.x_hat - &x0)).norm());
        }
        if let Some(s) = args.s {
            extra["sigma_s"] = json!(best_s_term_error(x0.as_slice(), s)?);
            let cert = certify_nsp(&problem.b, s, harness::NSP_TOL)?;
            extra["gamma_star"] = serde_json::to_value(&cert).context("serializing certificate")?["gamma_star"].clone();
            if cert.holds() {
                let gamma = 0.5 * (1.0 + cert.gamma_star);
                if let Some(eta) = nsplab_core::nsp::certified_eta_lower_bound(&problem.b, &cert, gamma)? {
                    let identity;
                    let d = match &dict {
                        Some(d) => d,
                        None => {
                            identity = Dictionary::identity(problem.b.ncols());
                            &identity
                        }
                    };
                    let inputs = RecoveryBoundInputs {
                        gamma,
                        eta,
                        eps: args.eps,
                        width_constant: 1.0,
                        sigma: 1.0,
                        s,
                    };
                    let rep = evaluate_recovery(&x0, &result, d, &inputs)?;
                    extra["coef_bound"] = json!(rep.coef_bound);
                    extra["bound_violated"] = json!(rep.violated_x);
                }
            }
        }
        if let (Some(obj), Some(add)) = (value.as_object_mut(), extra.as_object()) {
            obj.extend(add.clone());
        }
    }
    print_json(&value);
    Ok(())
}
