use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tfrecon::eval::{self, ExperimentSpec, Method};
use tfrecon::io::{read_tf, write_af, write_tf};
use tfrecon::measure::apply_mask;
use tfrecon::siggen::{self, DatasetConfig};
use tfrecon::solver::{
    ista_solve, relative_lambda, write_trace_csv, L1AppConfig, LassoProblem, SolverConfig,
    DEFAULT_LAMBDA_FRACTION,
};
use tfrecon::tfcore::{af_direct, wvd};
use tfrecon::threshnet::WeightBundle;
use tfrecon::uista::UistaModel;
use tfrecon::{BenchmarkCase, DiscreteSignal, MaskSpec, MeasurementOp, MixtureSpec, TfMatrix};

#[derive(Parser)]
#[command(
    name = "tfrecon",
    version,
    about = "Sparse time-frequency reconstruction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Gen(GenArgs),
    /// Wigner-Ville distribution of a signal.
    Wvd(TransformArgs),
    /// Ambiguity function of a signal.
    Af(TransformArgs),
    /// Reconstruct a distribution from AF samples of a signal.
    Reconstruct(ReconstructArgs),
    /// Monte-Carlo NMSE sweep, written as CSV.
    Eval(EvalArgs),
    /// Render a stored distribution as a log-magnitude image.
    Render(RenderArgs),
}

#[derive(Args)]
struct SignalArgs {
    /// Benchmark case 1..5.
    #[arg(long, conflicts_with = "spec")]
    case: Option<u8>,
    /// JSON mixture description.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Additive noise level in dB; clean if omitted.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SignalArgs {
    fn mixture(&self) -> anyhow::Result<MixtureSpec> {
        let spec = match (&self.spec, self.case) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<MixtureSpec>(&text)?
            }
            (None, Some(k)) => match BenchmarkCase::from_number(k) {
                Some(case) => case.spec(),
                None => bail!("no benchmark case {k}; expected 1..5"),
            },
            (None, None) => bail!("either --case or --spec is required"),
        };
        Ok(match self.snr {
            Some(snr) => spec.with_snr(Some(snr)),
            None => spec,
        })
    }

    fn signal(&self) -> anyhow::Result<DiscreteSignal> {
        Ok(siggen::synthesize(&self.mixture()?, self.seed)?)
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    #[arg(long, default_value_t = 5.0)]
    snr_min: f64,
    #[arg(long, default_value_t = 25.0)]
    snr_max: f64,
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    t0: usize,
    #[arg(long, default_value = "29x29")]
    mask: MaskSpec,
    /// Use this benchmark case for every sample.
    #[arg(long)]
    case: Option<u8>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    signal: SignalArgs,
    /// Binary output; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Wvd,
    L1app,
    Ista,
    Uista,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    signal: SignalArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// `.uwb` weights (required for uista).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// AF sampling rectangle, `DxD` (Doppler x lag).
    #[arg(long)]
    mask: Option<MaskSpec>,
    /// Absolute LASSO weight; defaults to 1% of max |adjoint(a')|.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the solver trace as CSV (l1app and ista only).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON experiment spec; flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3, 4, 5])]
    cases: Vec<u8>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0])]
    snr_grid: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, value_delimiter = ',', default_values = ["wvd", "l1app"])]
    methods: Vec<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    /// Distribution written by `wvd` or `reconstruct`.
    #[arg(long)]
    input: PathBuf,
    /// Binary PGM output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    png: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_DYNAMIC_RANGE_DB)]
    dynamic_range: f64,
}

fn gen(args: GenArgs) -> anyhow::Result<serde_json::Value> {
    let forced_case = match args.case {
        Some(k) => {
            Some(BenchmarkCase::from_number(k).with_context(|| format!("no benchmark case {k}"))?)
        }
        None => None,
    };
    let cfg = DatasetConfig {
        count: args.count,
        snr_range: (args.snr_min, args.snr_max),
        seed: args.seed,
        n: args.n,
        t0: args.t0,
        mask: args.mask,
        forced_case,
    };
    let manifest = siggen::make_dataset(&cfg, &args.out)?;
    Ok(json!({ "dir": args.out, "count": manifest.count }))
}

fn solver_output(
    z: &DiscreteSignal,
    op: &MeasurementOp,
    lambda: Option<f64>,
    cfg: &SolverConfig,
    trace: Option<&Path>,
) -> anyhow::Result<TfMatrix> {
    let obs = apply_mask(&af_direct(z), op.mask())?;
    let lambda = match lambda {
        Some(l) => l,
        None => relative_lambda(op, &obs, DEFAULT_LAMBDA_FRACTION)?,
    };
    if lambda <= 0.0 {
        return Ok(TfMatrix::zeros(z.len()));
    }
    let out = ista_solve(&LassoProblem::new(op, &obs, lambda), cfg)?;
    if let Some(path) = trace {
        let file =
            fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(std::io::BufWriter::new(file), &out.trace)?;
    }
    log::info!(
        "solver stopped after {} iterations (converged: {})",
        out.iterations(),
        out.converged
    );
    Ok(TfMatrix::from_column_major(z.len(), out.estimate)?)
}

fn reconstruct(args: ReconstructArgs) -> anyhow::Result<serde_json::Value> {
    let z = args.signal.signal()?;
    let n = z.len();
    let estimate = match args.method {
        MethodArg::Wvd => wvd(&z),
        MethodArg::L1app | MethodArg::Ista => {
            let (mask, mut cfg) = match args.method {
                MethodArg::L1app => {
                    let d = L1AppConfig::default();
                    (d.mask, d.solver)
                }
                _ => (MaskSpec::WIDE, Method::ista_config()),
            };
            if let Some(k) = args.max_iters {
                cfg.max_iters = k;
            }
            cfg.track_objective = args.trace.is_some();
            let op = MeasurementOp::new(n, args.mask.unwrap_or(mask))?;
            solver_output(&z, &op, args.lambda, &cfg, args.trace.as_deref())?
        }
        MethodArg::Uista => {
            let path = args
                .weights
                .as_deref()
                .context("uista requires --weights")?;
            let bundle = WeightBundle::load(path)?;
            let mask = args.mask.or(bundle.mask).unwrap_or(MaskSpec::WIDE);
            let model = UistaModel::from_bundle(MeasurementOp::new(n, mask)?, bundle)?;
            let obs = apply_mask(&af_direct(&z), mask)?;
            model.reconstruct(&obs)?
        }
    };
    write_tf(&args.out, &estimate)?;
    Ok(json!({ "out": args.out, "N": n, "max_abs": estimate.max_abs() }))
}

fn run_eval(args: EvalArgs) -> anyhow::Result<Option<serde_json::Value>> {
    let spec = match &args.spec {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ExperimentSpec>(&text)?
        }
        None => ExperimentSpec {
            cases: args
                .cases
                .iter()
                .map(|&k| eval::CaseSpec::Benchmark(k))
                .collect(),
            snr_grid: args.snr_grid.clone(),
            runs: args.runs,
            methods: args
                .methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<_, _>>()?,
            seed: args.seed,
            weights: None,
        },
    };
    let csv = eval::run_experiment_csv(&spec, args.weights.as_deref())?;
    match args.out {
        Some(path) => {
            tfrecon::io::write_bytes(&path, csv.as_bytes())?;
            Ok(Some(
                json!({ "out": path, "rows": csv.lines().count() - 1 }),
            ))
        }
        None => {
            std::io::stdout().write_all(csv.as_bytes())?;
            Ok(None)
        }
    }
}

fn render(args: RenderArgs) -> anyhow::Result<serde_json::Value> {
    let tfd = read_tf(&args.input)?;
    eval::write_pgm(&tfd, &args.out, args.dynamic_range)?;
    if let Some(png) = &args.png {
        eval::write_png(&tfd, png, args.dynamic_range)?;
    }
    Ok(json!({ "out": args.out, "N": tfd.n() }))
}

fn run(cli: Cli) -> anyhow::Result<Option<serde_json::Value>> {
    Ok(Some(match cli.command {
        Command::Gen(args) => gen(args)?,
        Command::Wvd(args) => {
            let w = wvd(&args.signal.signal()?);
            write_tf(&args.out, &w)?;
            json!({ "out": args.out, "N": w.n() })
        }
        Command::Af(args) => {
            let a = af_direct(&args.signal.signal()?);
            write_af(&args.out, &a)?;
            json!({ "out": args.out, "N": a.n() })
        }
        Command::Reconstruct(args) => reconstruct(args)?,
        Command::Eval(args) => return run_eval(args),
        Command::Render(args) => render(args)?,
    }))
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<tfrecon::Error>())
        .map_or("error", tfrecon::Error::kind);
    json!({ "error": kind, "message": format!("{err:#}") })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            if let Some(summary) = summary {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::FAILURE
        }
    }
}
