use clap::{Args, Parser, Subcommand, ValueEnum};
use pathlab::config::{
    ExperimentKind, McBlock, ModelBlock, PartitionBlock, PathBlock, PricingBlock, RunConfig, TableChoice,
};
use pathlab::experiment::{classify, run, FailureClass};
use pathlab::hedging::ModelVol;
use pathlab::pricing::{BSModelSpec, PayoffSpec};
use pathlab::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Seed written into configs built from flags when none is given.
const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "pathlab", version, about = "Pathwise hedging analysis and Fourier expansion pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadratic variation along dyadic partitions
    Qv(Flags),
    /// Functional greeks of a payoff along a path
    Greeks(Flags),
    /// Delta-hedging experiment over one or many paths
    Hedge(Flags),
    /// Call prices from the characteristic-function expansion
    PriceExpansion(Flags),
    /// Monte Carlo call prices
    PriceMc(Flags),
    /// Expansion and MC prices for the reference parameter sets
    ReproduceTable(Flags),
    /// Expansion error against MC, per order and maturity
    ErrorCurves(Flags),
    /// Run whatever experiment the config file declares
    Run(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Bs,
    Merton,
    Vg,
}

#[derive(Clone, Copy, ValueEnum)]
enum PayoffArg {
    Call,
    Put,
    GeomAsian,
    ArithAsian,
    UpOut,
}

#[derive(Args, Default)]
struct Flags {
    /// JSON run configuration; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit
    #[arg(long)]
    dump_config: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,

    /// Path CSV (`time,value[,jump]`) on 2^level cells
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    qv_tol: Option<f64>,
    /// Number of simulated paths (GBM for hedging, MC for pricing)
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    sigma_true: Option<f64>,
    #[arg(long)]
    sigma_model: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,

    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum)]
    payoff: Option<PayoffArg>,
    #[arg(long)]
    strike: Option<f64>,
    #[arg(long)]
    barrier: Option<f64>,
    /// Stop times for greeks
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,

    #[arg(long)]
    spot: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    strikes: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    maturities: Vec<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    steps_per_year: Option<usize>,
    #[arg(long, value_enum)]
    which: Option<TableArg>,
    /// Minimum fraction of paths with direct error >= -1e-3 (hedge)
    #[arg(long)]
    min_robust: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableArg {
    Merton,
    Vg,
}

fn kind_of(c: &Command) -> (Option<ExperimentKind>, &Flags) {
    match c {
        Command::Qv(f) => (Some(ExperimentKind::Qv), f),
        Command::Greeks(f) => (Some(ExperimentKind::Greeks), f),
        Command::Hedge(f) => (Some(ExperimentKind::Hedge), f),
        Command::PriceExpansion(f) => (Some(ExperimentKind::PriceExpansion), f),
        Command::PriceMc(f) => (Some(ExperimentKind::PriceMc), f),
        Command::ReproduceTable(f) => (Some(ExperimentKind::ReproduceTable), f),
        Command::ErrorCurves(f) => (Some(ExperimentKind::ErrorCurves), f),
        Command::Run(f) => (None, f),
    }
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Merge flags into a config (loaded or fresh) for `kind`.
fn build_config(kind: Option<ExperimentKind>, f: &Flags) -> Result<RunConfig, Error> {
    let mut cfg = match (&f.config, kind) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| schema(e.to_string()))?
        }
        (None, Some(k)) => RunConfig::new(k),
        (None, None) => return Err(schema("`run` needs --config")),
    };
    if let Some(k) = kind {
        if cfg.experiment != k {
            return Err(schema(format!(
                "config declares experiment `{}` but the subcommand is `{}`",
                cfg.experiment.as_str(),
                k.as_str()
            )));
        }
    }
    let from_file = f.config.is_some();
    let k = cfg.experiment;
    if f.seed.is_some() {
        cfg.seed = f.seed;
    } else if !from_file && k.stochastic() {
        cfg.seed = Some(DEFAULT_SEED);
    }
    if f.csv.is_some() {
        cfg.outputs.csv = f.csv.clone();
    }
    if f.json.is_some() {
        cfg.outputs.json = f.json.clone();
    }
    let horizon = f.horizon.unwrap_or(1.0);

    match k {
        ExperimentKind::Qv | ExperimentKind::Greeks | ExperimentKind::Hedge => {
            if let Some(file) = &f.input {
                let level = f.level.ok_or_else(|| schema("--input needs --level"))?;
                cfg.paths = Some(PathBlock::Csv { file: file.clone(), level, price: true });
            } else if f.sigma_true.is_some() || f.paths.is_some() || (!from_file && cfg.paths.is_none()) {
                let (old_sigma, old_count, old_level) = match &cfg.paths {
                    Some(PathBlock::Gbm { sigma, count, level, .. }) => (*sigma, *count, *level),
                    _ => (0.2, 1, 14),
                };
                cfg.paths = Some(PathBlock::Gbm {
                    sigma: f.sigma_true.unwrap_or(old_sigma),
                    count: f.paths.unwrap_or(old_count),
                    level: f.level.unwrap_or(old_level),
                    horizon,
                });
            }
            if f.level.is_some() || f.qv_tol.is_some() || cfg.partition.is_none() {
                let old = cfg.partition.unwrap_or(PartitionBlock { level: 14, qv_tol: 0.05 });
                cfg.partition =
                    Some(PartitionBlock { level: f.level.unwrap_or(old.level), qv_tol: f.qv_tol.unwrap_or(old.qv_tol) });
            }
            if k != ExperimentKind::Qv {
                if matches!(f.model, Some(ModelArg::Merton | ModelArg::Vg)) {
                    return Err(schema("greeks and hedge use --model bs"));
                }
                if f.sigma_model.is_some() || cfg.model.is_none() {
                    let sigma = f.sigma_model.unwrap_or(0.2);
                    cfg.model = Some(ModelBlock::BlackScholes { spec: BSModelSpec::constant(sigma, horizon)? });
                    cfg.sigma_model = Some(ModelVol::Constant { sigma });
                }
                if f.payoff.is_some() || f.strike.is_some() || cfg.payoff.is_none() {
                    let strike = f.strike.unwrap_or(1.0);
                    cfg.payoff = Some(match f.payoff.unwrap_or(PayoffArg::Call) {
                        PayoffArg::Call => PayoffSpec::EuropeanCall { strike },
                        PayoffArg::Put => PayoffSpec::EuropeanPut { strike },
                        PayoffArg::GeomAsian => PayoffSpec::GeometricAsianCall { strike },
                        PayoffArg::ArithAsian => PayoffSpec::ArithmeticAsianCall { strike },
                        PayoffArg::UpOut => {
                            PayoffSpec::UpOutCall { strike, barrier: f.barrier.unwrap_or(1.3 * strike) }
                        }
                    });
                }
            }
            if !f.times.is_empty() {
                cfg.times = f.times.clone();
            }
            if f.min_robust.is_some() {
                cfg.checks.robust_frequency = f.min_robust;
            }
        }
        _ => {
            match f.model {
                Some(ModelArg::Merton) => cfg.model = Some(ModelBlock::ReferenceMerton),
                Some(ModelArg::Vg) => cfg.model = Some(ModelBlock::ReferenceVg),
                Some(ModelArg::Bs) => return Err(schema("pricing experiments use --model merton or vg")),
                None if cfg.model.is_none() && k != ExperimentKind::ReproduceTable => {
                    cfg.model = Some(ModelBlock::ReferenceMerton)
                }
                None => {}
            }
            let mut p = cfg.pricing.clone().unwrap_or_default();
            if let Some(s) = f.spot {
                p.spot = s;
            }
            if !f.strikes.is_empty() {
                p.strikes = f.strikes.clone();
            }
            if !f.maturities.is_empty() {
                p.maturities = f.maturities.clone();
            }
            if let Some(o) = f.order {
                p.order = o;
            }
            if k != ExperimentKind::ReproduceTable || p != PricingBlock::default() {
                cfg.pricing = Some(p);
            }
            if k != ExperimentKind::PriceExpansion && (f.paths.is_some() || f.steps_per_year.is_some() || cfg.mc.is_none())
            {
                let old = cfg.mc.unwrap_or(McBlock {
                    n_paths: 1_000_000,
                    steps_per_year: 250,
                    antithetic: true,
                    max_work: None,
                });
                cfg.mc = Some(McBlock {
                    n_paths: f.paths.unwrap_or(old.n_paths),
                    steps_per_year: f.steps_per_year.unwrap_or(old.steps_per_year),
                    ..old
                });
            }
            if k == ExperimentKind::ReproduceTable {
                if let Some(w) = f.which {
                    cfg.table = Some(match w {
                        TableArg::Merton => TableChoice::Merton,
                        TableArg::Vg => TableChoice::Vg,
                    });
                }
            }
            if k == ExperimentKind::ErrorCurves && !from_file {
                cfg.checks.monotone = Some(true);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_threads() -> Result<(), Error> {
    if let Ok(v) = std::env::var("PATHLAB_THREADS") {
        let n: usize = v.parse().map_err(|_| schema(format!("PATHLAB_THREADS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(schema("PATHLAB_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| schema(e.to_string()))?;
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    let class = classify(e);
    let label = match class {
        FailureClass::Schema => "configuration error",
        FailureClass::Numeric => "numerical failure",
        FailureClass::Io => "I/O error",
    };
    eprintln!("pathlab: {label}: {e}");
    ExitCode::from(class.exit_code() as u8)
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn emit(s: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{s}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    let (kind, flags) = kind_of(&cli.command);
    let cfg = match build_config(kind, flags) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if flags.dump_config {
        match cfg.to_json() {
            Ok(s) => {
                emit(&s);
                return ExitCode::SUCCESS;
            }
            Err(e) => return fail(&e),
        }
    }
    let summary = match run(&cfg) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    match serde_json::to_string_pretty(&summary) {
        Ok(s) => emit(&s),
        Err(e) => return fail(&Error::from(e)),
    }
    if summary.passed {
        ExitCode::SUCCESS
    } else {
        for c in summary.checks.iter().filter(|c| !c.pass) {
            eprintln!("pathlab: check {} failed: {} against limit {}", c.name, c.value, c.limit);
        }
        ExitCode::from(FailureClass::Numeric.exit_code() as u8)
    }
}
