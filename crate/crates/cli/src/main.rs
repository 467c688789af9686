use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use icboost::cir::{
    max_cir_distribution, simulate_maxima, CirConfig, MaxLawForm, TauGrid,
};
use icboost::simlab::{
    bound_tightness_study, linear_case_experiment, multi_feature_bias_curve, root_stump_study,
    write_curve_csv, write_linear_case_csv, write_tightness_csv, DgpKind, DgpSpec, Estimator,
};
use icboost::{load_csv, load_feature_csv, load_model, save_model, train, BoostConfig, Error, LossKind};

const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;
const EXIT_IO: u8 = 74;

#[derive(Parser, Debug)]
#[command(name = "icboost", version, about = "Gradient tree boosting with information-criterion stopping")]
struct Cli {
    /// Read extra `key=value` settings (flag names without dashes) from FILE;
    /// flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a CSV file and save it.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Predict with a saved model.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Fit the law of the CIR maximum over a split grid.
    #[command(name = "simulate-cir", args_override_self = true)]
    SimulateCir(SimulateArgs),
    /// Run a simulation study and write CSV results.
    #[command(args_override_self = true)]
    Study(StudyArgs),
}

#[derive(Args, Debug, Clone)]
struct CirArgs {
    /// Monte-Carlo paths per fitted law.
    #[arg(long, default_value_t = 1000)]
    paths: usize,
    /// Quantile clamp of the time transform.
    #[arg(long, default_value_t = 1e-7)]
    epsilon: f64,
    /// Share fitted laws between nodes with identical split grids.
    #[arg(long)]
    cache_laws: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl CirArgs {
    fn config(&self) -> CirConfig {
        CirConfig {
            epsilon: self.epsilon,
            n_paths: self.paths,
            seed: self.seed,
            cache_laws: self.cache_laws,
            ..CirConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long, default_value = "mse", value_parser = ["mse", "logloss"])]
    loss: String,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iterations: usize,
    /// Where to write the model.
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[command(flatten)]
    cir: CirArgs,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV; columns in training order.
    #[arg(long)]
    data: PathBuf,
    /// Column to ignore, e.g. the response in a training file.
    #[arg(long)]
    target: Option<String>,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report probabilities instead of log-odds for log-loss models.
    #[arg(long)]
    probability: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Grid of `a` equally spaced split quantiles.
    #[arg(long, conflicts_with_all = ["grid_file", "dense"])]
    splits: Option<usize>,
    /// File of split quantiles u in (0, 1), one per line.
    #[arg(long, conflicts_with = "dense")]
    grid_file: Option<PathBuf>,
    /// Evenly spaced grid of this many points over the whole time range.
    #[arg(long)]
    dense: Option<usize>,
    /// Write the simulated maxima to this CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cir: CirArgs,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// root-stump, multi-feature, linear-case or bound-tightness.
    #[arg(long)]
    study: String,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Split points of the feature (a + 1 distinct values); continuous if absent.
    #[arg(long)]
    a: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// noise, step, linear or linear_u04.
    #[arg(long, default_value = "noise")]
    dgp: String,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,
    /// Test draws of the oracle per replica.
    #[arg(long, default_value_t = 1000)]
    test_mc: usize,
    /// Feature counts for the multi-feature study.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 5, 10, 20, 50])]
    m_list: Vec<usize>,
    /// Split-point counts for the bound-tightness study.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4, 9, 49, 99])]
    a_list: Vec<usize>,
    /// Total feature count for linear cases 2 and 3 (default 10000).
    #[arg(long)]
    features: Option<usize>,
    /// Number of consecutive seeds for the linear case.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 0.01)]
    learning_rate: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cir: CirArgs,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

/// Splices `--key=value` pairs from a config file right after the subcommand,
/// so later command-line flags override them.
fn expand_config(args: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let path = match args[pos].strip_prefix("--config=") {
        Some(p) => p.to_string(),
        None => args
            .get(pos + 1)
            .cloned()
            .ok_or_else(|| Failure::Usage("--config needs a file".into()))?,
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io { path: path.clone().into(), source: e })?;
    let mut extra = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{path}:{}: expected key=value", k + 1)))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            v => extra.push(format!("--{key}={v}")),
        }
    }
    let mut rest: Vec<String> = args.clone();
    let drop = if args[pos].starts_with("--config=") { 1 } else { 2 };
    rest.drain(pos..pos + drop);
    let sub = rest
        .iter()
        .position(|a| ["train", "predict", "simulate-cir", "study"].contains(&a.as_str()))
        .ok_or_else(|| Failure::Usage("missing subcommand".into()))?;
    rest.splice(sub + 1..sub + 1, extra);
    Ok(rest)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> CmdResult {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Error::Io { path: path.into(), source: e }.into()),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::Io { path: "<stdout>".into(), source: e }.into()),
    }
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let loss = LossKind::from_name(&args.loss).map_err(|e| Failure::Usage(e.to_string()))?;
    let data = load_csv(&args.data, &args.target)?;
    let cfg = BoostConfig {
        loss,
        learning_rate: args.learning_rate,
        max_iterations: args.max_iterations,
        cir: args.cir.config(),
        seed: args.cir.seed,
    };
    let model = train(&data, &cfg)?;
    save_model(&model, &args.out)?;
    let trace = &model.trace;
    let leaves: Vec<String> = trace.leaf_counts().iter().map(|c| c.to_string()).collect();
    println!("seed: {}", cfg.seed);
    println!("iterations: {}", model.n_trained());
    println!("stop: {:?}", trace.stop_reason.expect("training sets a stop reason"));
    println!("initial training loss: {}", trace.initial_loss);
    println!("final training loss: {}", trace.final_train_loss());
    println!("leaf counts: {}", leaves.join(" "));
    println!("model: {}", args.out.display());
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> CmdResult {
    let model = load_model(&args.model)?;
    let features = load_feature_csv(&args.data, args.target.as_deref())?;
    let preds = if args.probability {
        model.predict_probability(&features)?
    } else {
        model.predict(&features)?
    };
    let mut text = String::from("prediction\n");
    for p in preds {
        text.push_str(&p.to_string());
        text.push('\n');
    }
    write_output(args.out.as_deref(), text.as_bytes())
}

fn read_grid_file(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            l.trim().parse::<f64>().map_err(|e| {
                Failure::Lib(Error::Parse {
                    row: k + 1,
                    column: "u".into(),
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let cfg = args.cir.config();
    cfg.validate()?;
    let grid = match (args.splits, &args.grid_file, args.dense) {
        (Some(a), None, None) => TauGrid::equal_groups(a, cfg.epsilon)?,
        (None, Some(path), None) => TauGrid::from_quantiles(&read_grid_file(path)?, cfg.epsilon)?,
        (None, None, Some(points)) => TauGrid::dense_full_range(points, cfg.epsilon)?,
        _ => return Err(Failure::Usage("give one of --splits, --grid-file or --dense".into())),
    };
    let law = max_cir_distribution(&grid, &cfg)?;
    if let Some(out) = &args.out {
        let maxima = simulate_maxima(&grid, cfg.n_paths, cfg.seed, cfg.execution);
        let mut text = String::from("max\n");
        for m in maxima {
            text.push_str(&m.to_string());
            text.push('\n');
        }
        write_output(Some(out), text.as_bytes())?;
    }
    let form = match law.form {
        MaxLawForm::ExactGammaSinglePoint => "exact_gamma",
        MaxLawForm::Gumbel => "gumbel",
    };
    println!("grid points: {}", grid.len());
    println!("form: {form}");
    println!("location: {}", law.location);
    println!("scale: {}", law.scale);
    println!("mean: {}", law.mean());
    Ok(())
}

fn cmd_study(args: StudyArgs) -> CmdResult {
    let cfg = args.cir.config();
    let seed = args.cir.seed;
    let mut buf = Vec::new();
    match args.study.as_str() {
        "root-stump" => {
            let kind = DgpKind::from_name(&args.dgp).map_err(|e| Failure::Usage(e.to_string()))?;
            let spec = DgpSpec {
                sigma: args.sigma,
                ..DgpSpec::new(kind, args.n, args.a.map(|a| a + 1))
            };
            let result = root_stump_study(&spec, args.replicas, args.test_mc, &cfg, seed)?;
            result.write_csv(&mut buf)?;
            let adj = result.summary(Estimator::Adjusted);
            log::info!("P(R_adj > 0) = {}", adj.p_positive);
        }
        "multi-feature" => {
            let points = multi_feature_bias_curve(
                &args.m_list,
                args.a.map(|a| a + 1),
                args.n,
                args.replicas,
                args.test_mc,
                &cfg,
                seed,
            )?;
            write_curve_csv(&points, &mut buf)?;
        }
        "bound-tightness" => {
            let points = bound_tightness_study(args.n, &args.a_list, args.replicas, &cfg, seed)?;
            write_tightness_csv(&points, &mut buf)?;
        }
        "linear-case" => {
            let boost = BoostConfig {
                learning_rate: args.learning_rate,
                cir: cfg,
                seed,
                ..BoostConfig::default()
            };
            let results = (seed..seed + args.seeds.max(1))
                .map(|s| linear_case_experiment(args.case, s, &boost, args.features).map(|r| (s, r)))
                .collect::<Result<Vec<_>, _>>()?;
            write_linear_case_csv(&results, &mut buf)?;
        }
        other => return Err(Failure::Usage(format!("unknown study `{other}`"))),
    }
    write_output(args.out.as_deref(), &buf)
}

fn run() -> Result<(), (u8, String)> {
    let args = expand_config(std::env::args().collect()).map_err(report)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err((EXIT_USAGE, e.to_string().trim_end().to_string()));
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err((EXIT_USAGE, "--threads must be at least 1".into()));
        }
        icboost::par::configure_threads(threads);
    }
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::SimulateCir(a) => cmd_simulate(a),
        Command::Study(a) => cmd_study(a),
    };
    result.map_err(report)
}

fn report(f: Failure) -> (u8, String) {
    match f {
        Failure::Usage(msg) => (EXIT_USAGE, format!("error: {msg}")),
        Failure::Lib(e) => {
            let code = match e {
                Error::Io { .. } => EXIT_IO,
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            };
            (code, format!("error: {e}"))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
