//! `slide`: train, sweep, diagnose and reproduce the geometry and
//! convergence experiments from the command line.

mod output;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use slide_core::adversary::AdversaryConfig;
use slide_core::config::ExperimentConfig;
use slide_core::constraint::{ConstraintSpec, CriterionKind};
use slide_core::data::{split_and_standardize, Dataset, SplitSpec, SynthKind, SynthSpec};
use slide_core::eval::{
    accuracy, evaluate, mnf_diagnostic, pareto_sweep, write_pareto_csv, EvalOptions,
};
use slide_core::geometry::{
    analytic_1d_gaussian, analytic_gap_curve, simulate_convergence, toy_gap_curve,
    write_convergence_csv, GeometryConfig, SimulationConfig, BETA_FLOOR,
};
use slide_core::nn::ModelParams;
use slide_core::rng::derive_seed;
use slide_core::surrogate::SurrogateKind;
use slide_core::train::{select_model, train_restarts, write_trajectory_csv};

use output::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "slide",
    version,
    about = "Fairness-constrained classification with surrogate constraints"
)]
struct Cli {
    /// Master seed; every random component derives a named substream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for restarts and grid cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration; writes the model, its trajectory and a test report.
    Train(TrainArgs),
    /// Train a lambda grid and write the accuracy/fairness Pareto curve.
    Sweep(SweepArgs),
    /// Feasible-set gap curves, or the analytic one-dimensional example.
    Geometry(GeometryArgs),
    /// M_nf diagnostic of a saved model on a dataset.
    Diagnose(DiagnoseArgs),
    /// Convergence simulation: excess risk and fairness deviation per n.
    Simulate(SimulateArgs),
    /// Load or synthesize a dataset and dump it as CSV.
    Data(DataArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set train.lambda=VALUE`.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Lambda grid; defaults to `sweep.lambdas` from the config.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeometryKind {
    /// Pairwise-fairness toy on a 2-D law.
    Toy,
    /// Closed-form DI and hinge DI of the 1-D Gaussian groups example.
    Analytic1d,
}

#[derive(Debug, Args)]
struct GeometryArgs {
    #[arg(long, value_enum, default_value = "toy")]
    kind: GeometryKind,
    /// Geometry config (TOML) for `toy`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 2-D law for `toy`.
    #[arg(long)]
    dataset: Option<SynthKind>,
    /// Use the 200x200 parameter grid for `toy`.
    #[arg(long)]
    full_res: bool,
    /// Alpha levels of the gap curve.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Grid points per axis for `analytic1d`.
    #[arg(long, default_value_t = 101)]
    res: usize,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV as written by `data`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "di")]
    criterion: CriterionKind,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    /// UIF slack.
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    /// UIF perturbation radius.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Abort when `M_nf * tau / phi` exceeds this.
    #[arg(long, default_value_t = 0.10)]
    threshold: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Simulation config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    /// Replicates per sample size.
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Experiment config whose `[data]` section names the source.
    #[arg(long, conflicts_with = "synth")]
    config: Option<PathBuf>,
    #[arg(long)]
    synth: Option<SynthKind>,
    /// Rows drawn with `--synth`.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Also write standardized train/val/test parts.
    #[arg(long)]
    split: bool,
}

#[derive(Serialize)]
struct ErrorReport {
    error: String,
    kind: &'static str,
    causes: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error(&ErrorReport {
                error: e.kind().to_string(),
                kind: "usage",
                causes: vec![e.to_string().trim().to_string()],
            });
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(&ErrorReport {
                error: e.to_string(),
                kind: "runtime",
                causes: e.chain().skip(1).map(|c| c.to_string()).collect(),
            });
            ExitCode::FAILURE
        }
    }
}

fn emit_error(report: &ErrorReport) {
    let text = serde_json::to_string(report)
        .unwrap_or_else(|_| format!("{{\"error\":{:?}}}", report.error));
    let _ = writeln!(std::io::stderr(), "{text}");
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let g = Global {
        seed: cli.seed,
        out: cli.out,
        force: cli.force,
    };
    match cli.command {
        Command::Train(a) => cmd_train(&g, a),
        Command::Sweep(a) => cmd_sweep(&g, a),
        Command::Geometry(a) => cmd_geometry(&g, a),
        Command::Diagnose(a) => cmd_diagnose(&g, a),
        Command::Simulate(a) => cmd_simulate(&g, a),
        Command::Data(a) => cmd_data(&g, a),
    }
}

struct Global {
    seed: Option<u64>,
    out: PathBuf,
    force: bool,
}

impl Global {
    fn outputs(&self, names: &[&str]) -> Result<Outputs> {
        Outputs::new(&self.out, self.force, names)
    }

    /// Substream seed `name` of `--seed`, or `fallback` without one. Kept
    /// below 2^63 so config snapshots remain valid TOML.
    fn seed_for(&self, name: &str, fallback: u64) -> u64 {
        self.seed.map_or(fallback, |s| derive_seed(s, name, 0) >> 1)
    }
}

/// Load a config, apply overrides and `--seed`, and make data paths
/// absolute so the snapshot in the manifest is self-contained.
fn load_config(g: &Global, args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{o}`"))?;
        cfg.set(k.trim(), v.trim())
            .with_context(|| format!("--set {o}"))?;
    }
    if let Some(l) = args.lambda {
        cfg.set("train.lambda", &format!("{l:?}"))
            .context("--lambda")?;
    }
    cfg.train.seed = g.seed_for("train", cfg.train.seed);
    cfg.data.split.seed = g.seed_for("split", cfg.data.split.seed);
    for p in [&mut cfg.data.csv, &mut cfg.data.schema, &mut cfg.data.file]
        .into_iter()
        .flatten()
    {
        if let Ok(abs) = std::fs::canonicalize(&*p) {
            *p = abs;
        }
    }
    Ok(cfg)
}

fn experiment_seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([
        ("train".to_string(), cfg.train.seed),
        ("split".to_string(), cfg.data.split.seed),
        ("adversary".to_string(), cfg.train.seed),
    ])
}

fn cmd_train(g: &Global, a: TrainArgs) -> Result<()> {
    let cfg = load_config(g, &a.config)?;
    let out = g.outputs(&[
        "config.toml",
        "model.json",
        "trajectory.csv",
        "report.json",
        "runs.json",
    ])?;
    let (train, val, test, _) = cfg.load_splits().context("loading data")?;
    let tc = cfg.train_config();
    let runs = train_restarts(&train, &tc).context("training")?;
    // Among restarts: the fairest model within one point of the best
    // validation accuracy.
    let chosen = if runs.len() == 1 {
        &runs[0]
    } else {
        let best = runs
            .iter()
            .map(|r| accuracy(r.model(), &val))
            .collect::<slide_core::Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        select_model(&runs, &val, &cfg.constraint, &cfg.uif, best, 1.0, tc.seed)?
    };
    let mnf_tau = (cfg.surrogate.kind == SurrogateKind::Slide
        && matches!(
            cfg.constraint.criterion,
            CriterionKind::Di | CriterionKind::Uif
        ))
    .then_some(chosen.tau);
    let opts = EvalOptions {
        flip_columns: cfg.eval.flip_columns.clone(),
        mnf_tau,
        mnf_threshold: cfg.eval.mnf_threshold,
        adversary: cfg.uif,
        seed: tc.seed,
        ..Default::default()
    };
    let report = evaluate(chosen.model(), &test, &cfg.constraint, &opts).context("evaluating")?;

    out.write_text("config.toml", &cfg.to_toml()?)?;
    chosen.model().save(&out.path("model.json"))?;
    write_trajectory_csv(&out.path("trajectory.csv"), &chosen.trajectory)?;
    out.write_json("report.json", &report)?;
    // Timings live in the manifest so the artifacts stay reproducible.
    let mut summary = serde_json::to_value(&runs)?;
    for r in summary.as_array_mut().into_iter().flatten() {
        if let Some(obj) = r.as_object_mut() {
            obj.remove("wall_clock_secs");
        }
    }
    out.write_json("runs.json", &summary)?;
    println!("{}", serde_json::to_string(&report)?);
    out.finish("train", serde_json::to_value(&cfg)?, experiment_seeds(&cfg))?;
    Ok(())
}

fn cmd_sweep(g: &Global, a: SweepArgs) -> Result<()> {
    let cfg = load_config(g, &a.config)?;
    let lambdas = a.lambdas.unwrap_or_else(|| cfg.sweep.lambdas.clone());
    let out = g.outputs(&["config.toml", "pareto.csv", "pareto.json"])?;
    let (train, _, test, _) = cfg.load_splits().context("loading data")?;
    let points = pareto_sweep(&train, &test, &lambdas, &cfg.train_config())?;
    out.write_text("config.toml", &cfg.to_toml()?)?;
    write_pareto_csv(&out.path("pareto.csv"), &points)?;
    out.write_json("pareto.json", &points)?;
    let mut snapshot = serde_json::to_value(&cfg)?;
    snapshot["sweep"]["lambdas"] = serde_json::to_value(&lambdas)?;
    out.finish("sweep", snapshot, experiment_seeds(&cfg))?;
    Ok(())
}

fn load_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize)]
struct AnalyticRow {
    beta0: f64,
    beta: f64,
    di: f64,
    di_hinge: f64,
}

fn cmd_geometry(g: &Global, a: GeometryArgs) -> Result<()> {
    match a.kind {
        GeometryKind::Toy => {
            let mut cfg: GeometryConfig = match &a.config {
                Some(p) => load_toml(p)?,
                None => GeometryConfig::default(),
            };
            if let Some(d) = a.dataset {
                cfg.dataset = d;
            }
            if a.full_res {
                cfg = cfg.full_resolution();
            }
            if let Some(al) = a.alphas {
                cfg.alphas = al;
            }
            cfg.seed = g.seed_for("mc", cfg.seed);
            let out = g.outputs(&["gap_curve.csv", "gap_curve.json"])?;
            let curve = toy_gap_curve(&cfg)?;
            curve.write_csv(&out.path("gap_curve.csv"))?;
            out.write_json("gap_curve.json", &curve)?;
            let seeds = BTreeMap::from([("mc".to_string(), cfg.seed)]);
            out.finish("geometry", serde_json::to_value(&cfg)?, seeds)?;
        }
        GeometryKind::Analytic1d => {
            if a.res < 2 {
                bail!("--res must be >= 2");
            }
            let alphas = a
                .alphas
                .unwrap_or_else(|| (0..10).map(|k| 0.05 + 0.55 * k as f64 / 9.0).collect());
            let out = g.outputs(&["analytic1d.csv", "analytic_gap.csv", "analytic_gap.json"])?;
            let axis: Vec<f64> = (0..a.res)
                .map(|k| -1.0 + 2.0 * k as f64 / (a.res - 1) as f64)
                .collect();
            let mut w = csv::Writer::from_path(out.path("analytic1d.csv"))?;
            for &beta0 in &axis {
                for &beta in &axis {
                    if beta.abs() < BETA_FLOOR {
                        continue;
                    }
                    let (di, di_hinge) = analytic_1d_gaussian(beta0, beta)?;
                    w.serialize(AnalyticRow {
                        beta0,
                        beta,
                        di,
                        di_hinge,
                    })?;
                }
            }
            w.flush()?;
            let curve = analytic_gap_curve(a.res, &alphas, 201)?;
            curve.write_csv(&out.path("analytic_gap.csv"))?;
            out.write_json("analytic_gap.json", &curve)?;
            let config =
                serde_json::json!({ "kind": "analytic1d", "res": a.res, "alphas": alphas });
            out.finish("geometry", config, BTreeMap::new())?;
        }
    }
    Ok(())
}

fn cmd_diagnose(g: &Global, a: DiagnoseArgs) -> Result<()> {
    let out = g.outputs(&["mnf.json"])?;
    let model = ModelParams::load(&a.model)
        .with_context(|| format!("loading model {}", a.model.display()))?;
    let data =
        Dataset::read_csv(&a.data).with_context(|| format!("loading data {}", a.data.display()))?;
    let spec = ConstraintSpec::new(a.criterion).with_gamma(a.gamma);
    let adversary = AdversaryConfig {
        epsilon: a.epsilon,
        ..Default::default()
    };
    let seed = g.seed_for("adversary", 0);
    let report = mnf_diagnostic(&model, &data, &spec, a.tau, &adversary, seed, a.threshold)?;
    out.write_json("mnf.json", &report)?;
    println!("{}", serde_json::to_string(&report)?);
    let config = serde_json::json!({
        "model": a.model,
        "data": a.data,
        "constraint": spec,
        "tau": a.tau,
        "adversary": adversary,
        "threshold": a.threshold,
    });
    out.finish(
        "diagnose",
        config,
        BTreeMap::from([("adversary".to_string(), seed)]),
    )?;
    Ok(())
}

fn cmd_simulate(g: &Global, a: SimulateArgs) -> Result<()> {
    let mut cfg: SimulationConfig = match &a.config {
        Some(p) => load_toml(p)?,
        None => SimulationConfig::default(),
    };
    if let Some(n) = a.n_values {
        cfg.n_values = n;
    }
    if let Some(s) = a.seeds {
        cfg.seeds = s;
    }
    cfg.seed = g.seed_for("mc", cfg.seed);
    let out = g.outputs(&["convergence.csv", "convergence.json"])?;
    let rows = simulate_convergence(&cfg)?;
    write_convergence_csv(&out.path("convergence.csv"), &rows)?;
    out.write_json("convergence.json", &rows)?;
    let seeds = BTreeMap::from([("mc".to_string(), cfg.seed)]);
    out.finish("simulate", serde_json::to_value(&cfg)?, seeds)?;
    Ok(())
}

fn cmd_data(g: &Global, a: DataArgs) -> Result<()> {
    let mut names = vec!["data.csv"];
    if a.split {
        names.extend(["train.csv", "val.csv", "test.csv", "standardizer.json"]);
    }
    let out = g.outputs(&names)?;
    let (data, split, config, seed) = match (&a.config, a.synth) {
        (Some(path), _) => {
            let cfg = load_config(
                g,
                &ConfigArgs {
                    config: path.clone(),
                    overrides: Vec::new(),
                    lambda: None,
                },
            )?;
            let data = cfg.load_dataset().context("loading data")?;
            (
                data,
                cfg.data.split,
                serde_json::to_value(&cfg.data)?,
                cfg.train.seed,
            )
        }
        (None, Some(kind)) => {
            let seed = g.seed_for("train", 0);
            let spec = SynthSpec::default_for(kind);
            let data = spec.generate(a.n, seed)?;
            let split = SplitSpec {
                seed: g.seed_for("split", 0),
                ..Default::default()
            };
            let config = serde_json::json!({ "synth": spec, "n": a.n, "split": split });
            (data, split, config, seed)
        }
        (None, None) => bail!("data needs --config or --synth"),
    };
    data.write_csv(&out.path("data.csv"))?;
    if a.split {
        let (tr, va, te, st) = split_and_standardize(&data, &split)?;
        tr.write_csv(&out.path("train.csv"))?;
        va.write_csv(&out.path("val.csv"))?;
        te.write_csv(&out.path("test.csv"))?;
        out.write_json("standardizer.json", &st)?;
    }
    let seeds = BTreeMap::from([
        ("data".to_string(), seed),
        ("split".to_string(), split.seed),
    ]);
    out.finish("data", config, seeds)?;
    Ok(())
}
