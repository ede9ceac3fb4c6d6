//! The `edgecast` command line.
//!
//! Every subcommand accepts `--config <file>`, `--seed`, `--out <dir>` and
//! `--jobs`. Values given as flags override the config file, which overrides
//! built-in defaults. Exit codes: 0 success, 1 domain error, 2 usage error.
//!
//! A config file is TOML. Top-level keys name inputs and run settings; the
//! `[synth]`, `[train]` and `[cost]` tables hold generator, training and
//! planner parameters:
//!
//! ```toml
//! traces = "out/traces.csv"
//! seed = 11
//!
//! [train]
//! epochs = 30
//!
//! [cost]
//! sla_penalty = 50.0
//! ```

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::forecast::{load_model, prepare_series_with, save_model, ForecastModel, TrainConfig};
use crate::metrics::{emit_eval_csv, emit_residual_csv, evaluate, persistence_baseline};
use crate::planner::{
    emit_cost_summary_csv, emit_plan_csv, parse_cost_summary_csv, parse_plan_csv, plan_cost, plan_horizon,
    verify_plan, CostConfig, DemandMatrix,
};
use crate::simulator::{compare_with_models, emit_comparison_csv, emit_plot_csv, train_all, ForecastMode};
use crate::trace_model::{
    default_catalog, default_fleet, emit_trace_csv, generate_synthetic_traces, parse_catalog_csv, parse_fleet_csv,
    parse_trace_csv, ContainerFlavor, ServerSpec, SynthConfig, TraceSeries,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// Settings that can come from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub traces: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub fleet: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub horizon: Option<usize>,
    /// `rolling` or `recursive`.
    pub forecast_mode: Option<String>,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub cost: CostConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "edgecast", version, about = "Edge bandwidth forecasting and server allocation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for per-provider work (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub window_length: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub hidden_size: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: Option<u64>,
    /// Stop once the training loss plateaus.
    #[arg(long)]
    pub early_stop: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FleetFlags {
    /// Fleet CSV (default: five identical 400 Mbps servers).
    #[arg(long)]
    pub fleet: Option<PathBuf>,
    /// Container flavor CSV (default: small, medium, large).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace corpus (`traces.csv`).
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        providers: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        days: Option<u64>,
        #[arg(long)]
        noise_std: Option<f64>,
        #[arg(long)]
        burst_probability: Option<f64>,
    },
    /// Train one forecaster per provider (`models/`, `loss_history.csv`).
    Train {
        #[command(flatten)]
        common: Common,
        /// Trace CSV.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Forecast the hours after each trace ends (`forecast.csv`, trace format).
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Directory of model files written by `train`.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Hours to forecast (default 24).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: Option<u64>,
    },
    /// Score saved models and the persistence baseline on the test split
    /// (`eval.csv`, `residuals.csv`).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Plan server allocation (`plan.csv`, `cost_summary.csv`).
    ///
    /// Demand is either a trace-format file (`--demand`) or a forecast of
    /// `--horizon` hours from `--traces` and `--models`.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demand: Option<PathBuf>,
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        horizon: Option<u64>,
        #[command(flatten)]
        fleet: FleetFlags,
        /// Fail when any provider-hour is left unassigned.
        #[arg(long)]
        strict: bool,
        /// Re-read the written plan and check its invariants and cost.
        #[arg(long)]
        verify: bool,
    },
    /// Compare FORECAST, PERSISTENCE, STATIC and ORACLE planning on the
    /// held-out hours (`comparison.csv`, `plot_<strategy>.csv`,
    /// `plan_<strategy>.csv`).
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Trained models; trains fresh ones when omitted.
        #[arg(long)]
        models: Option<PathBuf>,
        #[command(flatten)]
        fleet: FleetFlags,
        #[command(flatten)]
        train_flags: TrainFlags,
        /// `rolling` (one step from actual history) or `recursive`.
        #[arg(long)]
        forecast_mode: Option<String>,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Resolved {
    cfg: RunConfig,
    out: PathBuf,
    pool: rayon::ThreadPool,
}

fn resolve(common: &Common) -> Result<Resolved, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(seed) = cfg.seed {
        cfg.synth.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = Some(jobs as usize);
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder.build().map_err(domain)?;
    Ok(Resolved { cfg, out, pool })
}

fn apply_train_flags(cfg: &mut TrainConfig, flags: &TrainFlags) {
    if let Some(v) = flags.window_length {
        cfg.window_length = v as usize;
    }
    if let Some(v) = flags.hidden_size {
        cfg.hidden_size = v as usize;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v as usize;
    }
    if flags.early_stop {
        cfg.early_stop = true;
    }
}

fn pick(flag: &Option<PathBuf>, config: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| config.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{what} (or `{what}` in the config file)")))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| domain(format!("cannot read {}: {e}", path.display())))
}

fn write(dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| domain(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| domain(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn load_traces(path: &Path) -> Result<Vec<TraceSeries>, CliError> {
    let traces = parse_trace_csv(&read(path)?).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    if traces.is_empty() {
        return Err(domain(format!("{} holds no traces", path.display())));
    }
    Ok(traces)
}

fn load_fleet(flags: &FleetFlags, cfg: &RunConfig) -> Result<(Vec<ServerSpec>, Vec<ContainerFlavor>), CliError> {
    let fleet = match flags.fleet.clone().or_else(|| cfg.fleet.clone()) {
        Some(p) => parse_fleet_csv(&read(&p)?).map_err(|e| domain(format!("{}: {e}", p.display())))?,
        None => default_fleet(),
    };
    let catalog = match flags.catalog.clone().or_else(|| cfg.catalog.clone()) {
        Some(p) => parse_catalog_csv(&read(&p)?).map_err(|e| domain(format!("{}: {e}", p.display())))?,
        None => default_catalog(),
    };
    Ok((fleet, catalog))
}

/// File name for a provider's model: characters outside `[A-Za-z0-9_.-]`
/// become `_`.
pub fn model_file_name(provider_id: &str) -> String {
    let safe: String = provider_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

fn model_names(traces: &[TraceSeries]) -> Result<Vec<String>, CliError> {
    let mut seen = HashSet::new();
    traces
        .iter()
        .map(|t| {
            let name = model_file_name(t.provider_id());
            if !seen.insert(name.clone()) {
                return Err(domain(format!("provider ids collide on model file {name}")));
            }
            Ok(name)
        })
        .collect()
}

fn load_models(dir: &Path, traces: &[TraceSeries]) -> Result<Vec<ForecastModel>, CliError> {
    let names = model_names(traces)?;
    traces
        .iter()
        .zip(names)
        .map(|(t, name)| {
            let path = dir.join(name);
            let bytes = fs::read(&path).map_err(|_| {
                domain(format!("no model for provider {} (expected {})", t.provider_id(), path.display()))
            })?;
            let model = load_model(&bytes).map_err(|e| domain(format!("{}: {e}", path.display())))?;
            if model.provider_id != t.provider_id() {
                return Err(domain(format!(
                    "{} holds a model for {}, not {}",
                    path.display(),
                    model.provider_id,
                    t.provider_id()
                )));
            }
            Ok(model)
        })
        .collect()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen {
            common,
            providers,
            days,
            noise_std,
            burst_probability,
        } => {
            let Resolved { mut cfg, out, .. } = resolve(&common)?;
            if let Some(v) = providers {
                cfg.synth.provider_count = v as usize;
            }
            if let Some(v) = days {
                cfg.synth.days = v as usize;
            }
            if let Some(v) = noise_std {
                cfg.synth.noise_std = v;
            }
            if let Some(v) = burst_probability {
                cfg.synth.burst_probability = v;
            }
            cfg.synth.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let traces = generate_synthetic_traces(&cfg.synth).map_err(domain)?;
            let path = write(&out, "traces.csv", emit_trace_csv(&traces).as_bytes())?;
            println!(
                "wrote {} providers x {} hours to {}",
                traces.len(),
                cfg.synth.days * 24,
                path.display()
            );
        }
        Command::Train { common, traces, train } => {
            let Resolved { mut cfg, out, pool } = resolve(&common)?;
            apply_train_flags(&mut cfg.train, &train);
            cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let traces = load_traces(&pick(&traces, &cfg.traces, "traces")?)?;
            let names = model_names(&traces)?;
            let models = pool.install(|| train_all(&traces, &cfg.train)).map_err(domain)?;
            let dir = out.join("models");
            let mut history = String::from("provider_id,epoch,loss\n");
            for (model, name) in models.iter().zip(&names) {
                write(&dir, name, &save_model(model))?;
                for (epoch, loss) in model.training_loss_history.iter().enumerate() {
                    history.push_str(&format!("{},{},{}\n", model.provider_id, epoch + 1, loss));
                }
            }
            write(&out, "loss_history.csv", history.as_bytes())?;
            println!("trained {} models into {}", models.len(), dir.display());
        }
        Command::Predict {
            common,
            traces,
            models,
            horizon,
        } => {
            let Resolved { cfg, out, .. } = resolve(&common)?;
            let horizon = horizon.map(|h| h as usize).or(cfg.horizon).unwrap_or(24);
            let traces = load_traces(&pick(&traces, &cfg.traces, "traces")?)?;
            let models = load_models(&pick(&models, &cfg.models, "models")?, &traces)?;
            let forecast = forecast_traces(&traces, &models, horizon)?;
            let path = write(&out, "forecast.csv", emit_trace_csv(&forecast).as_bytes())?;
            println!("forecast {horizon} hours for {} providers into {}", forecast.len(), path.display());
        }
        Command::Evaluate { common, traces, models } => {
            let Resolved { cfg, out, .. } = resolve(&common)?;
            let traces = load_traces(&pick(&traces, &cfg.traces, "traces")?)?;
            let models = load_models(&pick(&models, &cfg.models, "models")?, &traces)?;
            let mut reports = Vec::new();
            for (t, m) in traces.iter().zip(&models) {
                let prepared = prepare_series_with(t, m.norm, &m.config)
                    .map_err(|e| domain(format!("provider {}: {e}", t.provider_id())))?;
                let lstm = evaluate(m, &prepared.test).map_err(domain)?;
                let naive = persistence_baseline(t.provider_id(), &prepared.test).map_err(domain)?;
                reports.push(lstm);
                reports.push(naive);
            }
            let rows: Vec<_> = reports
                .iter()
                .enumerate()
                .map(|(i, r)| (r, if i % 2 == 0 { "lstm" } else { "persistence" }))
                .collect();
            write(&out, "eval.csv", emit_eval_csv(&rows).as_bytes())?;
            write(&out, "residuals.csv", emit_residual_csv(&rows).as_bytes())?;
            let beaten = reports.chunks(2).filter(|p| p[0].mse < p[1].mse).count();
            println!("lstm beats persistence on {beaten} of {} providers", traces.len());
        }
        Command::Plan {
            common,
            demand,
            traces,
            models,
            horizon,
            fleet,
            strict,
            verify,
        } => {
            let Resolved { cfg, out, .. } = resolve(&common)?;
            cfg.cost.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let (fleet, catalog) = load_fleet(&fleet, &cfg)?;
            let series = match demand.or(cfg.demand.clone()) {
                Some(path) => load_traces(&path)?,
                None => {
                    let traces = load_traces(&pick(&traces, &cfg.traces, "traces` or `--demand")?)?;
                    let models = load_models(&pick(&models, &cfg.models, "models")?, &traces)?;
                    let horizon = horizon.map(|h| h as usize).or(cfg.horizon).unwrap_or(24);
                    forecast_traces(&traces, &models, horizon)?
                }
            };
            let matrix = demand_matrix(&series)?;
            let plan = plan_horizon(&matrix, &fleet, &catalog, &cfg.cost).map_err(domain)?;
            let plan_text = emit_plan_csv(&plan);
            write(&out, "plan.csv", plan_text.as_bytes())?;
            write(&out, "cost_summary.csv", emit_cost_summary_csv(&plan.cost).as_bytes())?;
            println!(
                "planned {} providers x {} hours: total cost {}, {} migrations, {} server-hours, {} unassigned",
                plan.providers(),
                plan.hours(),
                plan.cost.total,
                plan.migration_count(),
                plan.server_on_hours(),
                plan.unassigned_count()
            );
            if verify {
                let mut back = parse_plan_csv(&read(&out.join("plan.csv"))?, &fleet, &catalog).map_err(domain)?;
                back.cost = plan_cost(&back, &matrix, &fleet, &cfg.cost).map_err(domain)?;
                verify_plan(&back, &matrix, &fleet, &cfg.cost).map_err(domain)?;
                let summary = parse_cost_summary_csv(&read(&out.join("cost_summary.csv"))?).map_err(domain)?;
                if summary != back.cost {
                    return Err(domain("cost summary does not match the plan file"));
                }
                println!("verified plan.csv");
            }
            if strict && plan.unassigned_count() > 0 {
                return Err(domain(format!(
                    "{} provider-hours are unassigned (--strict)",
                    plan.unassigned_count()
                )));
            }
        }
        Command::Simulate {
            common,
            traces,
            models,
            fleet,
            train_flags,
            forecast_mode,
        } => {
            let Resolved { mut cfg, out, pool } = resolve(&common)?;
            apply_train_flags(&mut cfg.train, &train_flags);
            cfg.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            cfg.cost.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let mode = match forecast_mode.or(cfg.forecast_mode.clone()).as_deref() {
                None | Some("rolling") => ForecastMode::Rolling,
                Some("recursive") => ForecastMode::Recursive,
                Some(other) => {
                    return Err(CliError::Usage(format!(
                        "forecast mode must be rolling or recursive, got {other:?}"
                    )))
                }
            };
            let (fleet, catalog) = load_fleet(&fleet, &cfg)?;
            let traces = load_traces(&pick(&traces, &cfg.traces, "traces")?)?;
            let comparison = pool.install(|| -> Result<_, CliError> {
                let models = match models.or(cfg.models.clone()) {
                    Some(dir) => load_models(&dir, &traces)?,
                    None => train_all(&traces, &cfg.train).map_err(domain)?,
                };
                compare_with_models(&traces, &models, &fleet, &catalog, &cfg.cost, mode).map_err(domain)
            })?;
            let reports = comparison.reports();
            let table = emit_comparison_csv(&reports);
            write(&out, "comparison.csv", table.as_bytes())?;
            for run in &comparison.runs {
                let name = run.strategy.name().to_ascii_lowercase();
                let plot = emit_plot_csv(&run.report, &run.planned).map_err(domain)?;
                write(&out, &format!("plot_{name}.csv"), plot.as_bytes())?;
                write(&out, &format!("plan_{name}.csv"), emit_plan_csv(&run.plan).as_bytes())?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

/// Forecasts `horizon` hours past the end of each trace from its last `L`
/// samples, as trace series continuing the input timestamps.
fn forecast_traces(
    traces: &[TraceSeries],
    models: &[ForecastModel],
    horizon: usize,
) -> Result<Vec<TraceSeries>, CliError> {
    traces
        .iter()
        .zip(models)
        .map(|(t, m)| {
            let l = m.window_length();
            if t.len() < l {
                return Err(domain(format!(
                    "provider {}: {} samples is shorter than the window length {l}",
                    t.provider_id(),
                    t.len()
                )));
            }
            let values = m
                .predict_horizon(&t.samples()[t.len() - l..], horizon)
                .map_err(|e| domain(format!("provider {}: {e}", t.provider_id())))?;
            let values = values.into_iter().map(|v| v.max(0.0)).collect();
            TraceSeries::new(t.provider_id(), t.timestamp(t.len()), values).map_err(domain)
        })
        .collect()
}

fn demand_matrix(series: &[TraceSeries]) -> Result<DemandMatrix, CliError> {
    let first = &series[0];
    for s in series {
        if s.len() != first.len() || s.start() != first.start() {
            return Err(domain(format!(
                "demand for {} does not cover the same hours as {}",
                s.provider_id(),
                first.provider_id()
            )));
        }
    }
    let ids = series.iter().map(|s| s.provider_id().to_string()).collect();
    let columns: Vec<Vec<f64>> = series.iter().map(|s| s.samples().to_vec()).collect();
    DemandMatrix::from_columns(ids, &columns).map_err(domain)
}
