//! Replaying allocation plans against actual demand and comparing planning
//! strategies end to end.
//!
//! A provider-hour is violated when the provider is unassigned, or when the
//! actual demand of everyone on its server that hour exceeds the server's
//! bandwidth. Overload is charged to every assignee of the server-hour.

use std::fmt;

use rayon::prelude::*;

use crate::forecast::{train, ForecastError, ForecastModel, TrainConfig};
use crate::planner::{
    plan_cost, plan_horizon, within, AllocationPlan, CostBreakdown, CostConfig, DemandMatrix, PlanError,
};
use crate::seed::derive_named_seed;
use crate::trace_model::{ContainerFlavor, ServerSpec, TraceSeries};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("provider {provider}: {source}")]
    Forecast {
        provider: String,
        #[source]
        source: ForecastError,
    },
    #[error("traces too short: {0}")]
    TooShort(String),
    #[error("traces disagree: {0}")]
    Mismatch(String),
    #[error("report file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Forecast,
    Persistence,
    Static,
    Oracle,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Forecast, Strategy::Persistence, Strategy::Static, Strategy::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Forecast => "FORECAST",
            Strategy::Persistence => "PERSISTENCE",
            Strategy::Static => "STATIC",
            Strategy::Oracle => "ORACLE",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub hour: usize,
    pub provider_id: String,
    /// `None` for unassigned provider-hours.
    pub server_id: Option<String>,
    pub actual_mbps: f64,
}

/// One provider-hour of a replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub hour: usize,
    pub provider_id: String,
    pub actual_mbps: f64,
    pub server_id: Option<String>,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub strategy: String,
    /// Energy, bandwidth and migration priced on actual demand; sla is
    /// `violations * sla_penalty`.
    pub cost: CostBreakdown,
    pub violations: usize,
    /// Hour-major, providers in plan order.
    pub violation_log: Vec<Violation>,
    pub migrations: usize,
    pub server_on_hours: usize,
    pub rows: Vec<ReplayRow>,
}

impl SimulationReport {
    pub fn named(mut self, strategy: impl Into<String>) -> Self {
        self.strategy = strategy.into();
        self
    }

    pub fn summary(&self) -> StrategySummary {
        StrategySummary {
            strategy: self.strategy.clone(),
            cost: self.cost,
            violations: self.violations,
            migrations: self.migrations,
            server_on_hours: self.server_on_hours,
        }
    }
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySummary {
    pub strategy: String,
    pub cost: CostBreakdown,
    pub violations: usize,
    pub migrations: usize,
    pub server_on_hours: usize,
}

/// Replays `plan` against `actual`. Pure; the strategy name is left empty.
pub fn simulate(
    plan: &AllocationPlan,
    actual: &DemandMatrix,
    fleet: &[ServerSpec],
    cfg: &CostConfig,
) -> Result<SimulationReport, SimError> {
    let priced = plan_cost(plan, actual, fleet, cfg)?;
    let servers = fleet.len();
    let mut violation_log = Vec::new();
    let mut rows = Vec::with_capacity(plan.hours() * plan.providers());
    for (t, assignment) in plan.assignment.iter().enumerate() {
        let mut load = vec![0.0; servers];
        for (p, a) in assignment.iter().enumerate() {
            if let Some(s) = a {
                load[*s] += actual.get(t, p);
            }
        }
        let overloaded: Vec<bool> = (0..servers)
            .map(|s| !within(load[s], fleet[s].bandwidth_capacity))
            .collect();
        for (p, a) in assignment.iter().enumerate() {
            let violated = a.is_none_or(|s| overloaded[s]);
            let server_id = a.map(|s| fleet[s].server_id.clone());
            if violated {
                violation_log.push(Violation {
                    hour: t,
                    provider_id: plan.provider_ids[p].clone(),
                    server_id: server_id.clone(),
                    actual_mbps: actual.get(t, p),
                });
            }
            rows.push(ReplayRow {
                hour: t,
                provider_id: plan.provider_ids[p].clone(),
                actual_mbps: actual.get(t, p),
                server_id,
                violated,
            });
        }
    }
    let violations = violation_log.len();
    Ok(SimulationReport {
        strategy: String::new(),
        cost: CostBreakdown::new(
            priced.energy,
            priced.bandwidth,
            priced.migration,
            violations as f64 * cfg.sla_penalty,
        ),
        violations,
        violation_log,
        migrations: plan.migration_count(),
        server_on_hours: plan.server_on_hours(),
        rows,
    })
}

/// How FORECAST demand is produced over the evaluation horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForecastMode {
    /// Each hour is predicted from the `L` actual hours before it.
    #[default]
    Rolling,
    /// One iterated forecast from the last `L` training hours.
    Recursive,
}

/// Everything produced by one comparison run.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub strategy: Strategy,
    /// Demand the plan was computed from.
    pub planned: DemandMatrix,
    pub plan: AllocationPlan,
    pub report: SimulationReport,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// First hour of the evaluation horizon within the input traces.
    pub horizon_start: usize,
    pub actual: DemandMatrix,
    pub runs: Vec<StrategyRun>,
}

impl Comparison {
    pub fn reports(&self) -> Vec<SimulationReport> {
        self.runs.iter().map(|r| r.report.clone()).collect()
    }

    pub fn run(&self, strategy: Strategy) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.strategy == strategy)
    }
}

/// First hour whose window lands in the test split of `train`.
pub fn horizon_start(len: usize, cfg: &TrainConfig) -> Result<usize, SimError> {
    let l = cfg.window_length;
    if len <= l + 1 {
        return Err(SimError::TooShort(format!("{len} hours with window length {l}")));
    }
    let n_windows = len - l;
    let n_train = (cfg.train_fraction * n_windows as f64).floor() as usize;
    if n_train == 0 || n_train >= n_windows {
        return Err(SimError::TooShort(format!(
            "{n_windows} windows leave no training or evaluation hours"
        )));
    }
    Ok(l + n_train)
}

/// Trains one model per provider in parallel on the current rayon pool.
/// Each provider's seed is derived from `cfg.seed` and its id.
pub fn train_all(traces: &[TraceSeries], cfg: &TrainConfig) -> Result<Vec<ForecastModel>, SimError> {
    traces
        .par_iter()
        .map(|series| {
            let provider_cfg = TrainConfig {
                seed: derive_named_seed(cfg.seed, series.provider_id()),
                ..cfg.clone()
            };
            train(series, &provider_cfg).map_err(|source| SimError::Forecast {
                provider: series.provider_id().to_string(),
                source,
            })
        })
        .collect()
}

fn check_aligned(traces: &[TraceSeries]) -> Result<usize, SimError> {
    let first = traces
        .first()
        .ok_or_else(|| SimError::TooShort("no traces".into()))?;
    for t in traces {
        if t.len() != first.len() || t.start() != first.start() {
            return Err(SimError::Mismatch(format!(
                "{} does not cover the same hours as {}",
                t.provider_id(),
                first.provider_id()
            )));
        }
    }
    Ok(first.len())
}

/// Trains per-provider forecasters, then plans and replays the held-out
/// horizon under all four strategies.
pub fn run_strategy_comparison(
    traces: &[TraceSeries],
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
    cost_cfg: &CostConfig,
    train_cfg: &TrainConfig,
    mode: ForecastMode,
) -> Result<Comparison, SimError> {
    check_aligned(traces)?;
    let models = train_all(traces, train_cfg)?;
    compare_with_models(traces, &models, fleet, catalog, cost_cfg, mode)
}

type PerTrace<'a> = dyn Fn(&TraceSeries, usize) -> Result<Vec<f64>, SimError> + 'a;

/// Strategy comparison with already trained models (one per trace, same
/// order). The horizon follows the models' own window length and split.
pub fn compare_with_models(
    traces: &[TraceSeries],
    models: &[ForecastModel],
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
    cost_cfg: &CostConfig,
    mode: ForecastMode,
) -> Result<Comparison, SimError> {
    let len = check_aligned(traces)?;
    if models.len() != traces.len() {
        return Err(SimError::Mismatch(format!("{} models for {} traces", models.len(), traces.len())));
    }
    for (m, t) in models.iter().zip(traces) {
        if m.provider_id != t.provider_id() {
            return Err(SimError::Mismatch(format!(
                "model {} paired with trace {}",
                m.provider_id,
                t.provider_id()
            )));
        }
    }
    let start = horizon_start(len, &models[0].config)?;
    for m in models {
        if horizon_start(len, &m.config)? != start {
            return Err(SimError::Mismatch(format!("model {} uses a different split", m.provider_id)));
        }
    }
    let hours = len - start;
    let ids: Vec<String> = traces.iter().map(|t| t.provider_id().to_string()).collect();

    let column = |f: &PerTrace| -> Result<DemandMatrix, SimError> {
        let columns = traces
            .iter()
            .enumerate()
            .map(|(i, t)| f(t, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DemandMatrix::from_columns(ids.clone(), &columns)?)
    };

    let actual = column(&|t, _| Ok(t.samples()[start..].to_vec()))?;
    let persistence = column(&|t, _| Ok(t.samples()[start - 1..len - 1].to_vec()))?;
    let fixed = column(&|t, _| {
        let peak = t.samples()[..start].iter().copied().fold(0.0, f64::max);
        Ok(vec![peak; hours])
    })?;
    let forecast = column(&|t, i| {
        let model = &models[i];
        let l = model.window_length();
        let wrap = |source| SimError::Forecast {
            provider: t.provider_id().to_string(),
            source,
        };
        let values = match mode {
            ForecastMode::Rolling => (start..len)
                .map(|h| model.predict_next(&t.samples()[h - l..h]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(wrap)?,
            ForecastMode::Recursive => model
                .predict_horizon(&t.samples()[start - l..start], hours)
                .map_err(wrap)?,
        };
        Ok(values.into_iter().map(|v| v.max(0.0)).collect())
    })?;

    let planned = [
        (Strategy::Forecast, forecast),
        (Strategy::Persistence, persistence),
        (Strategy::Static, fixed),
        (Strategy::Oracle, actual.clone()),
    ];
    // Headroom covers forecast error; the oracle has none.
    let oracle_cfg = CostConfig {
        headroom: 1.0,
        ..cost_cfg.clone()
    };
    let runs = planned
        .into_par_iter()
        .map(|(strategy, demand)| {
            let cfg = if strategy == Strategy::Oracle { &oracle_cfg } else { cost_cfg };
            let plan = plan_horizon(&demand, fleet, catalog, cfg)?;
            let report = simulate(&plan, &actual, fleet, cost_cfg)?.named(strategy.name());
            Ok(StrategyRun {
                strategy,
                planned: demand,
                plan,
                report,
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    Ok(Comparison {
        horizon_start: start,
        actual,
        runs,
    })
}

pub const COMPARISON_HEADER: [&str; 9] = [
    "strategy",
    "total_cost",
    "energy",
    "bandwidth",
    "migration",
    "sla",
    "violations",
    "migrations",
    "server_on_hours",
];
pub const PLOT_HEADER: [&str; 6] = ["hour", "provider_id", "actual_mbps", "forecast_mbps", "server_id", "violated"];

fn finish(wtr: csv::Writer<Vec<u8>>) -> String {
    let bytes = wtr.into_inner().expect("in-memory csv writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

pub fn emit_comparison_csv(reports: &[SimulationReport]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(COMPARISON_HEADER).expect("in-memory write");
    for r in reports {
        let c = &r.cost;
        wtr.write_record([
            r.strategy.clone(),
            c.total.to_string(),
            c.energy.to_string(),
            c.bandwidth.to_string(),
            c.migration.to_string(),
            c.sla.to_string(),
            r.violations.to_string(),
            r.migrations.to_string(),
            r.server_on_hours.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(wtr)
}

fn records(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>, SimError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| SimError::Format(e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(SimError::Format(format!("expected header {:?}", header.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| SimError::Format(e.to_string()))?;
        if record.len() != header.len() {
            return Err(SimError::Format(format!(
                "line {}: expected {} fields",
                record.position().map(|p| p.line()).unwrap_or(0),
                header.len()
            )));
        }
        out.push(record);
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(r: &csv::StringRecord, i: usize, name: &str) -> Result<T, SimError> {
    r[i].trim()
        .parse()
        .map_err(|_| SimError::Format(format!("{name}: cannot parse {:?}", &r[i])))
}

pub fn parse_comparison_csv(text: &str) -> Result<Vec<StrategySummary>, SimError> {
    records(text, &COMPARISON_HEADER)?
        .iter()
        .map(|r| {
            let cost = CostBreakdown {
                total: field(r, 1, "total_cost")?,
                energy: field(r, 2, "energy")?,
                bandwidth: field(r, 3, "bandwidth")?,
                migration: field(r, 4, "migration")?,
                sla: field(r, 5, "sla")?,
            };
            Ok(StrategySummary {
                strategy: r[0].to_string(),
                cost,
                violations: field(r, 6, "violations")?,
                migrations: field(r, 7, "migrations")?,
                server_on_hours: field(r, 8, "server_on_hours")?,
            })
        })
        .collect()
}

/// One parsed line of the per-hour plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotRow {
    pub hour: usize,
    pub provider_id: String,
    pub actual_mbps: f64,
    pub forecast_mbps: f64,
    pub server_id: Option<String>,
    pub violated: bool,
}

/// Per provider-hour replay of one strategy next to the demand it planned
/// for. `violated` is written as 0/1.
pub fn emit_plot_csv(report: &SimulationReport, planned: &DemandMatrix) -> Result<String, SimError> {
    if planned.hours() * planned.providers() != report.rows.len() {
        return Err(SimError::Mismatch("planned demand does not match the replay".into()));
    }
    let providers = planned.providers();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(PLOT_HEADER).expect("in-memory write");
    for (i, row) in report.rows.iter().enumerate() {
        wtr.write_record([
            row.hour.to_string().as_str(),
            &row.provider_id,
            &row.actual_mbps.to_string(),
            &planned.get(i / providers, i % providers).to_string(),
            row.server_id.as_deref().unwrap_or(""),
            if row.violated { "1" } else { "0" },
        ])
        .expect("in-memory write");
    }
    Ok(finish(wtr))
}

pub fn parse_plot_csv(text: &str) -> Result<Vec<PlotRow>, SimError> {
    records(text, &PLOT_HEADER)?
        .iter()
        .map(|r| {
            let violated = match r[5].trim() {
                "0" => false,
                "1" => true,
                other => return Err(SimError::Format(format!("violated: expected 0 or 1, found {other:?}"))),
            };
            Ok(PlotRow {
                hour: field(r, 0, "hour")?,
                provider_id: r[1].to_string(),
                actual_mbps: field(r, 2, "actual_mbps")?,
                forecast_mbps: field(r, 3, "forecast_mbps")?,
                server_id: (!r[4].is_empty()).then(|| r[4].to_string()),
                violated,
            })
        })
        .collect()
}
