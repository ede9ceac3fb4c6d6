//! Per-provider edge bandwidth forecasting and forecast-driven edge server
//! allocation.
//!
//! The pipeline: ingest or synthesize hourly traces ([`trace_model`]), clean
//! and window them ([`preprocess`]), train one LSTM per provider
//! ([`forecast`]), score forecasts ([`metrics`]), turn hourly demand into
//! allocation plans ([`planner`]) and replay plans against actual demand
//! ([`simulator`]). [`cli`] wires the stages into subcommands.

pub mod cli;
pub mod forecast;
pub mod metrics;
pub mod planner;
pub mod preprocess;
pub mod seed;
pub mod simulator;
pub mod trace_model;
