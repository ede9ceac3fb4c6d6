//! Plans the held-out horizon of a synthetic corpus under FORECAST,
//! PERSISTENCE, STATIC and ORACLE demand and replays each plan against the
//! actual traces.

use edgecast::forecast::TrainConfig;
use edgecast::planner::CostConfig;
use edgecast::simulator::{emit_comparison_csv, run_strategy_comparison, ForecastMode};
use edgecast::trace_model::{default_catalog, default_fleet, generate_synthetic_traces, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let traces = generate_synthetic_traces(&SynthConfig {
        seed,
        ..SynthConfig::default()
    })?;
    let train_cfg = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let started = std::time::Instant::now();
    let comparison = run_strategy_comparison(
        &traces,
        &default_fleet(),
        &default_catalog(),
        &CostConfig::default(),
        &train_cfg,
        ForecastMode::Rolling,
    )?;
    println!(
        "horizon: hours {}..{} ({:.1}s)",
        comparison.horizon_start,
        comparison.horizon_start + comparison.actual.hours(),
        started.elapsed().as_secs_f64()
    );
    print!("{}", emit_comparison_csv(&comparison.reports()));
    Ok(())
}
