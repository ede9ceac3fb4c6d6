//! Trains one forecaster per provider on a synthetic corpus and compares its
//! held-out error against the persistence baseline.

use edgecast::forecast::{prepare_series, train, TrainConfig};
use edgecast::metrics::{evaluate, persistence_baseline};
use edgecast::trace_model::{generate_synthetic_traces, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let providers: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let traces = generate_synthetic_traces(&SynthConfig {
        provider_count: providers,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig::default();
    println!("provider   lstm_mse   persistence_mse  epochs  seconds");
    for series in &traces {
        let started = std::time::Instant::now();
        let model = train(series, &cfg)?;
        let prepared = prepare_series(series, &cfg)?;
        let lstm = evaluate(&model, &prepared.test)?;
        let naive = persistence_baseline(series.provider_id(), &prepared.test)?;
        println!(
            "{:<10} {:<10.6} {:<16.6} {:<7} {:.2}",
            series.provider_id(),
            lstm.mse,
            naive.mse,
            model.training_loss_history.len(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
