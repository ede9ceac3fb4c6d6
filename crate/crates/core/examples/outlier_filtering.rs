//! Hampel filtering and min/max scaling on a series with injected spikes.

use edgecast::preprocess::{hampel, make_windows, split_train_test, NormalizationParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut values: Vec<f64> = (0..48)
        .map(|h| 100.0 + 40.0 * (2.0 * std::f64::consts::PI * h as f64 / 24.0).sin())
        .collect();
    values[10] = 900.0;
    values[31] = 0.0;

    let cleaned = hampel(&values, 7, 3.0)?;
    for (h, (raw, clean)) in values.iter().zip(&cleaned).enumerate() {
        if raw != clean {
            println!("hour {h:>2}: {raw:>7.2} -> {clean:>7.2}");
        }
    }

    let norm = NormalizationParams::fit(&cleaned)?;
    let scaled = norm.normalize(&cleaned);
    println!("range [{:.2}, {:.2}] Mbps", norm.min_value, norm.max_value);

    let windows = make_windows(&scaled, 24)?;
    let (train, test) = split_train_test(&windows, 0.8)?;
    println!("{} windows: {} train, {} test", windows.len(), train.len(), test.len());
    Ok(())
}
