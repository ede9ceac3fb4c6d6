//! Generates a small synthetic corpus, writes it as canonical trace CSV and
//! reads it back.

use edgecast::trace_model::{emit_trace_csv, generate_synthetic_traces, parse_trace_csv, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        provider_count: 3,
        days: 2,
        burst_probability: 0.02,
        ..SynthConfig::default()
    };
    let traces = generate_synthetic_traces(&cfg)?;
    let csv = emit_trace_csv(&traces);
    for line in csv.lines().take(4) {
        println!("{line}");
    }
    println!("...");

    let back = parse_trace_csv(&csv)?;
    assert_eq!(emit_trace_csv(&back), csv);
    for series in &back {
        let peak = series.samples().iter().copied().fold(f64::MIN, f64::max);
        let mean = series.samples().iter().sum::<f64>() / series.len() as f64;
        println!(
            "{}: {} hours from {}, mean {mean:.1} Mbps, peak {peak:.1} Mbps",
            series.provider_id(),
            series.len(),
            series.start()
        );
    }
    Ok(())
}
