//! Groups providers by the shape of their average day and suggests a
//! container cluster per group.

use edgecast::planner::{cluster_profiles, CostConfig};
use edgecast::trace_model::{default_catalog, generate_synthetic_traces, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let traces = generate_synthetic_traces(&SynthConfig::default())?;
    let classes = cluster_profiles(&traces, k, 1, &default_catalog(), &CostConfig::default())?;
    for class in &classes {
        let peak_hour = (0..24)
            .max_by(|&a, &b| class.centroid[a].total_cmp(&class.centroid[b]))
            .unwrap_or(0);
        println!(
            "class {}: peak at {peak_hour:02}:00 UTC, {} x {}, members {}",
            class.class_id,
            class.recommended_count,
            class.recommended_flavor,
            class.members.join(" ")
        );
    }
    Ok(())
}
