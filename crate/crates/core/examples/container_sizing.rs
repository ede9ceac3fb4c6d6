//! Picks the cheapest container cluster for a range of peak demands.

use edgecast::planner::{size_containers, ResourceNeeds};
use edgecast::trace_model::default_catalog;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = default_catalog();
    for f in &catalog {
        println!("{:<7} {:>4} Mbps  {:>4}/h", f.flavor_id, f.bandwidth, f.cost_per_hour);
    }
    println!();
    for peak in [0.0, 20.0, 45.0, 90.0, 140.0, 300.0] {
        let s = size_containers(peak, &ResourceNeeds::default(), &catalog, 1.1, 64)?;
        println!(
            "peak {peak:>5} Mbps -> {} x {} ({:.2}/h)",
            s.count,
            s.flavor.flavor_id,
            s.hourly_cost()
        );
    }
    Ok(())
}
