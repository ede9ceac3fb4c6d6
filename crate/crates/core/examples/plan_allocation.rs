//! Plans a day of synthetic demand on the default fleet, then checks the
//! heuristic against the exact optimum on a small slice.

use edgecast::planner::{brute_force_plan, plan_horizon, verify_plan, CostConfig, DemandMatrix};
use edgecast::trace_model::{default_catalog, default_fleet, generate_synthetic_traces, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let traces = generate_synthetic_traces(&SynthConfig {
        days: 1,
        ..SynthConfig::default()
    })?;
    let ids: Vec<String> = traces.iter().map(|t| t.provider_id().to_string()).collect();
    let columns: Vec<Vec<f64>> = traces.iter().map(|t| t.samples().to_vec()).collect();
    let demand = DemandMatrix::from_columns(ids, &columns)?;

    let (fleet, catalog, cfg) = (default_fleet(), default_catalog(), CostConfig::default());
    let plan = plan_horizon(&demand, &fleet, &catalog, &cfg)?;
    verify_plan(&plan, &demand, &fleet, &cfg)?;
    println!("hour  servers on");
    for (t, on) in plan.powered_on.iter().enumerate() {
        let total: f64 = demand.row(t).iter().sum();
        println!("{t:>4}  {} ({total:.0} Mbps)", on.iter().filter(|x| **x).count());
    }
    println!("{:?}", plan.cost);

    let small_ids: Vec<String> = demand.provider_ids()[..4].to_vec();
    let small_cols: Vec<Vec<f64>> = columns[..4].iter().map(|c| c[..3].to_vec()).collect();
    let small = DemandMatrix::from_columns(small_ids, &small_cols)?;
    let heuristic = plan_horizon(&small, &fleet[..3], &catalog, &cfg)?;
    let exact = brute_force_plan(&small, &fleet[..3], &catalog, &cfg)?;
    println!(
        "4 providers x 3 servers x 3 hours: heuristic {:.3}, optimum {:.3}",
        heuristic.cost.total, exact.cost.total
    );
    Ok(())
}
