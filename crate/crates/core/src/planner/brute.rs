use super::sizing::{ContainerSizing, ResourceNeeds};
use super::{
    check_inputs, plan_cost, power_from_assignment, size_all, within, AllocationPlan, CostBreakdown,
    CostConfig, DemandMatrix, PlanError,
};
use crate::trace_model::{ContainerFlavor, ServerSpec};

/// Every feasible single-hour assignment in lexicographic order of its
/// encoding (servers `0..S` first, unassigned last, provider 0 most
/// significant), with its energy + bandwidth + sla cost.
fn hour_options(
    demand_row: &[f64],
    footprints: &[ResourceNeeds],
    fleet: &[ServerSpec],
    cfg: &CostConfig,
) -> Vec<(Vec<Option<usize>>, f64)> {
    let p = demand_row.len();
    let s = fleet.len();
    let choices = s + 1;
    let total = choices.pow(p as u32);
    let mut out = Vec::new();
    let mut digits = vec![0usize; p];
    for code in 0..total {
        let mut c = code;
        for d in digits.iter_mut().rev() {
            *d = c % choices;
            c /= choices;
        }
        let row: Vec<Option<usize>> = digits.iter().map(|&d| (d < s).then_some(d)).collect();
        let mut bandwidth = vec![0.0; s];
        let mut resources = vec![ResourceNeeds::default(); s];
        let mut cost = 0.0;
        for (j, a) in row.iter().enumerate() {
            match a {
                Some(k) => {
                    bandwidth[*k] += cfg.headroom * demand_row[j];
                    resources[*k] = resources[*k].plus(&footprints[j]);
                    cost += demand_row[j] * cfg.bandwidth_cost_per_mbps_hour;
                }
                None => cost += cfg.sla_penalty,
            }
        }
        let feasible = (0..s).all(|k| within(bandwidth[k], fleet[k].bandwidth_capacity) && resources[k].fits(&fleet[k]));
        if !feasible {
            continue;
        }
        for (k, server) in fleet.iter().enumerate().take(s) {
            if row.contains(&Some(k)) {
                cost += server.energy_cost_per_hour;
            }
        }
        out.push((row, cost));
    }
    out
}

fn moves(a: &[Option<usize>], b: &[Option<usize>]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Exact minimum-cost plan for small instances.
///
/// Enumerates all `(S+1)^P` assignments of each hour (unassigned included)
/// and combines hours by dynamic programming over the migration coupling
/// between consecutive hours, which is the only cross-hour cost term. Among
/// optimal plans the one with the lexicographically smallest hour-by-hour
/// encoding is returned.
pub fn brute_force_plan(
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
    cfg: &CostConfig,
) -> Result<AllocationPlan, PlanError> {
    let (providers, servers, hours) = (demand.providers(), fleet.len(), demand.hours());
    if providers > cfg.brute_force_max_providers
        || servers > cfg.brute_force_max_servers
        || hours > cfg.brute_force_max_hours
    {
        return Err(PlanError::TooLarge {
            providers,
            servers,
            hours,
            max_providers: cfg.brute_force_max_providers,
            max_servers: cfg.brute_force_max_servers,
            max_hours: cfg.brute_force_max_hours,
        });
    }
    check_inputs(demand, fleet, catalog, cfg)?;
    let sizing = size_all(demand, catalog, cfg)?;
    let footprints: Vec<ResourceNeeds> = sizing.iter().map(ContainerSizing::footprint).collect();
    let options: Vec<_> = (0..hours)
        .map(|t| hour_options(demand.row(t), &footprints, fleet, cfg))
        .collect();

    // best[t][i]: cheapest cost of hours t.. given option i at hour t.
    let mut best: Vec<Vec<f64>> = vec![Vec::new(); hours];
    for t in (0..hours).rev() {
        best[t] = options[t]
            .iter()
            .map(|(row, cost)| {
                let tail = if t + 1 < hours {
                    options[t + 1]
                        .iter()
                        .zip(&best[t + 1])
                        .map(|((next, _), b)| moves(row, next) as f64 * cfg.migration_cost + b)
                        .fold(f64::INFINITY, f64::min)
                } else {
                    0.0
                };
                cost + tail
            })
            .collect();
    }

    let mut assignment = Vec::with_capacity(hours);
    if hours > 0 {
        let optimum = best[0].iter().copied().fold(f64::INFINITY, f64::min);
        let mut idx = best[0]
            .iter()
            .position(|b| tied(*b, optimum))
            .expect("the all-unassigned hour is always feasible");
        assignment.push(options[0][idx].0.clone());
        for t in 1..hours {
            let remaining = best[t - 1][idx] - options[t - 1][idx].1;
            let prev = &options[t - 1][idx].0;
            idx = options[t]
                .iter()
                .zip(&best[t])
                .position(|((row, _), b)| tied(moves(prev, row) as f64 * cfg.migration_cost + b, remaining))
                .expect("an optimal successor exists");
            assignment.push(options[t][idx].0.clone());
        }
    }

    let mut plan = AllocationPlan {
        provider_ids: demand.provider_ids().to_vec(),
        server_ids: fleet.iter().map(|s| s.server_id.clone()).collect(),
        powered_on: power_from_assignment(&assignment, servers),
        assignment,
        sizing,
        cost: CostBreakdown::default(),
    };
    plan.cost = plan_cost(&plan, demand, fleet, cfg)?;
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{ids, server, tiny_catalog};
    use super::super::verify_plan;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Literal enumeration of every full plan (all hours jointly).
    fn enumerate_all(demand: &DemandMatrix, fleet: &[ServerSpec], cfg: &CostConfig) -> f64 {
        let (p, s, t) = (demand.providers(), fleet.len(), demand.hours());
        let choices = s + 1;
        let cells = p * t;
        let sizing = size_all(demand, &tiny_catalog(), cfg).unwrap();
        let mut best = f64::INFINITY;
        for code in 0..choices.pow(cells as u32) {
            let mut c = code;
            let mut assignment = vec![vec![None; p]; t];
            for cell in 0..cells {
                let d = c % choices;
                c /= choices;
                assignment[cell / p][cell % p] = (d < s).then_some(d);
            }
            let mut plan = AllocationPlan {
                provider_ids: demand.provider_ids().to_vec(),
                server_ids: fleet.iter().map(|x| x.server_id.clone()).collect(),
                powered_on: power_from_assignment(&assignment, s),
                assignment,
                sizing: sizing.clone(),
                cost: CostBreakdown::default(),
            };
            plan.cost = plan_cost(&plan, demand, fleet, cfg).unwrap();
            if verify_plan(&plan, demand, fleet, cfg).is_ok() {
                best = best.min(plan.cost.total);
            }
        }
        best
    }

    #[test]
    fn dp_matches_literal_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let p = rng.random_range(1..=2);
            let s = rng.random_range(1..=2);
            let t = rng.random_range(1..=3);
            let fleet: Vec<_> = (0..s)
                .map(|i| server(&format!("s{i}"), rng.random_range(5.0..15.0), rng.random_range(1.0..5.0)))
                .collect();
            let values = (0..p * t).map(|_| rng.random_range(0.0..10.0)).collect();
            let demand = DemandMatrix::new(ids(p), t, values).unwrap();
            let cfg = CostConfig {
                migration_cost: rng.random_range(0.0..4.0),
                sla_penalty: rng.random_range(1.0..30.0),
                headroom: 1.0,
                ..CostConfig::default()
            };
            let plan = brute_force_plan(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
            verify_plan(&plan, &demand, &fleet, &cfg).unwrap();
            let oracle = enumerate_all(&demand, &fleet, &cfg);
            assert!((plan.cost.total - oracle).abs() < 1e-9, "{} vs {oracle}", plan.cost.total);
        }
    }

    #[test]
    fn single_feasible_assignment() {
        let fleet = vec![server("s0", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(1), 1, vec![9.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let plan = brute_force_plan(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        assert_eq!(plan.assignment, vec![vec![Some(0)]]);
    }

    #[test]
    fn pair_needs_two_servers() {
        let fleet = vec![server("s0", 10.0, 1.0), server("s1", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 1, vec![6.0, 5.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, sla_penalty: 1000.0, ..CostConfig::default() };
        let plan = brute_force_plan(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        assert_eq!(plan.unassigned_count(), 0);
        assert_eq!(plan.server_on_hours(), 2);
        // Lexicographically first optimum: provider 0 on s0.
        assert_eq!(plan.assignment, vec![vec![Some(0), Some(1)]]);
    }

    #[test]
    fn bound_enforced() {
        let fleet = vec![server("s0", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(5), 1, vec![1.0; 5]).unwrap();
        assert!(matches!(
            brute_force_plan(&demand, &fleet, &tiny_catalog(), &CostConfig::default()),
            Err(PlanError::TooLarge { providers: 5, .. })
        ));
    }

    #[test]
    fn argmin_invariant_under_cost_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let fleet: Vec<_> = (0..2)
                .map(|i| server(&format!("s{i}"), rng.random_range(8.0..16.0), rng.random_range(1.0..4.0)))
                .collect();
            let demand = DemandMatrix::new(ids(3), 2, (0..6).map(|_| rng.random_range(0.0..8.0)).collect()).unwrap();
            let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
            let base = brute_force_plan(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
            let factor = 3.0;
            let scaled_fleet: Vec<_> = fleet
                .iter()
                .map(|s| ServerSpec { energy_cost_per_hour: s.energy_cost_per_hour * factor, ..s.clone() })
                .collect();
            let scaled = brute_force_plan(&demand, &scaled_fleet, &tiny_catalog(), &cfg.scaled(factor)).unwrap();
            assert_eq!(base.assignment, scaled.assignment);
            assert!((scaled.cost.total - factor * base.cost.total).abs() < 1e-9 * (1.0 + scaled.cost.total));
        }
    }
}
