//! Hour-by-hour edge server allocation from predicted demand.
//!
//! A plan assigns every provider to at most one server per hour. Capacity is
//! checked against headroom-scaled demand for bandwidth and against the
//! provider's container cluster for cpu, memory and disk. Servers without
//! assignees are powered off. Cost is linear:
//!
//! ```text
//! energy    = sum of powered-on server-hours * energy_cost_per_hour
//! bandwidth = sum of assigned demand * bandwidth_cost_per_mbps_hour
//! migration = migrations * migration_cost
//! sla       = unassigned provider-hours * sla_penalty
//! ```

mod brute;
mod greedy;
mod io;
mod profiles;
mod refine;
mod sizing;

pub use brute::brute_force_plan;
pub use greedy::greedy_assign;
pub use io::{
    emit_cost_config, emit_cost_summary_csv, emit_demand_csv, emit_plan_csv, parse_cost_config,
    parse_cost_summary_csv, parse_demand_csv, parse_plan_csv, COST_SUMMARY_HEADER, PLAN_HEADER,
};
pub use profiles::{cluster_profiles, daily_shape, ProfileClass};
pub use refine::local_search_refine;
pub use sizing::{size_containers, ContainerSizing, ResourceNeeds};

use serde::{Deserialize, Serialize};

use crate::trace_model::{ContainerFlavor, ServerSpec};

/// Relative slack used in every capacity comparison.
pub(crate) const CAPACITY_EPS: f64 = 1e-9;

pub(crate) fn within(load: f64, capacity: f64) -> bool {
    load <= capacity * (1.0 + CAPACITY_EPS)
}

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid demand: {0}")]
    Demand(String),
    #[error("fleet is empty")]
    EmptyFleet,
    #[error("flavor catalog is empty")]
    EmptyCatalog,
    #[error("no flavor covers peak demand {peak} Mbps within {max_count} containers")]
    NoFeasibleSizing { peak: f64, max_count: u32 },
    #[error("instance with {providers} providers, {servers} servers, {hours} hours exceeds the brute-force bound ({max_providers}, {max_servers}, {max_hours})")]
    TooLarge {
        providers: usize,
        servers: usize,
        hours: usize,
        max_providers: usize,
        max_servers: usize,
        max_hours: usize,
    },
    #[error("K = {k} is invalid for {providers} providers")]
    BadK { k: usize, providers: usize },
    #[error("trace {0} is shorter than one day")]
    ShortTrace(String),
    #[error("invalid cost config: {0}")]
    Config(String),
    #[error("plan file: {0}")]
    Format(String),
    #[error("plan invariant violated: {0}")]
    Invariant(String),
}

/// Providers x hours grid of bandwidth demand (Mbps).
#[derive(Debug, Clone, PartialEq)]
pub struct DemandMatrix {
    provider_ids: Vec<String>,
    hours: usize,
    /// Row-major: `values[hour * P + provider]`.
    values: Vec<f64>,
}

impl DemandMatrix {
    pub fn new(provider_ids: Vec<String>, hours: usize, values: Vec<f64>) -> Result<Self, PlanError> {
        if values.len() != hours * provider_ids.len() {
            return Err(PlanError::Dimension(format!(
                "{} values for {} hours x {} providers",
                values.len(),
                hours,
                provider_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(PlanError::Demand(format!("value {v} is not a finite non-negative number")));
        }
        Ok(Self {
            provider_ids,
            hours,
            values,
        })
    }

    /// Builds from per-provider columns (each of length `hours`).
    pub fn from_columns(provider_ids: Vec<String>, columns: &[Vec<f64>]) -> Result<Self, PlanError> {
        if columns.len() != provider_ids.len() {
            return Err(PlanError::Dimension("one column per provider required".into()));
        }
        let hours = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != hours) {
            return Err(PlanError::Dimension("columns have different lengths".into()));
        }
        let p = provider_ids.len();
        let mut values = vec![0.0; hours * p];
        for (j, col) in columns.iter().enumerate() {
            for (t, v) in col.iter().enumerate() {
                values[t * p + j] = *v;
            }
        }
        Self::new(provider_ids, hours, values)
    }

    pub fn provider_ids(&self) -> &[String] {
        &self.provider_ids
    }

    pub fn providers(&self) -> usize {
        self.provider_ids.len()
    }

    pub fn hours(&self) -> usize {
        self.hours
    }

    pub fn get(&self, hour: usize, provider: usize) -> f64 {
        self.values[hour * self.providers() + provider]
    }

    pub fn row(&self, hour: usize) -> &[f64] {
        let p = self.providers();
        &self.values[hour * p..(hour + 1) * p]
    }

    pub fn peak(&self, provider: usize) -> f64 {
        (0..self.hours).map(|t| self.get(t, provider)).fold(0.0, f64::max)
    }

    /// Elementwise scaled copy.
    pub fn scaled(&self, factor: f64) -> Result<Self, PlanError> {
        Self::new(
            self.provider_ids.clone(),
            self.hours,
            self.values.iter().map(|v| v * factor).collect(),
        )
    }
}

/// Cost weights and search bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub migration_cost: f64,
    pub sla_penalty: f64,
    /// Multiplier (>= 1) on predicted demand when checking bandwidth capacity.
    pub headroom: f64,
    pub bandwidth_cost_per_mbps_hour: f64,
    pub max_container_count: u32,
    pub refine_max_iters: usize,
    pub brute_force_max_providers: usize,
    pub brute_force_max_servers: usize,
    pub brute_force_max_hours: usize,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            migration_cost: 2.0,
            sla_penalty: 20.0,
            headroom: 1.1,
            bandwidth_cost_per_mbps_hour: 0.001,
            max_container_count: 64,
            refine_max_iters: 100,
            brute_force_max_providers: 4,
            brute_force_max_servers: 3,
            brute_force_max_hours: 3,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<(), PlanError> {
        for (name, v) in [
            ("migration_cost", self.migration_cost),
            ("sla_penalty", self.sla_penalty),
            ("bandwidth_cost_per_mbps_hour", self.bandwidth_cost_per_mbps_hour),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PlanError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.headroom >= 1.0 && self.headroom.is_finite()) {
            return Err(PlanError::Config(format!("headroom must be >= 1, got {}", self.headroom)));
        }
        if self.max_container_count == 0 {
            return Err(PlanError::Config("max_container_count must be positive".into()));
        }
        Ok(())
    }

    /// Same weights multiplied by `factor`; headroom and bounds unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            migration_cost: self.migration_cost * factor,
            sla_penalty: self.sla_penalty * factor,
            bandwidth_cost_per_mbps_hour: self.bandwidth_cost_per_mbps_hour * factor,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub energy: f64,
    pub bandwidth: f64,
    pub migration: f64,
    pub sla: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn new(energy: f64, bandwidth: f64, migration: f64, sla: f64) -> Self {
        Self {
            energy,
            bandwidth,
            migration,
            sla,
            total: energy + bandwidth + migration + sla,
        }
    }
}

/// Per-hour provider placement plus per-provider container sizing.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub provider_ids: Vec<String>,
    /// Fleet order; assignments index into this list.
    pub server_ids: Vec<String>,
    /// `assignment[hour][provider]`, `None` when unassigned.
    pub assignment: Vec<Vec<Option<usize>>>,
    /// `powered_on[hour][server]`.
    pub powered_on: Vec<Vec<bool>>,
    pub sizing: Vec<ContainerSizing>,
    pub cost: CostBreakdown,
}

impl AllocationPlan {
    pub fn hours(&self) -> usize {
        self.assignment.len()
    }

    pub fn providers(&self) -> usize {
        self.provider_ids.len()
    }

    /// Number of (provider, hour >= 1) pairs whose server differs from the
    /// previous hour. Leaving or entering the unassigned state counts.
    pub fn migration_count(&self) -> usize {
        count_migrations(&self.assignment)
    }

    pub fn unassigned_count(&self) -> usize {
        self.assignment.iter().flatten().filter(|a| a.is_none()).count()
    }

    pub fn server_on_hours(&self) -> usize {
        self.powered_on.iter().flatten().filter(|on| **on).count()
    }

    /// Recomputes the powered-on sets from the assignment.
    pub fn sync_power(&mut self) {
        self.powered_on = power_from_assignment(&self.assignment, self.server_ids.len());
    }

    pub fn server_id(&self, hour: usize, provider: usize) -> Option<&str> {
        self.assignment[hour][provider].map(|s| self.server_ids[s].as_str())
    }
}

pub(crate) fn count_migrations(assignment: &[Vec<Option<usize>>]) -> usize {
    assignment
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
        .sum()
}

pub(crate) fn power_from_assignment(assignment: &[Vec<Option<usize>>], servers: usize) -> Vec<Vec<bool>> {
    assignment
        .iter()
        .map(|row| {
            let mut on = vec![false; servers];
            for s in row.iter().flatten() {
                on[*s] = true;
            }
            on
        })
        .collect()
}

/// Prices `plan` against `demand` (predicted or actual).
pub fn plan_cost(
    plan: &AllocationPlan,
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    cfg: &CostConfig,
) -> Result<CostBreakdown, PlanError> {
    check_dims(plan, demand, fleet)?;
    let mut energy = 0.0;
    for on in &plan.powered_on {
        for (s, server) in fleet.iter().enumerate() {
            if on[s] {
                energy += server.energy_cost_per_hour;
            }
        }
    }
    let mut assigned_demand = 0.0;
    let mut unassigned = 0usize;
    for (t, row) in plan.assignment.iter().enumerate() {
        for (p, a) in row.iter().enumerate() {
            match a {
                Some(_) => assigned_demand += demand.get(t, p),
                None => unassigned += 1,
            }
        }
    }
    Ok(CostBreakdown::new(
        energy,
        assigned_demand * cfg.bandwidth_cost_per_mbps_hour,
        plan.migration_count() as f64 * cfg.migration_cost,
        unassigned as f64 * cfg.sla_penalty,
    ))
}

pub(crate) fn check_dims(plan: &AllocationPlan, demand: &DemandMatrix, fleet: &[ServerSpec]) -> Result<(), PlanError> {
    if plan.hours() != demand.hours() || plan.providers() != demand.providers() {
        return Err(PlanError::Dimension(format!(
            "plan is {}h x {}p, demand is {}h x {}p",
            plan.hours(),
            plan.providers(),
            demand.hours(),
            demand.providers()
        )));
    }
    if plan.provider_ids != demand.provider_ids {
        return Err(PlanError::Dimension("plan and demand list different providers".into()));
    }
    if plan.server_ids.len() != fleet.len() || plan.server_ids.iter().zip(fleet).any(|(a, s)| *a != s.server_id) {
        return Err(PlanError::Dimension("plan servers do not match the fleet".into()));
    }
    if plan.powered_on.len() != plan.hours() || plan.sizing.len() != plan.providers() {
        return Err(PlanError::Dimension("plan power or sizing tables have the wrong size".into()));
    }
    Ok(())
}

/// Checks every plan invariant against the demand it was planned on.
pub fn verify_plan(
    plan: &AllocationPlan,
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    cfg: &CostConfig,
) -> Result<(), PlanError> {
    check_dims(plan, demand, fleet)?;
    let fail = |msg: String| Err(PlanError::Invariant(msg));
    for (t, row) in plan.assignment.iter().enumerate() {
        if row.len() != plan.providers() || plan.powered_on[t].len() != fleet.len() {
            return fail(format!("hour {t} has the wrong width"));
        }
        let mut load = vec![ResourceNeeds::default(); fleet.len()];
        let mut bandwidth = vec![0.0; fleet.len()];
        for (p, a) in row.iter().enumerate() {
            if let Some(s) = *a {
                if s >= fleet.len() {
                    return fail(format!("hour {t}: provider {} on unknown server {s}", plan.provider_ids[p]));
                }
                if !plan.powered_on[t][s] {
                    return fail(format!("hour {t}: server {} hosts providers but is off", fleet[s].server_id));
                }
                bandwidth[s] += cfg.headroom * demand.get(t, p);
                load[s] = load[s].plus(&plan.sizing[p].footprint());
            }
        }
        for (s, server) in fleet.iter().enumerate() {
            if !within(bandwidth[s], server.bandwidth_capacity) {
                return fail(format!(
                    "hour {t}: server {} bandwidth {} exceeds {}",
                    server.server_id, bandwidth[s], server.bandwidth_capacity
                ));
            }
            if !load[s].fits(server) {
                return fail(format!("hour {t}: server {} container resources exceeded", server.server_id));
            }
            let hosts = row.contains(&Some(s));
            if plan.powered_on[t][s] && !hosts {
                return fail(format!("hour {t}: server {} is on but empty", server.server_id));
            }
        }
    }
    let recomputed = plan_cost(plan, demand, fleet, cfg)?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
    let c = plan.cost;
    if !(close(c.energy, recomputed.energy)
        && close(c.bandwidth, recomputed.bandwidth)
        && close(c.migration, recomputed.migration)
        && close(c.sla, recomputed.sla)
        && close(c.total, recomputed.total))
    {
        return fail(format!("stored cost {c:?} differs from recomputed {recomputed:?}"));
    }
    if !close(c.total, c.energy + c.bandwidth + c.migration + c.sla) {
        return fail("total is not the sum of its terms".into());
    }
    Ok(())
}

pub(crate) fn check_inputs(
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
    cfg: &CostConfig,
) -> Result<(), PlanError> {
    cfg.validate()?;
    if fleet.is_empty() {
        return Err(PlanError::EmptyFleet);
    }
    if catalog.is_empty() && demand.providers() > 0 {
        return Err(PlanError::EmptyCatalog);
    }
    for server in fleet {
        server.validate().map_err(|e| PlanError::Config(e.to_string()))?;
    }
    Ok(())
}

/// Sizes every provider's container cluster from its peak demand.
pub fn size_all(
    demand: &DemandMatrix,
    catalog: &[ContainerFlavor],
    cfg: &CostConfig,
) -> Result<Vec<ContainerSizing>, PlanError> {
    (0..demand.providers())
        .map(|p| {
            size_containers(
                demand.peak(p),
                &ResourceNeeds::default(),
                catalog,
                cfg.headroom,
                cfg.max_container_count,
            )
        })
        .collect()
}

/// Greedy hour-by-hour placement with stickiness to the previous hour, then
/// local search.
pub fn plan_horizon(
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
    cfg: &CostConfig,
) -> Result<AllocationPlan, PlanError> {
    check_inputs(demand, fleet, catalog, cfg)?;
    let sizing = size_all(demand, catalog, cfg)?;
    let footprints: Vec<ResourceNeeds> = sizing.iter().map(ContainerSizing::footprint).collect();
    let mut assignment: Vec<Vec<Option<usize>>> = Vec::with_capacity(demand.hours());
    for t in 0..demand.hours() {
        let prev = assignment.last().map(Vec::as_slice);
        let row = greedy_assign(demand.row(t), &footprints, fleet, prev, cfg);
        assignment.push(row);
    }
    let mut plan = AllocationPlan {
        provider_ids: demand.provider_ids().to_vec(),
        server_ids: fleet.iter().map(|s| s.server_id.clone()).collect(),
        powered_on: power_from_assignment(&assignment, fleet.len()),
        assignment,
        sizing,
        cost: CostBreakdown::default(),
    };
    plan.cost = plan_cost(&plan, demand, fleet, cfg)?;
    Ok(local_search_refine(&plan, demand, fleet, cfg, cfg.refine_max_iters))
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    pub fn server(id: &str, bandwidth: f64, energy: f64) -> ServerSpec {
        ServerSpec {
            server_id: id.to_string(),
            bandwidth_capacity: bandwidth,
            cpu_capacity: 1000.0,
            memory_capacity: 1000.0,
            disk_capacity: 1000.0,
            energy_cost_per_hour: energy,
        }
    }

    pub fn tiny_catalog() -> Vec<ContainerFlavor> {
        vec![ContainerFlavor {
            flavor_id: "unit".into(),
            cpu: 1.0,
            memory: 1.0,
            disk: 1.0,
            bandwidth: 1000.0,
            cost_per_hour: 1.0,
        }]
    }

    pub fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;

    fn only_energy() -> CostConfig {
        CostConfig {
            migration_cost: 0.0,
            sla_penalty: 100.0,
            headroom: 1.0,
            bandwidth_cost_per_mbps_hour: 0.0,
            ..CostConfig::default()
        }
    }

    #[test]
    fn empty_plan_costs_nothing() {
        let fleet = vec![server("s0", 10.0, 2.0)];
        let demand = DemandMatrix::new(vec![], 3, vec![]).unwrap();
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &CostConfig::default()).unwrap();
        assert_eq!(plan.cost, CostBreakdown::default());
    }

    #[test]
    fn energy_only_arithmetic() {
        let fleet = vec![server("s0", 10.0, 2.0)];
        let demand = DemandMatrix::new(ids(1), 3, vec![1.0, 1.0, 1.0]).unwrap();
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &only_energy()).unwrap();
        assert_eq!(plan.cost.total, 6.0);
        assert_eq!(plan.cost.energy, 6.0);
        verify_plan(&plan, &demand, &fleet, &only_energy()).unwrap();
    }

    #[test]
    fn constant_demand_never_migrates() {
        let fleet: Vec<_> = (0..4).map(|i| server(&format!("s{i}"), 100.0, 3.0)).collect();
        let row = [30.0, 45.0, 12.0, 60.0, 25.0, 8.0];
        let values: Vec<f64> = (0..24).flat_map(|_| row).collect();
        let demand = DemandMatrix::new(ids(6), 24, values).unwrap();
        let cfg = CostConfig::default();
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        assert_eq!(plan.migration_count(), 0);
        assert_eq!(plan.unassigned_count(), 0);
        verify_plan(&plan, &demand, &fleet, &cfg).unwrap();
    }

    #[test]
    fn single_hour_is_greedy_plus_sizing() {
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 1, vec![3.0, 4.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        let sizing = size_all(&demand, &tiny_catalog(), &cfg).unwrap();
        let footprints: Vec<_> = sizing.iter().map(ContainerSizing::footprint).collect();
        let greedy = greedy_assign(demand.row(0), &footprints, &fleet, None, &cfg);
        assert_eq!(plan.assignment, vec![greedy]);
        assert_eq!(plan.sizing, sizing);
    }

    #[test]
    fn verify_catches_tampering() {
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 2, vec![6.0, 5.0, 6.0, 5.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        verify_plan(&plan, &demand, &fleet, &cfg).unwrap();

        let mut overfull = plan.clone();
        overfull.assignment[0] = vec![Some(0), Some(0)];
        overfull.sync_power();
        assert!(verify_plan(&overfull, &demand, &fleet, &cfg).is_err());

        let mut dark = plan.clone();
        dark.powered_on[1] = vec![false, false];
        assert!(verify_plan(&dark, &demand, &fleet, &cfg).is_err());

        let mut mispriced = plan;
        mispriced.cost.total += 1.0;
        assert!(verify_plan(&mispriced, &demand, &fleet, &cfg).is_err());
    }

    #[test]
    fn demand_matrix_validation() {
        assert!(DemandMatrix::new(ids(2), 2, vec![1.0; 3]).is_err());
        assert!(DemandMatrix::new(ids(1), 1, vec![-1.0]).is_err());
        let m = DemandMatrix::from_columns(ids(2), &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.row(1), &[2.0, 4.0]);
        assert_eq!(m.peak(1), 4.0);
    }
}
