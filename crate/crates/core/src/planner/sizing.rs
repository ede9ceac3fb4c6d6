use serde::{Deserialize, Serialize};

use super::{within, PlanError};
use crate::trace_model::{ContainerFlavor, ServerSpec};

/// CPU cores, memory (GB) and disk (GB).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceNeeds {
    pub cpu: f64,
    pub memory: f64,
    pub disk: f64,
}

impl ResourceNeeds {
    pub fn plus(&self, other: &Self) -> Self {
        Self {
            cpu: self.cpu + other.cpu,
            memory: self.memory + other.memory,
            disk: self.disk + other.disk,
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            cpu: self.cpu - other.cpu,
            memory: self.memory - other.memory,
            disk: self.disk - other.disk,
        }
    }

    pub fn fits(&self, server: &ServerSpec) -> bool {
        within(self.cpu, server.cpu_capacity)
            && within(self.memory, server.memory_capacity)
            && within(self.disk, server.disk_capacity)
    }
}

/// A container cluster: `count` replicas of `flavor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSizing {
    pub flavor: ContainerFlavor,
    pub count: u32,
}

impl ContainerSizing {
    pub fn footprint(&self) -> ResourceNeeds {
        let n = f64::from(self.count);
        ResourceNeeds {
            cpu: n * self.flavor.cpu,
            memory: n * self.flavor.memory,
            disk: n * self.flavor.disk,
        }
    }

    pub fn hourly_cost(&self) -> f64 {
        f64::from(self.count) * self.flavor.cost_per_hour
    }
}

/// Cheapest `(flavor, count)` whose bandwidth covers `headroom * peak` and
/// whose cpu/memory/disk cover `needs`. Ties go to the smaller count, then
/// the lexicographically smaller flavor id. Zero demand still gets one
/// container of the cheapest flavor.
pub fn size_containers(
    peak_demand: f64,
    needs: &ResourceNeeds,
    catalog: &[ContainerFlavor],
    headroom: f64,
    max_count: u32,
) -> Result<ContainerSizing, PlanError> {
    if catalog.is_empty() {
        return Err(PlanError::EmptyCatalog);
    }
    if !(peak_demand >= 0.0 && peak_demand.is_finite()) {
        return Err(PlanError::Demand(format!("peak demand {peak_demand} is invalid")));
    }
    let required = headroom * peak_demand;
    let mut best: Option<(f64, u32, &ContainerFlavor)> = None;
    for flavor in catalog {
        let need = |amount: f64, per: f64| (amount / per).ceil().max(0.0);
        let count = need(required, flavor.bandwidth)
            .max(need(needs.cpu, flavor.cpu))
            .max(need(needs.memory, flavor.memory))
            .max(need(needs.disk, flavor.disk))
            .max(1.0);
        if count > f64::from(max_count) {
            continue;
        }
        let count = count as u32;
        let cost = f64::from(count) * flavor.cost_per_hour;
        let better = match best {
            None => true,
            Some((bc, bn, bf)) => {
                cost < bc || (cost == bc && (count < bn || (count == bn && flavor.flavor_id < bf.flavor_id)))
            }
        };
        if better {
            best = Some((cost, count, flavor));
        }
    }
    best.map(|(_, count, flavor)| ContainerSizing {
        flavor: flavor.clone(),
        count,
    })
    .ok_or(PlanError::NoFeasibleSizing {
        peak: peak_demand,
        max_count,
    })
}
