use super::sizing::ResourceNeeds;
use super::{within, CostConfig};
use crate::trace_model::ServerSpec;

/// Running per-server load for one hour.
#[derive(Debug, Clone)]
pub(crate) struct HourLoad {
    pub bandwidth: Vec<f64>,
    pub resources: Vec<ResourceNeeds>,
    pub hosted: Vec<usize>,
}

impl HourLoad {
    pub fn empty(servers: usize) -> Self {
        Self {
            bandwidth: vec![0.0; servers],
            resources: vec![ResourceNeeds::default(); servers],
            hosted: vec![0; servers],
        }
    }

    pub fn from_row(
        row: &[Option<usize>],
        demand_row: &[f64],
        footprints: &[ResourceNeeds],
        servers: usize,
        headroom: f64,
    ) -> Self {
        let mut load = Self::empty(servers);
        for (p, a) in row.iter().enumerate() {
            if let Some(s) = *a {
                load.add(s, headroom * demand_row[p], &footprints[p]);
            }
        }
        load
    }

    pub fn fits(&self, server: &ServerSpec, s: usize, bandwidth: f64, footprint: &ResourceNeeds) -> bool {
        within(self.bandwidth[s] + bandwidth, server.bandwidth_capacity)
            && self.resources[s].plus(footprint).fits(server)
    }

    pub fn add(&mut self, s: usize, bandwidth: f64, footprint: &ResourceNeeds) {
        self.bandwidth[s] += bandwidth;
        self.resources[s] = self.resources[s].plus(footprint);
        self.hosted[s] += 1;
    }

    pub fn remove(&mut self, s: usize, bandwidth: f64, footprint: &ResourceNeeds) {
        self.bandwidth[s] -= bandwidth;
        self.resources[s] = self.resources[s].minus(footprint);
        self.hosted[s] -= 1;
    }
}

/// One-hour placement.
///
/// Providers are taken in descending demand. A provider first tries its
/// previous server; the rest go best-fit onto powered-on servers (least
/// bandwidth left after placement). A new server is powered on only when no
/// powered-on server fits, preferring the cheapest energy cost. Providers
/// that fit nowhere stay unassigned.
pub fn greedy_assign(
    demand_row: &[f64],
    footprints: &[ResourceNeeds],
    fleet: &[ServerSpec],
    prev: Option<&[Option<usize>]>,
    cfg: &CostConfig,
) -> Vec<Option<usize>> {
    let n = demand_row.len();
    assert_eq!(footprints.len(), n, "one footprint per provider");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| demand_row[b].total_cmp(&demand_row[a]).then(a.cmp(&b)));

    let mut load = HourLoad::empty(fleet.len());
    let mut out: Vec<Option<usize>> = vec![None; n];
    let need = |p: usize| cfg.headroom * demand_row[p];

    if let Some(prev) = prev {
        for &p in &order {
            if let Some(s) = prev[p] {
                if load.fits(&fleet[s], s, need(p), &footprints[p]) {
                    load.add(s, need(p), &footprints[p]);
                    out[p] = Some(s);
                }
            }
        }
    }

    for &p in &order {
        if out[p].is_some() {
            continue;
        }
        let fitting = |s: &usize| load.fits(&fleet[*s], *s, need(p), &footprints[p]);
        let slack = |s: usize| fleet[s].bandwidth_capacity - load.bandwidth[s] - need(p);
        let by_id = |a: usize, b: usize| fleet[a].server_id.cmp(&fleet[b].server_id);

        let on_server = (0..fleet.len())
            .filter(|&s| load.hosted[s] > 0)
            .filter(fitting)
            .min_by(|&a, &b| slack(a).total_cmp(&slack(b)).then(by_id(a, b)));
        let choice = on_server.or_else(|| {
            (0..fleet.len())
                .filter(|&s| load.hosted[s] == 0)
                .filter(fitting)
                .min_by(|&a, &b| {
                    fleet[a]
                        .energy_cost_per_hour
                        .total_cmp(&fleet[b].energy_cost_per_hour)
                        .then(slack(a).total_cmp(&slack(b)))
                        .then(by_id(a, b))
                })
        });
        if let Some(s) = choice {
            load.add(s, need(p), &footprints[p]);
            out[p] = Some(s);
        }
    }
    out
}
