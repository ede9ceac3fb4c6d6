use super::greedy::HourLoad;
use super::sizing::{ContainerSizing, ResourceNeeds};
use super::{plan_cost, power_from_assignment, AllocationPlan, CostConfig, DemandMatrix};
use crate::trace_model::ServerSpec;

/// Smallest cost decrease that counts as an improvement.
const MIN_GAIN: f64 = 1e-9;

/// Sweep cap when optimizing a single hour in isolation.
const SUB_SWEEPS: usize = 50;

struct Search<'a> {
    demand: &'a DemandMatrix,
    fleet: &'a [ServerSpec],
    cfg: &'a CostConfig,
    footprints: Vec<ResourceNeeds>,
    assignment: Vec<Vec<Option<usize>>>,
    loads: Vec<HourLoad>,
}

impl Search<'_> {
    fn need(&self, t: usize, p: usize) -> f64 {
        self.cfg.headroom * self.demand.get(t, p)
    }

    fn migrations_around(&self, t: usize, p: usize, at: Option<usize>) -> usize {
        let mut n = 0;
        if t > 0 && self.assignment[t - 1][p] != at {
            n += 1;
        }
        if t + 1 < self.assignment.len() && self.assignment[t + 1][p] != at {
            n += 1;
        }
        n
    }

    /// Cost change of moving provider `p` at hour `t` to `to`, or `None` if
    /// the target cannot host it.
    fn move_delta(&self, t: usize, p: usize, to: Option<usize>) -> Option<f64> {
        let from = self.assignment[t][p];
        debug_assert_ne!(from, to);
        let load = &self.loads[t];
        if let Some(s) = to {
            if !load.fits(&self.fleet[s], s, self.need(t, p), &self.footprints[p]) {
                return None;
            }
        }
        let mut delta = 0.0;
        if let Some(s) = from {
            if load.hosted[s] == 1 {
                delta -= self.fleet[s].energy_cost_per_hour;
            }
        }
        if let Some(s) = to {
            if load.hosted[s] == 0 {
                delta += self.fleet[s].energy_cost_per_hour;
            }
        }
        let traffic = self.demand.get(t, p) * self.cfg.bandwidth_cost_per_mbps_hour;
        match (from, to) {
            (None, Some(_)) => delta += traffic - self.cfg.sla_penalty,
            (Some(_), None) => delta += self.cfg.sla_penalty - traffic,
            _ => {}
        }
        let before = self.migrations_around(t, p, from) as f64;
        let after = self.migrations_around(t, p, to) as f64;
        delta += (after - before) * self.cfg.migration_cost;
        Some(delta)
    }

    fn apply_move(&mut self, t: usize, p: usize, to: Option<usize>) {
        let need = self.need(t, p);
        if let Some(s) = self.assignment[t][p] {
            self.loads[t].remove(s, need, &self.footprints[p]);
        }
        if let Some(s) = to {
            self.loads[t].add(s, need, &self.footprints[p]);
        }
        self.assignment[t][p] = to;
    }

    /// Moves every assignee of server `s` at hour `t` onto other powered-on
    /// servers (largest first, best fit) so `s` can power off. Applied only
    /// if the whole relocation lowers the cost.
    fn try_close(&mut self, t: usize, s: usize) -> bool {
        let mut hosted: Vec<usize> = (0..self.demand.providers())
            .filter(|&p| self.assignment[t][p] == Some(s))
            .collect();
        if hosted.is_empty() {
            return false;
        }
        hosted.sort_by(|&a, &b| self.demand.get(t, b).total_cmp(&self.demand.get(t, a)).then(a.cmp(&b)));
        let saved = self.assignment[t].clone();
        let saved_load = self.loads[t].clone();
        let mut delta = -self.fleet[s].energy_cost_per_hour;
        for &p in &hosted {
            self.apply_move(t, p, None);
        }
        for &p in &hosted {
            let need = self.need(t, p);
            let target = (0..self.fleet.len())
                .filter(|&k| k != s && self.loads[t].hosted[k] > 0)
                .filter(|&k| self.loads[t].fits(&self.fleet[k], k, need, &self.footprints[p]))
                .min_by(|&a, &b| {
                    let left = |k: usize| self.fleet[k].bandwidth_capacity - self.loads[t].bandwidth[k];
                    left(a).total_cmp(&left(b)).then(a.cmp(&b))
                });
            let Some(k) = target else {
                self.assignment[t] = saved;
                self.loads[t] = saved_load;
                return false;
            };
            delta += (self.migrations_around(t, p, Some(k)) as f64
                - self.migrations_around(t, p, Some(s)) as f64)
                * self.cfg.migration_cost;
            self.apply_move(t, p, Some(k));
        }
        if delta < -MIN_GAIN {
            true
        } else {
            self.assignment[t] = saved;
            self.loads[t] = saved_load;
            false
        }
    }

    /// Cost change of reassigning several providers at hour `t` at once, or
    /// `None` if some touched server would overflow. Each provider appears
    /// at most once in `changes`.
    fn joint_delta(&self, t: usize, changes: &[(usize, Option<usize>)]) -> Option<f64> {
        let mut load = self.loads[t].clone();
        let mut delta = 0.0;
        for &(p, _) in changes {
            if let Some(s) = self.assignment[t][p] {
                let before = load.hosted[s];
                load.remove(s, self.need(t, p), &self.footprints[p]);
                if before == 1 {
                    delta -= self.fleet[s].energy_cost_per_hour;
                }
            }
        }
        for &(p, to) in changes {
            if let Some(s) = to {
                if !load.fits(&self.fleet[s], s, self.need(t, p), &self.footprints[p]) {
                    return None;
                }
                if load.hosted[s] == 0 {
                    delta += self.fleet[s].energy_cost_per_hour;
                }
                load.add(s, self.need(t, p), &self.footprints[p]);
            }
        }
        for &(p, to) in changes {
            let from = self.assignment[t][p];
            let traffic = self.demand.get(t, p) * self.cfg.bandwidth_cost_per_mbps_hour;
            match (from, to) {
                (None, Some(_)) => delta += traffic - self.cfg.sla_penalty,
                (Some(_), None) => delta += self.cfg.sla_penalty - traffic,
                _ => {}
            }
            delta += (self.migrations_around(t, p, to) as f64 - self.migrations_around(t, p, from) as f64)
                * self.cfg.migration_cost;
        }
        Some(delta)
    }

    /// Best joint reassignment of providers `p` and `q` at hour `t` over all
    /// destination pairs, unassigned included. Applied if it improves.
    fn try_pair(&mut self, t: usize, p: usize, q: usize) -> bool {
        let servers = self.fleet.len();
        let targets = || (0..servers).map(Some).chain(std::iter::once(None));
        let (cur_p, cur_q) = (self.assignment[t][p], self.assignment[t][q]);
        let mut best: Option<(f64, Option<usize>, Option<usize>)> = None;
        for a in targets() {
            for b in targets() {
                if a == cur_p || b == cur_q {
                    // Single moves are covered elsewhere.
                    continue;
                }
                if let Some(d) = self.joint_delta(t, &[(p, a), (q, b)]) {
                    if d < -MIN_GAIN && best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, a, b));
                    }
                }
            }
        }
        let Some((_, a, b)) = best else { return false };
        self.apply_move(t, p, None);
        self.apply_move(t, q, None);
        self.apply_move(t, p, a);
        self.apply_move(t, q, b);
        true
    }

    /// Energy, bandwidth and SLA cost of `row` at hour `t`, or `None` if it
    /// overloads a server there.
    fn hour_cost(&self, t: usize, row: &[Option<usize>]) -> Option<f64> {
        let load = HourLoad::from_row(row, self.demand.row(t), &self.footprints, self.fleet.len(), self.cfg.headroom);
        let mut cost = 0.0;
        for (s, server) in self.fleet.iter().enumerate() {
            if load.hosted[s] == 0 {
                continue;
            }
            if !super::within(load.bandwidth[s], server.bandwidth_capacity) || !load.resources[s].fits(server) {
                return None;
            }
            cost += server.energy_cost_per_hour;
        }
        for (p, a) in row.iter().enumerate() {
            cost += match a {
                Some(_) => self.demand.get(t, p) * self.cfg.bandwidth_cost_per_mbps_hour,
                None => self.cfg.sla_penalty,
            };
        }
        Some(cost)
    }

    /// Hill climbs hour `t` on its own, where migrations cost nothing.
    fn hour_local_optimum(&self, t: usize) -> Vec<Option<usize>> {
        let demand = DemandMatrix::new(self.demand.provider_ids().to_vec(), 1, self.demand.row(t).to_vec())
            .expect("row of a valid matrix");
        let mut sub = Search {
            demand: &demand,
            fleet: self.fleet,
            cfg: self.cfg,
            footprints: self.footprints.clone(),
            assignment: vec![self.assignment[t].clone()],
            loads: vec![self.loads[t].clone()],
        };
        for _ in 0..SUB_SWEEPS {
            if !sub.sweep_hour(0) {
                break;
            }
        }
        sub.assignment.pop().expect("one hour")
    }

    /// Installs the isolated optimum of hour `t` over the block of
    /// surrounding hours that lowers the total cost most, if any does.
    fn try_transplant(&mut self, t: usize) -> bool {
        let row = self.hour_local_optimum(t);
        if row == self.assignment[t] {
            return false;
        }
        let hours = self.assignment.len();
        let diff = |u: usize| {
            self.hour_cost(u, &row)
                .map(|c| c - self.hour_cost(u, &self.assignment[u]).expect("current rows are feasible"))
        };
        let moves = |a: &[Option<usize>], b: &[Option<usize>]| a.iter().zip(b).filter(|(x, y)| x != y).count();

        let mut diffs = vec![None; hours];
        diffs[t] = diff(t);
        let mut lo = t;
        while lo > 0 {
            diffs[lo - 1] = diff(lo - 1);
            if diffs[lo - 1].is_none() {
                break;
            }
            lo -= 1;
        }
        let mut hi = t;
        while hi + 1 < hours {
            diffs[hi + 1] = diff(hi + 1);
            if diffs[hi + 1].is_none() {
                break;
            }
            hi += 1;
        }
        // prefix[u] = sum of diffs over lo..u; cut[u] = migrations between u and u + 1.
        let mut prefix = vec![0.0; hours + 1];
        for u in lo..=hi {
            prefix[u + 1] = prefix[u] + diffs[u].expect("inside feasible range");
        }
        let cut: Vec<usize> = (0..hours.saturating_sub(1))
            .map(|u| moves(&self.assignment[u], &self.assignment[u + 1]))
            .collect();
        let mut cut_prefix = vec![0usize; hours];
        for u in 0..cut.len() {
            cut_prefix[u + 1] = cut_prefix[u] + cut[u];
        }

        let mut best: Option<(f64, usize, usize)> = None;
        for a in lo..=t {
            let enter = if a > 0 { moves(&self.assignment[a - 1], &row) } else { 0 };
            for b in t..=hi {
                let leave = if b + 1 < hours { moves(&row, &self.assignment[b + 1]) } else { 0 };
                let first = a.saturating_sub(1);
                let last = (b + 1).min(hours - 1);
                let old = cut_prefix[last] - cut_prefix[first];
                let delta = prefix[b + 1] - prefix[a]
                    + ((enter + leave) as f64 - old as f64) * self.cfg.migration_cost;
                if delta < -MIN_GAIN && best.is_none_or(|(bd, _, _)| delta < bd) {
                    best = Some((delta, a, b));
                }
            }
        }
        let Some((_, a, b)) = best else { return false };
        for u in a..=b {
            self.assignment[u] = row.clone();
            self.loads[u] =
                HourLoad::from_row(&row, self.demand.row(u), &self.footprints, self.fleet.len(), self.cfg.headroom);
        }
        true
    }

    /// One pass over all single moves, server closings and pair moves,
    /// applying each improving one as soon as it is found. Returns whether
    /// anything changed.
    fn sweep(&mut self) -> bool {
        let mut improved = false;
        for t in 0..self.assignment.len() {
            if self.sweep_hour(t) {
                improved = true;
            }
        }
        improved
    }

    fn sweep_hour(&mut self, t: usize) -> bool {
        let providers = self.demand.providers();
        let servers = self.fleet.len();
        let mut improved = false;
        for p in 0..providers {
            let from = self.assignment[t][p];
            let mut best: Option<(f64, Option<usize>)> = None;
            let targets = (0..servers).map(Some).chain(std::iter::once(None));
            for to in targets.filter(|to| *to != from) {
                if let Some(d) = self.move_delta(t, p, to) {
                    if d < -MIN_GAIN && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, to));
                    }
                }
            }
            if let Some((_, to)) = best {
                self.apply_move(t, p, to);
                improved = true;
            }
        }
        for s in 0..servers {
            if self.loads[t].hosted[s] > 0 && self.try_close(t, s) {
                improved = true;
            }
        }
        for p in 0..providers {
            for q in p + 1..providers {
                if self.try_pair(t, p, q) {
                    improved = true;
                }
            }
        }
        improved
    }
}

/// Hill climbing over single provider-hour moves (including to and from
/// the unassigned state), emptying a server-hour onto the other powered-on
/// servers, and joint moves of two providers in the same hour. At a local
/// optimum, each hour's isolated optimum is tried over a block of
/// neighboring hours. Only strictly improving moves are taken; stops when
/// nothing improves or after `max_iters` rounds. The result never costs
/// more than the input.
pub fn local_search_refine(
    plan: &AllocationPlan,
    demand: &DemandMatrix,
    fleet: &[ServerSpec],
    cfg: &CostConfig,
    max_iters: usize,
) -> AllocationPlan {
    let mut input = plan.clone();
    if let Ok(cost) = plan_cost(plan, demand, fleet, cfg) {
        input.cost = cost;
    } else {
        return input;
    }
    if max_iters == 0 {
        return plan.clone();
    }
    let footprints: Vec<ResourceNeeds> = plan.sizing.iter().map(ContainerSizing::footprint).collect();
    let loads = (0..plan.hours())
        .map(|t| HourLoad::from_row(&plan.assignment[t], demand.row(t), &footprints, fleet.len(), cfg.headroom))
        .collect();
    let mut search = Search {
        demand,
        fleet,
        cfg,
        footprints,
        assignment: plan.assignment.clone(),
        loads,
    };
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        if search.sweep() {
            continue;
        }
        let mut moved = false;
        for t in 0..search.assignment.len() {
            if search.try_transplant(t) {
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let mut out = plan.clone();
    out.powered_on = power_from_assignment(&search.assignment, fleet.len());
    out.assignment = search.assignment;
    out.cost = plan_cost(&out, demand, fleet, cfg).expect("dimensions already checked");
    if out.cost.total > input.cost.total {
        return input;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{ids, server, tiny_catalog};
    use super::super::{plan_horizon, verify_plan};
    use super::*;

    #[test]
    fn zero_iterations_is_identity() {
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 2, vec![3.0, 4.0, 3.0, 4.0]).unwrap();
        let cfg = CostConfig::default();
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        plan.assignment[1][0] = Some(1);
        plan.sync_power();
        assert_eq!(local_search_refine(&plan, &demand, &fleet, &cfg, 0), plan);
    }

    #[test]
    fn optimal_plan_unchanged() {
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 3, vec![3.0, 4.0, 3.0, 4.0, 3.0, 4.0]).unwrap();
        let cfg = CostConfig::default();
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        assert_eq!(local_search_refine(&plan, &demand, &fleet, &cfg, 50), plan);
    }

    #[test]
    fn removes_gratuitous_bounce() {
        let fleet = vec![server("a", 100.0, 4.0), server("b", 100.0, 4.0)];
        let demand = DemandMatrix::new(ids(2), 4, vec![20.0, 30.0].repeat(4)).unwrap();
        let cfg = CostConfig::default();
        let plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        let baseline = plan.cost;

        let mut bounced = plan.clone();
        let home = bounced.assignment[2][0].unwrap();
        bounced.assignment[2][0] = Some(1 - home);
        bounced.sync_power();
        bounced.cost = plan_cost(&bounced, &demand, &fleet, &cfg).unwrap();
        assert_eq!(bounced.migration_count(), 2);
        // Two migrations plus one extra server-hour.
        assert!((bounced.cost.total - baseline.total - 2.0 * cfg.migration_cost - 4.0).abs() < 1e-9);

        let refined = local_search_refine(&bounced, &demand, &fleet, &cfg, 50);
        assert_eq!(refined.migration_count(), 0);
        assert!((refined.cost.total - baseline.total).abs() < 1e-9);
        verify_plan(&refined, &demand, &fleet, &cfg).unwrap();
    }

    #[test]
    fn swap_untangles_crossed_assignment() {
        // Hour 1 has the two providers crossed; only a swap fixes it without
        // overflowing (each server fits one of them).
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 3, vec![8.0, 7.0].repeat(3)).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        let (a, b) = (plan.assignment[1][0], plan.assignment[1][1]);
        plan.assignment[1] = vec![b, a];
        plan.sync_power();
        plan.cost = plan_cost(&plan, &demand, &fleet, &cfg).unwrap();
        assert_eq!(plan.migration_count(), 4);
        let refined = local_search_refine(&plan, &demand, &fleet, &cfg, 10);
        assert_eq!(refined.migration_count(), 0);
    }

    #[test]
    fn empties_a_server_no_single_move_can() {
        // Each server hosts two providers, so no single move powers one off.
        let fleet = vec![server("a", 10.0, 4.0), server("b", 10.0, 4.0)];
        let demand = DemandMatrix::new(ids(4), 1, vec![3.0, 3.0, 2.0, 2.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        plan.assignment = vec![vec![Some(0), Some(0), Some(1), Some(1)]];
        plan.sync_power();
        plan.cost = plan_cost(&plan, &demand, &fleet, &cfg).unwrap();
        let refined = local_search_refine(&plan, &demand, &fleet, &cfg, 10);
        assert_eq!(refined.server_on_hours(), 1);
        assert!((plan.cost.total - refined.cost.total - 4.0).abs() < 1e-9);
        verify_plan(&refined, &demand, &fleet, &cfg).unwrap();
    }

    #[test]
    fn assigns_unassigned_when_cheaper() {
        let fleet = vec![server("a", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(1), 2, vec![5.0, 5.0]).unwrap();
        let cfg = CostConfig::default();
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        plan.assignment = vec![vec![None], vec![None]];
        plan.sync_power();
        let refined = local_search_refine(&plan, &demand, &fleet, &cfg, 10);
        assert_eq!(refined.unassigned_count(), 0);
    }

    #[test]
    fn trades_hosted_for_unassigned() {
        // Only one of the two fits; the smaller one carries less traffic.
        let fleet = vec![server("a", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 1, vec![8.0, 5.0]).unwrap();
        let cfg = CostConfig { headroom: 1.0, ..CostConfig::default() };
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        plan.assignment = vec![vec![Some(0), None]];
        plan.sync_power();
        plan.cost = plan_cost(&plan, &demand, &fleet, &cfg).unwrap();
        let refined = local_search_refine(&plan, &demand, &fleet, &cfg, 10);
        assert_eq!(refined.assignment, vec![vec![None, Some(0)]]);
        assert!((plan.cost.total - refined.cost.total - 3.0 * cfg.bandwidth_cost_per_mbps_hour).abs() < 1e-12);
    }

    #[test]
    fn consolidates_across_all_hours_at_once() {
        // Moving p1 onto a in any single hour costs two migrations for one
        // server-hour saved; moving it in every hour costs none.
        let fleet = vec![server("a", 10.0, 1.0), server("b", 10.0, 1.0)];
        let demand = DemandMatrix::new(ids(2), 3, vec![4.0, 4.0].repeat(3)).unwrap();
        let cfg = CostConfig::default();
        let mut plan = plan_horizon(&demand, &fleet, &tiny_catalog(), &cfg).unwrap();
        plan.assignment = vec![vec![Some(0), Some(1)]; 3];
        plan.sync_power();
        plan.cost = plan_cost(&plan, &demand, &fleet, &cfg).unwrap();
        let refined = local_search_refine(&plan, &demand, &fleet, &cfg, 10);
        assert_eq!(refined.server_on_hours(), 3);
        assert_eq!(refined.migration_count(), 0);
        assert!((plan.cost.total - refined.cost.total - 3.0).abs() < 1e-9);
        verify_plan(&refined, &demand, &fleet, &cfg).unwrap();
    }
}
