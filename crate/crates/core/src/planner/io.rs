use std::collections::HashMap;

use super::sizing::ContainerSizing;
use super::{power_from_assignment, AllocationPlan, CostBreakdown, CostConfig, DemandMatrix, PlanError};
use crate::trace_model::{ContainerFlavor, ServerSpec};

pub const PLAN_HEADER: [&str; 5] = ["hour", "provider_id", "server_id", "flavor_id", "container_count"];
pub const COST_SUMMARY_HEADER: [&str; 5] = ["energy", "bandwidth", "migration", "sla", "total"];
const DEMAND_HEADER: [&str; 3] = ["hour", "provider_id", "demand_mbps"];

fn format_err(line: u64, msg: impl std::fmt::Display) -> PlanError {
    PlanError::Format(format!("line {line}: {msg}"))
}

fn records(text: &str, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>, PlanError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let found = rdr.headers().map_err(|e| format_err(1, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(format_err(1, format!("expected header {:?}, found {:?}", header.join(","), found)));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| PlanError::Format(e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(format_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        out.push((line, record));
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(field: &str, line: u64, what: &str) -> Result<T, PlanError> {
    field
        .trim()
        .parse()
        .map_err(|_| format_err(line, format!("{what}: cannot parse {field:?}")))
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> String {
    let bytes = wtr.into_inner().expect("in-memory csv writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// One row per hour and provider, hours ascending, providers in plan order.
/// Unassigned rows have an empty `server_id`.
pub fn emit_plan_csv(plan: &AllocationPlan) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(PLAN_HEADER).expect("in-memory write");
    for (t, row) in plan.assignment.iter().enumerate() {
        for (p, a) in row.iter().enumerate() {
            let server = a.map(|s| plan.server_ids[s].as_str()).unwrap_or("");
            wtr.write_record([
                t.to_string().as_str(),
                &plan.provider_ids[p],
                server,
                &plan.sizing[p].flavor.flavor_id,
                &plan.sizing[p].count.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(wtr)
}

/// Reads a plan back against the fleet and catalog it refers to. Providers
/// keep their order of first appearance. The cost is left zero; compute it
/// with [`super::plan_cost`] once the demand is known.
pub fn parse_plan_csv(
    text: &str,
    fleet: &[ServerSpec],
    catalog: &[ContainerFlavor],
) -> Result<AllocationPlan, PlanError> {
    let server_index: HashMap<&str, usize> =
        fleet.iter().enumerate().map(|(i, s)| (s.server_id.as_str(), i)).collect();
    let flavors: HashMap<&str, &ContainerFlavor> = catalog.iter().map(|f| (f.flavor_id.as_str(), f)).collect();

    let mut provider_ids: Vec<String> = Vec::new();
    let mut provider_index: HashMap<String, usize> = HashMap::new();
    let mut sizing: Vec<ContainerSizing> = Vec::new();
    let mut cells: Vec<(u64, usize, usize, Option<usize>)> = Vec::new();
    let mut hours = 0;

    for (line, r) in records(text, &PLAN_HEADER)? {
        let hour: usize = number(&r[0], line, "hour")?;
        let server = match r[2].trim() {
            "" => None,
            id => Some(
                *server_index
                    .get(id)
                    .ok_or_else(|| format_err(line, format!("unknown server {id:?}")))?,
            ),
        };
        let flavor = *flavors
            .get(r[3].trim())
            .ok_or_else(|| format_err(line, format!("unknown flavor {:?}", &r[3])))?;
        let count: u32 = number(&r[4], line, "container_count")?;
        if count == 0 {
            return Err(format_err(line, "container_count must be positive"));
        }
        let this = ContainerSizing { flavor: flavor.clone(), count };
        let p = match provider_index.get(&r[1]) {
            Some(&p) => {
                if sizing[p] != this {
                    return Err(format_err(line, format!("provider {} changes container sizing", &r[1])));
                }
                p
            }
            None => {
                provider_index.insert(r[1].to_string(), provider_ids.len());
                provider_ids.push(r[1].to_string());
                sizing.push(this);
                provider_ids.len() - 1
            }
        };
        hours = hours.max(hour + 1);
        cells.push((line, hour, p, server));
    }

    let providers = provider_ids.len();
    let mut seen = vec![vec![false; providers]; hours];
    let mut assignment = vec![vec![None; providers]; hours];
    for (line, t, p, s) in cells {
        if seen[t][p] {
            return Err(format_err(line, format!("duplicate row for hour {t}, provider {}", provider_ids[p])));
        }
        seen[t][p] = true;
        assignment[t][p] = s;
    }
    if let Some(t) = seen.iter().position(|row| row.iter().any(|x| !x)) {
        return Err(PlanError::Format(format!("hour {t} does not list every provider")));
    }

    Ok(AllocationPlan {
        provider_ids,
        server_ids: fleet.iter().map(|s| s.server_id.clone()).collect(),
        powered_on: power_from_assignment(&assignment, fleet.len()),
        assignment,
        sizing,
        cost: CostBreakdown::default(),
    })
}

pub fn emit_cost_summary_csv(cost: &CostBreakdown) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(COST_SUMMARY_HEADER).expect("in-memory write");
    wtr.write_record([cost.energy, cost.bandwidth, cost.migration, cost.sla, cost.total].map(|v| v.to_string()))
        .expect("in-memory write");
    finish(wtr)
}

pub fn parse_cost_summary_csv(text: &str) -> Result<CostBreakdown, PlanError> {
    let rows = records(text, &COST_SUMMARY_HEADER)?;
    let [(line, r)] = rows.as_slice() else {
        return Err(PlanError::Format(format!("expected one summary row, found {}", rows.len())));
    };
    let f = |i: usize| number::<f64>(&r[i], *line, COST_SUMMARY_HEADER[i]);
    Ok(CostBreakdown {
        energy: f(0)?,
        bandwidth: f(1)?,
        migration: f(2)?,
        sla: f(3)?,
        total: f(4)?,
    })
}

pub fn emit_demand_csv(demand: &DemandMatrix) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(DEMAND_HEADER).expect("in-memory write");
    for t in 0..demand.hours() {
        for (p, id) in demand.provider_ids().iter().enumerate() {
            wtr.write_record([t.to_string().as_str(), id, &demand.get(t, p).to_string()])
                .expect("in-memory write");
        }
    }
    finish(wtr)
}

/// Providers keep their order of first appearance.
pub fn parse_demand_csv(text: &str) -> Result<DemandMatrix, PlanError> {
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut cells = Vec::new();
    let mut hours = 0;
    for (line, r) in records(text, &DEMAND_HEADER)? {
        let hour: usize = number(&r[0], line, "hour")?;
        let value: f64 = number(&r[2], line, "demand_mbps")?;
        let p = *index.entry(r[1].to_string()).or_insert_with(|| {
            ids.push(r[1].to_string());
            ids.len() - 1
        });
        hours = hours.max(hour + 1);
        cells.push((line, hour, p, value));
    }
    let providers = ids.len();
    let mut values = vec![f64::NAN; providers * hours];
    for (line, t, p, v) in cells {
        let slot = &mut values[t * providers + p];
        if !slot.is_nan() {
            return Err(format_err(line, format!("duplicate demand for hour {t}, provider {}", ids[p])));
        }
        *slot = v;
    }
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return Err(PlanError::Format(format!(
            "hour {} has no demand for provider {}",
            i / providers,
            ids[i % providers]
        )));
    }
    DemandMatrix::new(ids, hours, values)
}

/// Cost config as TOML `key = value` pairs; missing keys take defaults.
pub fn parse_cost_config(text: &str) -> Result<CostConfig, PlanError> {
    let cfg: CostConfig = toml::from_str(text).map_err(|e| PlanError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn emit_cost_config(cfg: &CostConfig) -> String {
    toml::to_string(cfg).expect("cost config serializes")
}
