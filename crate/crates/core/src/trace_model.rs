//! Trace, fleet and flavor-catalog data model.
//!
//! Traces are hourly bandwidth series, one per edge service provider. The
//! canonical on-disk form is a three-column CSV
//! (`provider_id,timestamp,bandwidth_mbps`) whose rows may arrive in any
//! order; parsing groups them by provider and checks hour contiguity.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seed::derive_seed;

pub const TRACE_HEADER: [&str; 3] = ["provider_id", "timestamp", "bandwidth_mbps"];
pub const FLEET_HEADER: [&str; 6] = [
    "server_id",
    "bandwidth_mbps",
    "cpu_cores",
    "memory_gb",
    "disk_gb",
    "energy_cost_per_hour",
];
pub const CATALOG_HEADER: [&str; 6] = [
    "flavor_id",
    "cpu_cores",
    "memory_gb",
    "disk_gb",
    "bandwidth_mbps",
    "cost_per_hour",
];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("provider {provider}: missing hour {missing} (next sample at {found})")]
    Gap {
        provider: String,
        missing: String,
        found: String,
    },
    #[error("provider {provider}: duplicate timestamp {timestamp}")]
    Duplicate { provider: String, timestamp: String },
    #[error("invalid bandwidth {value} for provider {provider} at line {line}")]
    InvalidBandwidth {
        provider: String,
        line: u64,
        value: f64,
    },
    #[error("slice [{from}, {to}) out of range for series of length {len}")]
    SliceRange { from: usize, to: usize, len: usize },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One provider's hourly bandwidth samples (Mbps).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSeries {
    provider_id: String,
    start: DateTime<Utc>,
    samples: Vec<f64>,
}

impl TraceSeries {
    pub fn new(
        provider_id: impl Into<String>,
        start: DateTime<Utc>,
        samples: Vec<f64>,
    ) -> Result<Self, TraceError> {
        let provider_id = provider_id.into();
        if samples.is_empty() {
            return Err(TraceError::Invalid(format!(
                "provider {provider_id}: series must have at least one sample"
            )));
        }
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(TraceError::Invalid(format!(
                "provider {provider_id}: start {start} is not hour aligned"
            )));
        }
        if let Some((i, v)) = samples
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(TraceError::Invalid(format!(
                "provider {provider_id}: sample {i} has invalid bandwidth {v}"
            )));
        }
        Ok(Self {
            provider_id,
            start,
            samples,
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + Duration::hours(hour as i64)
    }

    /// Hour of day (0..24) of sample `hour`.
    pub fn hour_of_day(&self, hour: usize) -> usize {
        (self.start.hour() as usize + hour) % 24
    }

    /// Replaces the samples, keeping id and start. Used by the cleaning stage.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self, TraceError> {
        Self::new(self.provider_id.clone(), self.start, samples)
    }

    /// Contiguous sub-series covering hours `[from_hour, to_hour)`.
    pub fn slice_hours(&self, from_hour: usize, to_hour: usize) -> Result<Self, TraceError> {
        if from_hour >= to_hour || to_hour > self.samples.len() {
            return Err(TraceError::SliceRange {
                from: from_hour,
                to: to_hour,
                len: self.samples.len(),
            });
        }
        Ok(Self {
            provider_id: self.provider_id.clone(),
            start: self.timestamp(from_hour),
            samples: self.samples[from_hour..to_hour].to_vec(),
        })
    }
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    let naive = chrono::NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .map_err(|e| format!("bad timestamp {s:?}: {e}"))?;
    if naive.minute() != 0 || naive.second() != 0 {
        return Err(format!("timestamp {s:?} is not hour aligned"));
    }
    Ok(Utc.from_utc_datetime(&naive))
}

fn check_header(
    rdr: &mut csv::Reader<&[u8]>,
    expected: &[&str],
) -> Result<(), TraceError> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(TraceError::Malformed {
            line: 1,
            msg: format!("expected header {:?}, found {:?}", expected.join(","), header),
        });
    }
    Ok(())
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes())
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64, TraceError> {
    field.trim().parse::<f64>().map_err(|_| TraceError::Malformed {
        line,
        msg: format!("{what}: cannot parse {field:?} as a number"),
    })
}

/// Parses the canonical trace CSV into one series per provider, ordered by
/// provider id.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceSeries>, TraceError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, &TRACE_HEADER)?;

    let mut by_provider: BTreeMap<String, Vec<(DateTime<Utc>, f64, u64)>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(TraceError::Malformed {
                line,
                msg: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let provider = record[0].to_string();
        if provider.is_empty() {
            return Err(TraceError::Malformed {
                line,
                msg: "empty provider_id".into(),
            });
        }
        let ts = parse_timestamp(&record[1]).map_err(|msg| TraceError::Malformed { line, msg })?;
        let value = parse_f64(&record[2], line, "bandwidth_mbps")?;
        if !value.is_finite() || value < 0.0 {
            return Err(TraceError::InvalidBandwidth {
                provider,
                line,
                value,
            });
        }
        by_provider.entry(provider).or_default().push((ts, value, line));
    }

    let mut out = Vec::with_capacity(by_provider.len());
    for (provider, mut rows) in by_provider {
        rows.sort_by_key(|r| r.0);
        for pair in rows.windows(2) {
            let (prev, next) = (pair[0].0, pair[1].0);
            if prev == next {
                return Err(TraceError::Duplicate {
                    provider,
                    timestamp: format_timestamp(next),
                });
            }
            if next - prev != Duration::hours(1) {
                return Err(TraceError::Gap {
                    provider,
                    missing: format_timestamp(prev + Duration::hours(1)),
                    found: format_timestamp(next),
                });
            }
        }
        let start = rows[0].0;
        let samples = rows.into_iter().map(|r| r.1).collect();
        out.push(TraceSeries::new(provider, start, samples)?);
    }
    Ok(out)
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> String {
    let bytes = wtr.into_inner().expect("in-memory csv writer cannot fail");
    String::from_utf8(bytes).expect("csv output is utf-8")
}

/// Emits traces in canonical form: providers in the given order, rows in
/// time order, floats in shortest round-trip representation.
pub fn emit_trace_csv(traces: &[TraceSeries]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(TRACE_HEADER).expect("in-memory write");
    for series in traces {
        for (h, v) in series.samples.iter().enumerate() {
            wtr.write_record([
                series.provider_id.as_str(),
                &format_timestamp(series.timestamp(h)),
                &v.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    finish(wtr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub server_id: String,
    pub bandwidth_capacity: f64,
    pub cpu_capacity: f64,
    pub memory_capacity: f64,
    pub disk_capacity: f64,
    pub energy_cost_per_hour: f64,
}

impl ServerSpec {
    pub fn validate(&self) -> Result<(), TraceError> {
        let caps = [
            self.bandwidth_capacity,
            self.cpu_capacity,
            self.memory_capacity,
            self.disk_capacity,
        ];
        if caps.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(TraceError::Invalid(format!(
                "server {}: capacities must be positive",
                self.server_id
            )));
        }
        if !self.energy_cost_per_hour.is_finite() || self.energy_cost_per_hour < 0.0 {
            return Err(TraceError::Invalid(format!(
                "server {}: energy cost must be non-negative",
                self.server_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerFlavor {
    pub flavor_id: String,
    pub cpu: f64,
    pub memory: f64,
    pub disk: f64,
    pub bandwidth: f64,
    pub cost_per_hour: f64,
}

impl ContainerFlavor {
    pub fn validate(&self) -> Result<(), TraceError> {
        let fields = [
            self.cpu,
            self.memory,
            self.disk,
            self.bandwidth,
            self.cost_per_hour,
        ];
        if fields.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(TraceError::Invalid(format!(
                "flavor {}: all fields must be positive",
                self.flavor_id
            )));
        }
        Ok(())
    }
}

fn parse_rows<T>(
    text: &str,
    header: &[&str],
    build: impl Fn(&csv::StringRecord, u64) -> Result<T, TraceError>,
) -> Result<Vec<T>, TraceError> {
    let mut rdr = reader(text);
    check_header(&mut rdr, header)?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(TraceError::Malformed {
                line,
                msg: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        out.push(build(&record, line)?);
    }
    Ok(out)
}

pub fn parse_fleet_csv(text: &str) -> Result<Vec<ServerSpec>, TraceError> {
    let fleet = parse_rows(text, &FLEET_HEADER, |r, line| {
        let server = ServerSpec {
            server_id: r[0].to_string(),
            bandwidth_capacity: parse_f64(&r[1], line, "bandwidth_mbps")?,
            cpu_capacity: parse_f64(&r[2], line, "cpu_cores")?,
            memory_capacity: parse_f64(&r[3], line, "memory_gb")?,
            disk_capacity: parse_f64(&r[4], line, "disk_gb")?,
            energy_cost_per_hour: parse_f64(&r[5], line, "energy_cost_per_hour")?,
        };
        server.validate().map_err(|e| TraceError::Malformed {
            line,
            msg: e.to_string(),
        })?;
        Ok(server)
    })?;
    if fleet.is_empty() {
        return Err(TraceError::Invalid("fleet file lists no servers".into()));
    }
    Ok(fleet)
}

pub fn emit_fleet_csv(fleet: &[ServerSpec]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(FLEET_HEADER).expect("in-memory write");
    for s in fleet {
        wtr.write_record([
            s.server_id.clone(),
            s.bandwidth_capacity.to_string(),
            s.cpu_capacity.to_string(),
            s.memory_capacity.to_string(),
            s.disk_capacity.to_string(),
            s.energy_cost_per_hour.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(wtr)
}

pub fn parse_catalog_csv(text: &str) -> Result<Vec<ContainerFlavor>, TraceError> {
    let catalog = parse_rows(text, &CATALOG_HEADER, |r, line| {
        let flavor = ContainerFlavor {
            flavor_id: r[0].to_string(),
            cpu: parse_f64(&r[1], line, "cpu_cores")?,
            memory: parse_f64(&r[2], line, "memory_gb")?,
            disk: parse_f64(&r[3], line, "disk_gb")?,
            bandwidth: parse_f64(&r[4], line, "bandwidth_mbps")?,
            cost_per_hour: parse_f64(&r[5], line, "cost_per_hour")?,
        };
        flavor.validate().map_err(|e| TraceError::Malformed {
            line,
            msg: e.to_string(),
        })?;
        Ok(flavor)
    })?;
    if catalog.is_empty() {
        return Err(TraceError::Invalid("flavor catalog is empty".into()));
    }
    Ok(catalog)
}

pub fn emit_catalog_csv(catalog: &[ContainerFlavor]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(CATALOG_HEADER).expect("in-memory write");
    for f in catalog {
        wtr.write_record([
            f.flavor_id.clone(),
            f.cpu.to_string(),
            f.memory.to_string(),
            f.disk.to_string(),
            f.bandwidth.to_string(),
            f.cost_per_hour.to_string(),
        ])
        .expect("in-memory write");
    }
    finish(wtr)
}

/// A homogeneous fleet of `count` servers named `edge-00`, `edge-01`, ...
pub fn uniform_fleet(count: usize, template: &ServerSpec) -> Vec<ServerSpec> {
    (0..count)
        .map(|i| ServerSpec {
            server_id: format!("edge-{i:02}"),
            ..template.clone()
        })
        .collect()
}

/// The built-in fleet used when no fleet file is supplied: five 400 Mbps nodes.
pub fn default_fleet() -> Vec<ServerSpec> {
    uniform_fleet(
        5,
        &ServerSpec {
            server_id: String::new(),
            bandwidth_capacity: 400.0,
            cpu_capacity: 32.0,
            memory_capacity: 128.0,
            disk_capacity: 2000.0,
            energy_cost_per_hour: 10.0,
        },
    )
}

/// The built-in catalog used when no catalog file is supplied.
pub fn default_catalog() -> Vec<ContainerFlavor> {
    let flavor = |id: &str, cpu, memory, disk, bandwidth, cost_per_hour| ContainerFlavor {
        flavor_id: id.to_string(),
        cpu,
        memory,
        disk,
        bandwidth,
        cost_per_hour,
    };
    vec![
        flavor("small", 1.0, 2.0, 20.0, 25.0, 0.5),
        flavor("medium", 2.0, 4.0, 40.0, 50.0, 0.9),
        flavor("large", 4.0, 8.0, 80.0, 100.0, 1.6),
    ]
}

/// Parameters of the diurnal-plus-burst synthetic trace generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub provider_count: usize,
    pub days: usize,
    pub base_level: f64,
    pub diurnal_amplitude: f64,
    pub noise_std: f64,
    pub burst_probability: f64,
    pub burst_multiplier: f64,
    pub seed: u64,
    /// First timestamp of every generated series.
    pub start: DateTime<Utc>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            provider_count: 10,
            days: 14,
            base_level: 100.0,
            diurnal_amplitude: 50.0,
            noise_std: 5.0,
            burst_probability: 0.0,
            burst_multiplier: 2.0,
            seed: 7,
            start: default_start(),
        }
    }
}

pub fn default_start() -> DateTime<Utc> {
    let date = NaiveDate::from_ymd_opt(2020, 12, 12).expect("valid date");
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("valid time"))
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: &str| Err(TraceError::Invalid(msg.to_string()));
        if self.provider_count < 1 {
            return bad("provider_count must be at least 1");
        }
        if self.days < 1 {
            return bad("days must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.burst_probability) {
            return bad("burst_probability must lie in [0, 1]");
        }
        if !(self.burst_multiplier >= 1.0 && self.burst_multiplier.is_finite()) {
            return bad("burst_multiplier must be >= 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !self.base_level.is_finite() || !self.diurnal_amplitude.is_finite() {
            return bad("base_level and diurnal_amplitude must be finite");
        }
        if self.start.minute() != 0 || self.start.second() != 0 {
            return bad("start must be hour aligned");
        }
        Ok(())
    }

    /// Days covered by an inclusive date range, for callers that think in
    /// calendar ranges rather than day counts.
    pub fn with_date_range(mut self, first: NaiveDate, last: NaiveDate) -> Result<Self, TraceError> {
        if last < first {
            return Err(TraceError::Invalid(format!("date range {first}..{last} is empty")));
        }
        self.days = ((last - first).num_days() + 1) as usize;
        self.start = Utc.from_utc_datetime(&first.and_hms_opt(0, 0, 0).expect("valid time"));
        Ok(self)
    }
}

/// Generates `provider_count` series of `days * 24` hourly samples.
///
/// Each provider gets its own generator seeded from `cfg.seed` and its index,
/// a random phase, Gaussian noise, and independent per-hour multiplicative
/// bursts. Values are clipped at zero before the burst is applied.
pub fn generate_synthetic_traces(cfg: &SynthConfig) -> Result<Vec<TraceSeries>, TraceError> {
    cfg.validate()?;
    let hours = cfg.days * 24;
    let width = cfg.provider_count.to_string().len().max(3);
    let mut out = Vec::with_capacity(cfg.provider_count);
    for p in 0..cfg.provider_count {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, p as u64));
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        let mut samples = Vec::with_capacity(hours);
        for h in 0..hours {
            let hour_of_day = (cfg.start.hour() as usize + h) % 24;
            let z: f64 = rng.sample(StandardNormal);
            let burst = rng.random::<f64>() < cfg.burst_probability;
            let angle = 2.0 * PI * hour_of_day as f64 / 24.0 + phase;
            let mut value = cfg.base_level + cfg.diurnal_amplitude * angle.sin() + cfg.noise_std * z;
            value = value.max(0.0);
            if burst {
                value *= cfg.burst_multiplier;
            }
            samples.push(value);
        }
        out.push(TraceSeries::new(format!("p{p:0width$}"), cfg.start, samples)?);
    }
    Ok(out)
}
