//! Run summaries and their JSON, TSV and event-log encodings.
//!
//! The TSV layout has a `# schema_version 1` line, then one row per metric
//! and one tab-separated column per run.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::run::OpEvent;
use super::spec::{SchedulerKind, SchemeKind, Strategy, WorkloadSpec};
use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreshnessReport {
    pub label: String,
    pub strategy: Strategy,
    pub scheduler: SchedulerKind,
    pub scheme: SchemeKind,
    pub workers: usize,
    pub ops_per_worker: usize,
    pub seed: u64,
    pub p_select: f64,
    pub p_insert: f64,
    pub p_delete: f64,
    pub selects: u64,
    pub cache_misses: u64,
    pub cache_hits: u64,
    pub hit_ratio: f64,
    pub stale: u64,
    pub max_stale_age_us: u64,
    /// Lower median; 0 when nothing was stale.
    pub median_stale_age_us: u64,
    pub fresh: u64,
    /// 1 when there were no hits.
    pub fresh_ratio: f64,
    /// Writes that changed at least one row.
    pub inserts: u64,
    pub deletes: u64,
    /// Hits of a result cache flushed on every write, replayed over the same
    /// timeline.
    pub naive_hits: u64,
    pub naive_misses: u64,
    pub naive_hit_ratio: f64,
    /// Longest time from a write reaching the table to its operation returning.
    pub epsilon_us: u64,
    pub skew_allowance_us: u64,
    /// Stale ages above `epsilon_us + skew_allowance_us`.
    pub epsilon_violations: u64,
    pub served_local: u64,
    pub served_global: u64,
    pub bypassed: u64,
    pub max_recursion_depth: usize,
    pub evictions_accepted: u64,
    pub evictions_refused: u64,
    /// Single-worker runs only: hits whose rows differ from the table.
    pub oracle_mismatches: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl FreshnessReport {
    pub fn empty(spec: &WorkloadSpec) -> Self {
        FreshnessReport {
            label: spec.mix.label(),
            strategy: spec.strategy,
            scheduler: spec.scheduler,
            scheme: spec.scheme,
            workers: spec.workers,
            ops_per_worker: spec.ops_per_worker,
            seed: spec.seed,
            p_select: spec.mix.select,
            p_insert: spec.mix.insert,
            p_delete: spec.mix.delete,
            selects: 0,
            cache_misses: 0,
            cache_hits: 0,
            hit_ratio: 0.0,
            stale: 0,
            max_stale_age_us: 0,
            median_stale_age_us: 0,
            fresh: 0,
            fresh_ratio: 1.0,
            inserts: 0,
            deletes: 0,
            naive_hits: 0,
            naive_misses: 0,
            naive_hit_ratio: 0.0,
            epsilon_us: 0,
            skew_allowance_us: 0,
            epsilon_violations: 0,
            served_local: 0,
            served_global: 0,
            bypassed: 0,
            max_recursion_depth: 0,
            evictions_accepted: 0,
            evictions_refused: 0,
            oracle_mismatches: 0,
        }
    }

    pub(crate) fn finish_ratios(&mut self) {
        self.hit_ratio = ratio(self.cache_hits, self.selects);
        self.naive_hit_ratio = ratio(self.naive_hits, self.naive_hits + self.naive_misses);
        self.fresh_ratio = if self.cache_hits == 0 {
            1.0
        } else {
            ratio(self.fresh, self.cache_hits)
        };
    }

    /// Violations of the report's own accounting identities.
    pub fn inconsistencies(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.cache_hits + self.cache_misses != self.selects {
            out.push("hits + misses != selects".to_owned());
        }
        if self.fresh > self.cache_hits || self.stale != self.cache_hits - self.fresh {
            out.push("stale != hits - fresh".to_owned());
        }
        if self.served_local + self.served_global != self.cache_hits {
            out.push("local + global != hits".to_owned());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub reports: Vec<FreshnessReport>,
}

impl ReportDocument {
    pub fn new(reports: Vec<FreshnessReport>) -> Self {
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            reports,
        }
    }

    pub fn emit(&self, format: ReportFormat) -> Vec<u8> {
        match format {
            ReportFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self).expect("reports serialize");
                out.push(b'\n');
                out
            }
            ReportFormat::Tsv => self.emit_tsv().into_bytes(),
        }
    }

    pub fn parse(bytes: &[u8], format: ReportFormat) -> Result<Self, HarnessError> {
        let doc = match format {
            ReportFormat::Json => serde_json::from_slice(bytes).map_err(|e| HarnessError::Report(e.to_string()))?,
            ReportFormat::Tsv => {
                let text = std::str::from_utf8(bytes).map_err(|_| HarnessError::Report("not UTF-8".into()))?;
                Self::parse_tsv(text)?
            }
        };
        if doc.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::Report(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    fn emit_tsv(&self) -> String {
        let columns: Vec<Map<String, Value>> = self
            .reports
            .iter()
            .map(|r| match serde_json::to_value(r).expect("reports serialize") {
                Value::Object(m) => m,
                _ => unreachable!("a struct serializes to an object"),
            })
            .collect();
        let mut out = format!("# schema_version {}\n", self.schema_version);
        let names: Vec<String> = match columns.first() {
            Some(m) => m.keys().cloned().collect(),
            None => return out,
        };
        for name in names {
            out.push_str(&name);
            for col in &columns {
                out.push('\t');
                match &col[&name] {
                    Value::String(s) => out.push_str(s),
                    other => out.push_str(&other.to_string()),
                }
            }
            out.push('\n');
        }
        out
    }

    fn parse_tsv(text: &str) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Report(m);
        let mut lines = text.lines();
        let version = lines
            .next()
            .and_then(|l| l.strip_prefix("# schema_version "))
            .ok_or_else(|| bad("missing schema_version line".into()))?;
        let schema_version: u32 = version
            .parse()
            .map_err(|_| bad(format!("bad schema_version `{version}`")))?;
        let mut columns: Vec<Map<String, Value>> = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut cells = line.split('\t');
            let name = cells.next().unwrap_or_default();
            let cells: Vec<&str> = cells.collect();
            if i == 0 {
                columns = vec![Map::new(); cells.len()];
            } else if cells.len() != columns.len() {
                return Err(bad(format!(
                    "row `{name}` has {} cells, expected {}",
                    cells.len(),
                    columns.len()
                )));
            }
            for (col, cell) in columns.iter_mut().zip(cells) {
                let value = if name == "label" {
                    Value::String(cell.to_owned())
                } else {
                    serde_json::from_str(cell).unwrap_or_else(|_| Value::String(cell.to_owned()))
                };
                col.insert(name.to_owned(), value);
            }
        }
        let reports = columns
            .into_iter()
            .map(|m| serde_json::from_value(Value::Object(m)).map_err(|e| bad(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(ReportDocument {
            schema_version,
            reports,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Tsv,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "tsv" => Ok(ReportFormat::Tsv),
            other => Err(HarnessError::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Json => "json",
            ReportFormat::Tsv => "tsv",
        })
    }
}

/// One JSON object per line.
pub fn write_events(events: &[OpEvent], mut out: impl Write) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events(input: impl BufRead) -> Result<Vec<OpEvent>, HarnessError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Report(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| HarnessError::Report(format!("line {}: {e}", i + 1)))?;
        events.push(event);
    }
    Ok(events)
}
