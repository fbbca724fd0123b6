//! Workload configuration.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::cachedb::VersionCompare;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpMix {
    pub select: f64,
    pub insert: f64,
    pub delete: f64,
}

impl OpMix {
    pub const fn new(select: f64, insert: f64, delete: f64) -> Self {
        OpMix { select, insert, delete }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let parts = [self.select, self.insert, self.delete];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(HarnessError::Config(
                "operation probabilities must be non-negative".into(),
            ));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Config(format!(
                "operation probabilities sum to {sum}, not 1"
            )));
        }
        Ok(())
    }

    /// Short label such as `99/0.9/0.1`.
    pub fn label(&self) -> String {
        let pct = |p: f64| {
            let s = format!("{:.1}", p * 100.0);
            s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
        };
        format!("{}/{}/{}", pct(self.select), pct(self.insert), pct(self.delete))
    }
}

/// The five select/insert/delete mixes of the reference experiment.
pub const STANDARD_MIXES: [OpMix; 5] = [
    OpMix::new(0.99, 0.009, 0.001),
    OpMix::new(0.98, 0.01, 0.01),
    OpMix::new(0.90, 0.09, 0.01),
    OpMix::new(0.80, 0.10, 0.10),
    OpMix::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Generational revision counters.
    Revision,
    /// Result cache flushed on every write.
    Naive,
    /// No caching.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    /// Deterministic discrete-event interleaving in virtual time.
    Virtual,
    /// Real OS threads and wall-clock time.
    Threads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Full,
    /// Counters trimmed against the whitelist of the generated query shapes.
    Trimmed,
    /// Counters over the three grid columns only; padding columns dropped.
    Projected,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($name:literal => $variant:expr),+) => {
        impl FromStr for $ty {
            type Err = HarnessError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(HarnessError::Config(format!(concat!("unknown ", $what, " `{}`"), other))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let name = match self { $(v if *v == $variant => $name,)+ _ => unreachable!() };
                f.write_str(name)
            }
        }
    };
}

text_enum!(Strategy, "strategy", "revision" => Strategy::Revision, "naive" => Strategy::Naive, "none" => Strategy::None);
text_enum!(SchedulerKind, "scheduler", "virtual" => SchedulerKind::Virtual, "threads" => SchedulerKind::Threads);
text_enum!(SchemeKind, "scheme", "full" => SchemeKind::Full, "trimmed" => SchemeKind::Trimmed, "projected" => SchemeKind::Projected);

/// Uniform delay in microseconds, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delay {
    pub lo_us: u64,
    pub hi_us: u64,
}

impl Delay {
    pub const fn fixed(us: u64) -> Self {
        Delay { lo_us: us, hi_us: us }
    }

    pub const fn uniform(lo_us: u64, hi_us: u64) -> Self {
        Delay { lo_us, hi_us }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        if self.lo_us >= self.hi_us {
            self.lo_us
        } else {
            rng.gen_range(self.lo_us..=self.hi_us)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// One cache round trip.
    pub cache: Delay,
    pub db_read: Delay,
    pub db_write: Delay,
    /// Pause between a committed write and the start of its invalidation.
    pub write_gap: Delay,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            cache: Delay::uniform(50, 150),
            db_read: Delay::uniform(500, 1500),
            db_write: Delay::uniform(500, 1500),
            write_gap: Delay::uniform(0, 200),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionTarget {
    Global,
    Local,
    Both,
}

/// `none`, or `random:P[:global|local|both]`: after each operation, with
/// probability P, one random key of the target cache is offered for eviction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EvictionSpec {
    None,
    Random { probability: f64, target: EvictionTarget },
}

impl FromStr for EvictionSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || {
            HarnessError::Config(format!(
                "invalid eviction spec `{s}`; expected none or random:P[:global|local|both]"
            ))
        };
        if s == "none" {
            return Ok(EvictionSpec::None);
        }
        let mut parts = s.split(':');
        if parts.next() != Some("random") {
            return Err(bad());
        }
        let probability: f64 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        if !(0.0..=1.0).contains(&probability) {
            return Err(bad());
        }
        let target = match parts.next() {
            None | Some("both") => EvictionTarget::Both,
            Some("global") => EvictionTarget::Global,
            Some("local") => EvictionTarget::Local,
            Some(_) => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(EvictionSpec::Random { probability, target })
    }
}

impl fmt::Display for EvictionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvictionSpec::None => f.write_str("none"),
            EvictionSpec::Random { probability, target } => {
                let t = match target {
                    EvictionTarget::Global => "global",
                    EvictionTarget::Local => "local",
                    EvictionTarget::Both => "both",
                };
                write!(f, "random:{probability}:{t}")
            }
        }
    }
}

impl TryFrom<String> for EvictionSpec {
    type Error = HarnessError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EvictionSpec> for String {
    fn from(e: EvictionSpec) -> String {
        e.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub workers: usize,
    pub ops_per_worker: usize,
    /// Side of the cubic value grid.
    pub grid: usize,
    pub mix: OpMix,
    pub seed: u64,
    pub initial_fill: usize,
    pub strategy: Strategy,
    pub scheduler: SchedulerKind,
    pub scheme: SchemeKind,
    /// Extra columns that every query leaves unconstrained.
    pub pad_columns: usize,
    pub version_compare: VersionCompare,
    pub latency: LatencyModel,
    pub evictions: EvictionSpec,
    pub horizon_ms: u64,
    /// Each worker's clock is offset by a uniform value in ±skew_ms.
    pub skew_ms: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            workers: 10,
            ops_per_worker: 10_000,
            grid: 10,
            mix: STANDARD_MIXES[0],
            seed: 42,
            initial_fill: 500,
            strategy: Strategy::Revision,
            scheduler: SchedulerKind::Virtual,
            scheme: SchemeKind::Full,
            pad_columns: 0,
            version_compare: VersionCompare::PartialOrder,
            latency: LatencyModel::default(),
            evictions: EvictionSpec::None,
            horizon_ms: 1000,
            skew_ms: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.mix.validate()?;
        if self.workers == 0 {
            return Err(HarnessError::Config("at least one worker is required".into()));
        }
        if self.grid == 0 {
            return Err(HarnessError::Config("grid side must be positive".into()));
        }
        if self.horizon_ms == 0 {
            return Err(HarnessError::Config("horizon must be positive".into()));
        }
        let cells = self
            .grid
            .checked_pow(3)
            .ok_or_else(|| HarnessError::Config("grid too large".into()))?;
        if self.initial_fill > cells {
            return Err(HarnessError::Config(format!(
                "initial fill {} exceeds the {cells} grid points",
                self.initial_fill
            )));
        }
        for (name, d) in [
            ("cache", self.latency.cache),
            ("db_read", self.latency.db_read),
            ("db_write", self.latency.db_write),
            ("write_gap", self.latency.write_gap),
        ] {
            if d.lo_us > d.hi_us {
                return Err(HarnessError::Config(format!("{name} latency has lo > hi")));
            }
        }
        if self.latency.cache.lo_us == 0 && self.scheduler == SchedulerKind::Virtual {
            return Err(HarnessError::Config(
                "virtual cache latency must be at least 1us".into(),
            ));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        3 + self.pad_columns
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixes_validate_and_label() {
        for m in STANDARD_MIXES {
            m.validate().unwrap();
        }
        assert_eq!(STANDARD_MIXES[0].label(), "99/0.9/0.1");
        assert_eq!(STANDARD_MIXES[4].label(), "33.3/33.3/33.3");
        assert!(OpMix::new(0.5, 0.5, 0.1).validate().is_err());
        assert!(OpMix::new(1.1, -0.1, 0.0).validate().is_err());
    }

    #[test]
    fn eviction_specs() {
        assert_eq!("none".parse::<EvictionSpec>().unwrap(), EvictionSpec::None);
        assert_eq!(
            "random:0.25:global".parse::<EvictionSpec>().unwrap(),
            EvictionSpec::Random {
                probability: 0.25,
                target: EvictionTarget::Global
            }
        );
        let both: EvictionSpec = "random:1".parse().unwrap();
        assert_eq!(both.to_string().parse::<EvictionSpec>().unwrap(), both);
        for bad in ["random", "random:2", "random:0.5:disk", "lru:0.5", "random:0.1:both:x"] {
            assert!(bad.parse::<EvictionSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn spec_json_defaults_and_strictness() {
        let s: WorkloadSpec = serde_json::from_str(r#"{"workers": 2, "evictions": "random:0.5"}"#).unwrap();
        assert_eq!(s.workers, 2);
        assert_eq!(s.grid, 10);
        assert!(serde_json::from_str::<WorkloadSpec>(r#"{"wrokers": 2}"#).is_err());
        assert!(WorkloadSpec {
            initial_fill: 2000,
            ..WorkloadSpec::default()
        }
        .validate()
        .is_err());
    }
}
