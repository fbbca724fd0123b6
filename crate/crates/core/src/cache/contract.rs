//! Behavioural checks every cache backend must pass.
//!
//! The suite writes only keys under a caller-chosen prefix, so it can run
//! against a shared server. Transport failures abort the suite with the
//! underlying error; contract violations are reported per check.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::Serialize;

use super::{Cache, CacheError, CacheKey};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ContractReport {
    pub checks: Vec<CheckResult>,
}

impl ContractReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn check(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            name,
            passed,
            detail: detail.into(),
        });
    }
}

/// Number of threads racing in the concurrent checks.
pub const RACERS: usize = 100;

pub fn run_contract_suite(cache: &dyn Cache, prefix: &str) -> Result<ContractReport, CacheError> {
    let key = |s: &str| CacheKey::new(format!("{prefix}{s}")).map_err(CacheError::from);
    let mut report = ContractReport::default();
    for k in [
        "miss",
        "rt",
        "add",
        "incr-missing",
        "incr",
        "nan",
        "del",
        "race-add",
        "race-incr",
    ] {
        cache.delete(&key(k)?)?;
    }

    let got = cache.get(&key("miss")?)?;
    report.check("get-miss", got.is_none(), format!("{got:?}"));

    cache.set(&key("rt")?, b"5")?;
    let got = cache.get(&key("rt")?)?;
    report.check("set-get-round-trip", got.as_deref() == Some(b"5"), format!("{got:?}"));

    let empty = cache.multiget(&[])?;
    report.check("multiget-empty", empty.is_empty(), format!("{empty:?}"));

    let aligned = cache.multiget(&[key("rt")?, key("miss")?, key("rt")?])?;
    let ok = aligned == vec![Some(b"5".to_vec()), None, Some(b"5".to_vec())];
    report.check("multiget-aligned", ok, format!("{aligned:?}"));

    let first = cache.add(&key("add")?, b"1")?;
    let second = cache.add(&key("add")?, b"2")?;
    let kept = cache.get(&key("add")?)?;
    report.check(
        "add-once",
        first && !second && kept.as_deref() == Some(b"1"),
        format!("first={first} second={second} value={kept:?}"),
    );

    let missing = cache.increment(&key("incr-missing")?)?;
    let created = cache.get(&key("incr-missing")?)?;
    report.check(
        "incr-missing-not-found",
        missing.is_none() && created.is_none(),
        format!("incr={missing:?} after={created:?}"),
    );

    cache.set(&key("incr")?, b"7")?;
    let bumped = cache.increment(&key("incr")?)?;
    report.check("incr-present", bumped == Some(8), format!("{bumped:?}"));

    cache.set(&key("nan")?, b"abc")?;
    let nan = cache.increment(&key("nan")?);
    report.check(
        "incr-non-numeric",
        matches!(nan, Err(CacheError::NonNumeric)),
        format!("{nan:?}"),
    );

    cache.set(&key("del")?, b"x")?;
    cache.delete(&key("del")?)?;
    let gone = cache.get(&key("del")?)?;
    report.check("delete", gone.is_none(), format!("{gone:?}"));

    let race_add = key("race-add")?;
    let winners = AtomicUsize::new(0);
    let errors = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for i in 0..RACERS {
            let (race_add, winners, errors) = (&race_add, &winners, &errors);
            s.spawn(move || match cache.add(race_add, i.to_string().as_bytes()) {
                Ok(true) => {
                    winners.fetch_add(1, Ordering::Relaxed);
                }
                Ok(false) => {}
                Err(_) => {
                    errors.fetch_add(1, Ordering::Relaxed);
                }
            });
        }
    });
    let (w, e) = (winners.into_inner(), errors.into_inner());
    report.check(
        "concurrent-add-unique",
        w == 1 && e == 0,
        format!("winners={w} errors={e}"),
    );

    let race_incr = key("race-incr")?;
    cache.set(&race_incr, b"0")?;
    let errors = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..RACERS {
            let (race_incr, errors) = (&race_incr, &errors);
            s.spawn(move || {
                if !matches!(cache.increment(race_incr), Ok(Some(_))) {
                    errors.fetch_add(1, Ordering::Relaxed);
                }
            });
        }
    });
    let total = cache.get(&race_incr)?;
    let expected = RACERS.to_string();
    report.check(
        "concurrent-increment-total",
        total.as_deref() == Some(expected.as_bytes()) && errors.load(Ordering::Relaxed) == 0,
        format!("final={:?}", total.map(|v| String::from_utf8_lossy(&v).into_owned())),
    );

    Ok(report)
}
