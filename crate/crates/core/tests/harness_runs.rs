//! Whole-workload properties on reduced sizes.

use revcache::cachedb::Source;
use revcache::harness::{
    run_workload, EvictionSpec, EvictionTarget, FreshnessReport, OpMix, SchedulerKind, SchemeKind, Strategy,
    WorkloadSpec, STANDARD_MIXES,
};

fn spec(workers: usize, ops: usize) -> WorkloadSpec {
    WorkloadSpec {
        workers,
        ops_per_worker: ops,
        grid: 6,
        initial_fill: 100,
        ..WorkloadSpec::default()
    }
}

fn freshness(r: &FreshnessReport) -> (u64, u64, u64, u64, u64, u64) {
    (
        r.selects,
        r.cache_hits,
        r.stale,
        r.max_stale_age_us,
        r.median_stale_age_us,
        r.epsilon_violations,
    )
}

#[test]
fn single_worker_with_evictions_never_goes_stale() {
    let s = WorkloadSpec {
        evictions: EvictionSpec::Random {
            probability: 0.5,
            target: EvictionTarget::Both,
        },
        horizon_ms: 50,
        mix: OpMix::new(0.8, 0.1, 0.1),
        ..spec(1, 3000)
    };
    let r = run_workload(&s).unwrap().report;
    assert!(r.evictions_accepted > 100, "{r:?}");
    assert_eq!((r.stale, r.oracle_mismatches), (0, 0));
    assert!(r.max_recursion_depth <= 1);
}

#[test]
fn concurrent_evictions_stay_within_epsilon() {
    let s = WorkloadSpec {
        evictions: "random:0.2:global".parse().unwrap(),
        horizon_ms: 5,
        mix: STANDARD_MIXES[2],
        ..spec(6, 1500)
    };
    let r = run_workload(&s).unwrap().report;
    assert!(r.evictions_accepted > 0);
    assert_eq!(r.epsilon_violations, 0, "{r:?}");
    assert!(r.inconsistencies().is_empty());
}

type Outcome = (String, Option<Source>, Option<String>, Option<u64>);

fn outcomes(events: &[revcache::harness::OpEvent]) -> Vec<Outcome> {
    events
        .iter()
        .map(|e| (e.query.clone(), e.source, e.digest.clone(), e.stale_age_us))
        .collect()
}

#[test]
fn trimmed_and_projected_schemes_match_the_full_scheme() {
    for pad_columns in [0, 2] {
        let base = WorkloadSpec {
            pad_columns,
            mix: STANDARD_MIXES[3],
            ..spec(1, 3000)
        };
        let full = run_workload(&base).unwrap();
        for scheme in [SchemeKind::Trimmed, SchemeKind::Projected] {
            let other = run_workload(&WorkloadSpec { scheme, ..base.clone() }).unwrap();
            assert_eq!(
                freshness(&other.report),
                freshness(&full.report),
                "{scheme}, pad {pad_columns}"
            );
            assert_eq!(
                outcomes(&other.events),
                outcomes(&full.events),
                "{scheme}, pad {pad_columns}"
            );
        }
    }
}

#[test]
fn concurrent_trimmed_runs_stay_fresh_within_epsilon() {
    for scheme in [SchemeKind::Trimmed, SchemeKind::Projected] {
        let s = WorkloadSpec {
            scheme,
            pad_columns: 1,
            mix: STANDARD_MIXES[2],
            ..spec(6, 1500)
        };
        let r = run_workload(&s).unwrap().report;
        assert_eq!(r.epsilon_violations, 0, "{scheme}");
    }
}

#[test]
fn revision_hits_dominate_naive_hits() {
    for mix in STANDARD_MIXES {
        let base = WorkloadSpec { mix, ..spec(4, 1000) };
        let revision = run_workload(&base).unwrap().report;
        let naive = run_workload(&WorkloadSpec {
            strategy: Strategy::Naive,
            ..base
        })
        .unwrap()
        .report;
        assert!(revision.cache_hits >= naive.cache_hits, "{}", mix.label());
        assert!(revision.cache_hits >= revision.naive_hits, "{}", mix.label());
    }
}

#[test]
fn clock_skew_widens_the_allowance() {
    let s = WorkloadSpec {
        skew_ms: 3,
        mix: STANDARD_MIXES[1],
        ..spec(5, 1000)
    };
    let r = run_workload(&s).unwrap().report;
    assert_eq!(r.skew_allowance_us, 6000);
    assert_eq!(r.epsilon_violations, 0);
}

#[test]
fn exact_version_matching_is_no_fresher_than_needed() {
    let s = WorkloadSpec {
        version_compare: revcache::cachedb::VersionCompare::ExactEquality,
        ..spec(3, 1000)
    };
    let r = run_workload(&s).unwrap().report;
    assert_eq!(r.epsilon_violations, 0);
}

#[test]
fn real_threads_soak() {
    let s = WorkloadSpec {
        scheduler: SchedulerKind::Threads,
        mix: STANDARD_MIXES[3],
        ..spec(4, 2000)
    };
    let r = run_workload(&s).unwrap().report;
    assert!(r.inconsistencies().is_empty());
    assert!(r.selects + r.inserts + r.deletes <= 8000);
}

#[test]
fn invalid_specs_are_rejected() {
    for bad in [
        WorkloadSpec {
            workers: 0,
            ..spec(1, 1)
        },
        WorkloadSpec {
            mix: OpMix::new(0.5, 0.2, 0.2),
            ..spec(1, 1)
        },
        WorkloadSpec {
            initial_fill: 1000,
            ..spec(1, 1)
        },
    ] {
        assert!(run_workload(&bad).is_err());
    }
}
