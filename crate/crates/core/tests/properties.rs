use proptest::prelude::*;
use revcache::cachedb::keys::revision_key_text;
use revcache::cachedb::{CachedEntry, Version};
use revcache::model::{FieldValue, Pattern, PatternToken, Query, QueryToken, Record, Schema};
use revcache::planner::dyadic::{dyadic_cover, dyadic_incr_keys, dyadic_probe_keys};
use revcache::variants::{read_variants, write_variants};

fn field() -> impl Strategy<Value = FieldValue> {
    prop_oneof![
        (0u32..6).prop_map(FieldValue::from),
        "[ -~]{0,6}".prop_map(FieldValue::new),
        any::<Vec<u8>>().prop_map(|b| FieldValue::new(String::from_utf8_lossy(&b).into_owned())),
    ]
}

fn small_query(k: usize) -> impl Strategy<Value = Query> {
    proptest::collection::vec(prop_oneof![Just(None), (0u32..3).prop_map(Some)], k).prop_map(|v| {
        Query::new(
            v.into_iter()
                .map(|t| t.map_or(QueryToken::Star, |x| QueryToken::Value(x.into())))
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn entries_round_trip(
        rows in proptest::collection::vec(proptest::collection::vec(field(), 3), 0..8),
        version in proptest::collection::vec(any::<u64>(), 0..9),
        snapshot in proptest::option::of(any::<u64>()),
    ) {
        let mut rows: Vec<Record> = rows.into_iter().map(Record::new).collect();
        rows.sort();
        let entry = CachedEntry { version: Version(version), snapshot, rows };
        prop_assert_eq!(CachedEntry::decode(&entry.encode()).unwrap(), entry);
    }

    #[test]
    fn truncated_entries_never_decode(rows in proptest::collection::vec(proptest::collection::vec(field(), 2), 1..4), cut in 0usize..1000) {
        let entry = CachedEntry { version: Version(vec![1, 2]), snapshot: None, rows: rows.into_iter().map(Record::new).collect() };
        let bytes = entry.encode();
        let cut = cut % bytes.len();
        prop_assert!(CachedEntry::decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn distinct_patterns_get_distinct_keys(a in proptest::collection::vec(field(), 2), b in proptest::collection::vec(field(), 2)) {
        let p = |v: Vec<FieldValue>| Pattern::new(v.into_iter().map(PatternToken::Value).collect());
        let (pa, pb) = (p(a), p(b));
        prop_assert_eq!(pa == pb, revision_key_text(&pa) == revision_key_text(&pb));
    }

    #[test]
    fn read_and_write_variants_meet_iff_queries_intersect(a in small_query(3), b in small_query(3)) {
        let reads = read_variants(&a);
        let shared = write_variants(&b).iter().any(|p| reads.contains(p));
        prop_assert_eq!(shared, a.intersects(&b).unwrap());
        let witness = a.witness(&b, &Schema::numeric(3).unwrap()).unwrap();
        prop_assert_eq!(witness.is_some(), shared);
    }

    #[test]
    fn dominance_is_a_partial_order(a in proptest::collection::vec(0u64..4, 3), b in proptest::collection::vec(0u64..4, 3)) {
        let (va, vb) = (Version(a.clone()), Version(b.clone()));
        prop_assert!(va.dominates(&va));
        if va.dominates(&vb) && vb.dominates(&va) {
            prop_assert_eq!(a, b);
        }
        prop_assert_eq!(va.to_string().parse::<Version>().unwrap(), va);
    }

    #[test]
    fn wide_dyadic_covers_are_exact_and_sound(w in 1u32..=32, x in any::<u64>(), y in any::<u64>(), p in any::<u64>()) {
        let mask = (1u64 << w) - 1;
        let (lo, hi) = ((x & mask).min(y & mask), (x & mask).max(y & mask));
        let cover = dyadic_cover(lo, hi, w).unwrap();
        let mut next = lo;
        for c in &cover {
            prop_assert_eq!(c.lo(), next);
            next = c.hi() + 1;
        }
        prop_assert_eq!(next, hi + 1);
        prop_assert!(cover.len() <= 2 * w as usize);
        // A point write meets the read's keys iff the point is in range.
        let point = p & mask;
        let leaf = revcache::planner::DyadicClause::leaf(0, w, point);
        let keyed = dyadic_probe_keys(&cover).intersects(&dyadic_incr_keys(&leaf));
        prop_assert_eq!(keyed, (lo..=hi).contains(&point));
    }
}
