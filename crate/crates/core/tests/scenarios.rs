use std::collections::BTreeSet;

use proptest::prelude::*;

use topohrl::grid::GridSpec;
use topohrl::scenario::{
    attach_outages, generate_scenarios, read_scenario, split_by_difficulty, write_scenario, ChronicsParams,
    OutageRules, SplitSet, N_BUCKETS,
};

fn week() -> ChronicsParams {
    ChronicsParams { n_steps: 7 * 288, ..ChronicsParams::default() }
}

#[test]
fn a_scenario_does_not_depend_on_how_many_are_generated() {
    let spec = GridSpec::ieee14();
    let few = generate_scenarios(&spec, &week(), 3, 42);
    let more = generate_scenarios(&spec, &week(), 6, 42);
    assert_eq!(few[..], more[..3]);
    assert_ne!(generate_scenarios(&spec, &week(), 1, 43)[0], few[0]);
}

#[test]
fn injections_are_balanced_and_non_negative() {
    let spec = GridSpec::ieee14();
    for s in generate_scenarios(&spec, &week(), 4, 7) {
        for t in 0..s.n_steps {
            let f = s.frame(t);
            let (d, g): (f64, f64) = (f.load_mw.iter().sum(), f.gen_mw.iter().sum());
            assert!(f.load_mw.iter().chain(f.gen_mw).all(|&x| x >= 0.0), "scenario {} step {t}", s.id);
            // both sides are rounded to 0.01 MW independently
            assert!((d - g).abs() < 0.01 * (s.n_load + s.n_gen) as f64, "scenario {} step {t}: {d} vs {g}", s.id);
        }
    }
}

#[test]
fn disk_roundtrip_keeps_outages() {
    let spec = GridSpec::ieee14();
    let dir = tempfile::tempdir().unwrap();
    let rules = OutageRules::for_spec(&spec);
    for s in generate_scenarios(&spec, &week(), 2, 9) {
        let s = attach_outages(s, &rules, 9);
        write_scenario(dir.path(), &s).unwrap();
        assert_eq!(read_scenario(dir.path(), s.id).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outages_never_overlap(seed in 0u64..10_000, id in 0usize..50) {
        let spec = GridSpec::ieee14();
        let rules = OutageRules::for_spec(&spec);
        let base = topohrl::scenario::generate_scenario(&spec, &ChronicsParams { n_steps: 3 * 288, ..ChronicsParams::default() }, seed, id);
        let s = attach_outages(base, &rules, seed);
        prop_assert_eq!(s.outages.len(), 3 * rules.per_day);
        for w in s.outages.windows(2) {
            prop_assert!(w[0].step + w[0].duration_steps <= w[1].step);
        }
        for e in &s.outages {
            prop_assert_eq!(e.duration_steps, 48);
            prop_assert!(rules.eligible_lines.contains(&e.line));
            prop_assert!(e.step < s.n_steps);
        }
        // two per day
        for day in 0..3 {
            prop_assert_eq!(s.outages.iter().filter(|e| e.step / 288 == day).count(), 2);
        }
    }

    #[test]
    fn split_is_a_partition_ordered_by_difficulty(difficulty in proptest::collection::vec(0u32..30, 100..400), seed in 0u64..1000) {
        let ids: Vec<usize> = (0..difficulty.len()).map(|i| 1000 + i).collect();
        let m = split_by_difficulty(&ids, &difficulty, seed);
        let all: BTreeSet<usize> = m.train.iter().chain(&m.val).chain(&m.test).copied().collect();
        prop_assert_eq!(all.len(), ids.len());
        prop_assert_eq!(all, ids.iter().copied().collect::<BTreeSet<_>>());
        for b in 0..N_BUCKETS {
            let in_b: Vec<_> = m.entries.iter().filter(|e| e.bucket == b).collect();
            let n = in_b.len() as f64;
            let count = |s: SplitSet| in_b.iter().filter(|e| e.set == s).count() as f64;
            prop_assert!((count(SplitSet::Train) - 0.7 * n).abs() <= 0.5);
            prop_assert!((count(SplitSet::Val) - 0.1 * n).abs() <= 0.5);
            // no entry of a later bucket is easier than one of this bucket
            let hardest = in_b.iter().map(|e| e.difficulty).max().unwrap();
            prop_assert!(m.entries.iter().filter(|e| e.bucket > b).all(|e| e.difficulty >= hardest));
        }
    }
}
