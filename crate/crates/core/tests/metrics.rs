mod common;

use common::record;
use topohrl::engine::{DoneReason, EpisodeRecord};
use topohrl::metrics::{aggregate, extract_sequences, format_table, mean_std};

fn close(a: Option<f64>, b: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() < 1e-12)
}

fn two_episodes() -> Vec<EpisodeRecord> {
    vec![
        record(0, 10, &[(2, 1, "a", "T1", 1), (3, 4, "b", "T2", 2), (7, 1, "c", "T3", 1)], DoneReason::Horizon),
        record(1, 6, &[(0, 1, "a", "T1", 1), (1, 4, "b", "T2", 2), (2, 5, "d", "T4", 3)], DoneReason::DemandLost),
    ]
}

#[test]
fn hand_counted_statistics() {
    let r = aggregate(&two_episodes(), 10);
    assert_eq!(r.n_scenarios, 2);
    assert_eq!(r.episodes[1].length, 5);
    assert_eq!(r.mean_episode_length, 7.5);
    assert_eq!(r.unsolved_scenarios, 1);
    assert_eq!(r.topo_changes, 6);
    assert_eq!(r.unique_topologies, 4);
    // depths 1, 2, 1, 1, 2, 3
    assert!(close(r.topo_depth_mean, 10.0 / 6.0));
    assert!(close(r.topo_depth_std, (5.0f64 / 9.0).sqrt()));
    // sequences (1a, 4b) and (1a, 4b, 5d), each seen once
    assert_eq!(r.unique_sequences, 2);
    assert!(close(r.sequence_length_mean, 2.5));
    assert!(close(r.sequence_length_std, 0.5));
    assert!(close(r.sequence_repeatability_mean, 1.0));
    assert!(close(r.sequence_repeatability_std, 0.0));
    // every step pays 0.5, so both episodes normalize to 0.5 * horizon
    assert!((r.mean_normalized_reward - 5.0).abs() < 1e-12);
    let dist: Vec<(usize, f64)> = r.substation_distribution.into_iter().collect();
    assert_eq!(dist, vec![(1, 0.5), (4, 2.0 / 6.0), (5, 1.0 / 6.0)]);
}

#[test]
fn repeated_sequences_raise_repeatability() {
    let mut eps = two_episodes();
    eps.push(record(2, 10, &[(4, 1, "a", "T1", 1), (5, 4, "b", "T2", 2)], DoneReason::Horizon));
    let r = aggregate(&eps, 10);
    assert_eq!(r.unique_sequences, 2);
    // counts 2 and 1
    assert!(close(r.sequence_repeatability_mean, 1.5));
    assert!(close(r.sequence_repeatability_std, 0.5));
}

#[test]
fn sequences_need_two_consecutive_changes() {
    let r = record(0, 20, &[(1, 1, "a", "x", 1), (3, 2, "b", "x", 1), (4, 3, "c", "x", 1), (5, 1, "a", "x", 1), (9, 2, "b", "x", 1)], DoneReason::Horizon);
    let seqs = extract_sequences(&r);
    assert_eq!(seqs, vec![vec![(2, "b".to_string()), (3, "c".to_string()), (1, "a".to_string())]]);
}

#[test]
fn empty_samples_report_null() {
    assert_eq!(mean_std(&[]), (None, None));
    let quiet = vec![record(0, 10, &[], DoneReason::Horizon)];
    for r in [aggregate(&quiet, 10), aggregate(&[], 10)] {
        assert_eq!(r.topo_depth_mean, None);
        assert_eq!(r.sequence_length_std, None);
        assert_eq!(r.sequence_repeatability_mean, None);
        assert_eq!(r.unique_topologies, 0);
        assert!(r.substation_distribution.is_empty());
    }
    let table = format_table(&[("quiet", &aggregate(&quiet, 10))]);
    assert!(table.contains("null"));
    assert!(table.contains("Mean topo depth"));
}

#[test]
fn records_survive_jsonl() {
    for r in two_episodes() {
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).unwrap();
        let back = EpisodeRecord::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, r);
    }
}
