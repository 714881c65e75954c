use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use topohrl::nn::{apply_mask, masked_log_softmax, masked_softmax, sample_categorical};
use topohrl::rl::{PrioritizedReplay, Transition};

fn transition(i: usize) -> Transition {
    Transition {
        obs: vec![i as f64],
        action: 0,
        reward: 0.0,
        next_obs: vec![],
        done: false,
        k: 1,
        mask: vec![true],
        next_mask: vec![true],
    }
}

/// Upper-tail p-value of Pearson's statistic for observed counts against expected probabilities.
fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn filled(alpha: f64, errors: &[f64]) -> PrioritizedReplay {
    let mut rb = PrioritizedReplay::new(errors.len(), alpha, 0.4);
    for i in 0..errors.len() {
        rb.push(transition(i));
    }
    let idx: Vec<usize> = (0..errors.len()).collect();
    rb.update_priorities(&idx, errors);
    rb
}

fn counts(rb: &PrioritizedReplay, draws: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = vec![0; rb.len()];
    let batch = rb.len();
    for _ in 0..draws.div_ceil(batch) {
        let (idx, _) = rb.sample(batch, &mut rng).unwrap();
        for i in idx {
            c[i] += 1;
        }
    }
    c
}

const ERRORS: [f64; 12] = [0.1, 2.0, 0.5, 0.0, 3.0, 1.0, 0.25, 4.0, 0.75, 1.5, 0.05, 2.5];

#[test]
fn alpha_zero_samples_uniformly() {
    let rb = filled(0.0, &ERRORS);
    let c = counts(&rb, 100_000, 5);
    let p = chi_square_p(&c, &[1.0 / 12.0; 12]);
    assert!(p > 0.001, "chi-square p-value {p}, counts {c:?}");
}

#[test]
fn sampling_follows_priorities_to_the_alpha() {
    let rb = filled(0.6, &ERRORS);
    let w: Vec<f64> = ERRORS.iter().map(|e| (e + rb.eps).powf(0.6)).collect();
    let total: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    let c = counts(&rb, 100_000, 6);
    let p = chi_square_p(&c, &probs);
    assert!(p > 0.001, "chi-square p-value {p}");
}

#[test]
fn importance_weights_match_the_formula() {
    let rb = filled(0.6, &ERRORS);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (idx, w) = rb.sample(12, &mut rng).unwrap();
    let n = ERRORS.len() as f64;
    let raw: Vec<f64> = idx.iter().map(|&i| (n * rb.weight(i) / rb.total()).powf(-0.4)).collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    for (a, b) in w.iter().zip(&raw) {
        assert!((a - b / max).abs() < 1e-12);
    }
}

#[test]
fn new_transitions_get_the_largest_priority() {
    let mut rb = PrioritizedReplay::new(4, 1.0, 0.4);
    for i in 0..3 {
        rb.push(transition(i));
    }
    rb.update_priorities(&[0, 1, 2], &[0.5, 3.0, 1.0]);
    rb.push(transition(3));
    assert!((rb.weight(3) - (3.0 + rb.eps)).abs() < 1e-12);
}

fn logits_and_mask() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        (proptest::collection::vec(-30.0f64..30.0, n), proptest::collection::vec(any::<bool>(), n)).prop_map(
            |(l, mut m)| {
                m[0] = true;
                (l, m)
            },
        )
    })
}

proptest! {
    #[test]
    fn masked_probabilities_are_a_distribution_over_legal_actions((logits, mask) in logits_and_mask(), seed in 0u64..1000) {
        let p = masked_softmax(&logits, Some(&mask));
        let s: f64 = p.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        for (pi, &ok) in p.iter().zip(&mask) {
            if !ok {
                prop_assert_eq!(*pi, 0.0);
            }
        }
        // the additive mask gives the same distribution up to rounding
        let mut shifted = logits.clone();
        apply_mask(&mut shifted, &mask);
        let q = masked_softmax(&shifted, None);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let lp = masked_log_softmax(&logits, Some(&mask));
        for i in 0..p.len() {
            if mask[i] {
                prop_assert!((lp[i].exp() - p[i]).abs() < 1e-12);
            } else {
                prop_assert_eq!(lp[i], f64::NEG_INFINITY);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            prop_assert!(mask[sample_categorical(&p, &mut rng)]);
        }
    }
}
