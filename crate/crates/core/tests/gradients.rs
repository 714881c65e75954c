use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topohrl::nn::{masked_log_softmax, masked_softmax, Mlp};

const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn loss(net: &Mlp, x: &Array2<f64>, dout: &Array2<f64>) -> f64 {
    (net.forward(x.view()).unwrap() * dout).sum()
}

fn at(w: &Array2<f64>, i: usize) -> f64 {
    w[[i / w.ncols(), i % w.ncols()]]
}

fn bump_at(w: &mut Array2<f64>, i: usize, d: f64) {
    let c = w.ncols();
    w[[i / c, i % c]] += d;
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients over
/// the listed (layer, is_bias, flat index) parameters.
fn check(net: &Mlp, x: &Array2<f64>, dout: &Array2<f64>, params: &[(usize, bool, usize)]) -> f64 {
    let (_, cache) = net.forward_cached(x.view()).unwrap();
    let g = net.backward(&cache, dout).unwrap();
    let mut worst: f64 = 0.0;
    for &(l, bias, i) in params {
        let analytic = if bias { g.layers[l].b[i] } else { at(&g.layers[l].w, i) };
        let bump = |d: f64| {
            let mut n = net.clone();
            if bias {
                n.layers[l].b[i] += d;
            } else {
                bump_at(&mut n.layers[l].w, i, d);
            }
            loss(&n, x, dout)
        };
        let numeric = (bump(EPS) - bump(-EPS)) / (2.0 * EPS);
        worst = worst.max(rel_err(analytic, numeric));
    }
    worst
}

fn all_params(net: &Mlp) -> Vec<(usize, bool, usize)> {
    let mut v = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        v.extend((0..layer.w.len()).map(|i| (l, false, i)));
        v.extend((0..layer.b.len()).map(|i| (l, true, i)));
    }
    v
}

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

#[test]
fn every_layer_matches_finite_differences_over_twenty_seeds() {
    for seed in 0..24 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(7, &[6, 5, 4], 3, 1.0, &mut rng);
        // non-zero biases so every layer's bias gradient is exercised
        for l in &mut net.layers {
            l.b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }
        let x = random(5, 7, &mut rng);
        let dout = random(5, 3, &mut rng);
        let e = check(&net, &x, &dout, &all_params(&net));
        assert!(e < TOL, "seed {seed}: relative error {e}");
    }
}

#[test]
fn standard_architecture_sampled_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let net = Mlp::standard(12, 5, 1.0, &mut rng);
    assert_eq!(net.layers.len(), 5);
    let x = random(3, 12, &mut rng);
    let dout = random(3, 5, &mut rng);
    let mut params = Vec::new();
    for (l, layer) in net.layers.iter().enumerate() {
        for _ in 0..8 {
            params.push((l, false, rng.gen_range(0..layer.w.len())));
            params.push((l, true, rng.gen_range(0..layer.b.len())));
        }
    }
    let e = check(&net, &x, &dout, &params);
    assert!(e < TOL, "relative error {e}");
}

#[test]
fn log_softmax_gradient_through_the_network() {
    // d/dlogits of -log p(a) is p - onehot(a); chain it through backward
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let net = Mlp::new(4, &[8], 5, 1.0, &mut rng);
        let x = random(1, 4, &mut rng);
        let mask = [true, false, true, true, false];
        let a = 2;
        let nll = |n: &Mlp| -masked_log_softmax(&n.forward_one(x.as_slice().unwrap()).unwrap(), Some(&mask))[a];
        let (out, cache) = net.forward_cached(x.view()).unwrap();
        let p = masked_softmax(out.as_slice().unwrap(), Some(&mask));
        let d = Array2::from_shape_fn((1, 5), |(_, j)| if mask[j] { p[j] - if j == a { 1.0 } else { 0.0 } } else { 0.0 });
        let g = net.backward(&cache, &d).unwrap();
        for (l, bias, i) in all_params(&net) {
            let analytic = if bias { g.layers[l].b[i] } else { at(&g.layers[l].w, i) };
            let bump = |s: f64| {
                let mut n = net.clone();
                if bias {
                    n.layers[l].b[i] += s;
                } else {
                    bump_at(&mut n.layers[l].w, i, s);
                }
                nll(&n)
            };
            let numeric = (bump(EPS) - bump(-EPS)) / (2.0 * EPS);
            let e = rel_err(analytic, numeric);
            assert!(e < TOL, "seed {seed} layer {l}: {analytic} vs {numeric}");
        }
    }
}
