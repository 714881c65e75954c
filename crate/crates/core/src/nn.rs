//! Small feed-forward networks in f64 with layer-wise backward passes,
//! Adam, masked softmax helpers and a versioned binary checkpoint format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// Logit offset used for illegal actions.
pub const MASK_LOGIT: f64 = -1e9;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("shape mismatch between network and {0}")]
    Shape(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[in x out]`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { w: Array2::zeros((input, output)), b: Array1::zeros(output) }
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Orthogonal matrix of the given shape scaled by `gain` (Gram-Schmidt on Gaussian columns).
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<f64> {
    let (long, short) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let mut q = Array2::<f64>::zeros((long, short));
    for j in 0..short {
        loop {
            let mut v: Array1<f64> = (0..long).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            for k in 0..j {
                let col = q.column(k);
                let d = col.dot(&v);
                v.scaled_add(-d, &col);
            }
            let n = v.dot(&v).sqrt();
            if n > 1e-8 {
                q.column_mut(j).assign(&(v / n));
                break;
            }
        }
    }
    let q = if rows >= cols { q } else { q.reversed_axes() };
    q * gain
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations saved by `forward_cached` for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    /// Input to every layer.
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// ReLU after every layer except the last.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, head_gain: f64, rng: &mut R) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let gain = if i + 1 == n { head_gain } else { 2f64.sqrt() };
                Linear { w: orthogonal(dims[i], dims[i + 1], gain, rng), b: Array1::zeros(dims[i + 1]) }
            })
            .collect();
        Mlp { layers }
    }

    /// Projection to 256 followed by three hidden layers of 256.
    pub fn standard<R: Rng + ?Sized>(input: usize, output: usize, head_gain: f64, rng: &mut R) -> Self {
        Self::new(input, &DEFAULT_HIDDEN, output, head_gain, rng)
    }

    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        Mlp { layers: dims.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Linear::n_params).sum()
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::Dimension { expected: self.input_dim(), got: x.ncols() });
        }
        Ok(())
    }

    /// Batched forward: one row per sample.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check(&x)?;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(v)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            inputs.push(h);
            h = z;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok((h, ForwardCache { inputs }))
    }

    /// Gradients of `sum(dout * output)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dout: &Array2<f64>) -> Result<Grads, NnError> {
        if dout.ncols() != self.output_dim() || dout.nrows() != cache.inputs[0].nrows() {
            return Err(NnError::Shape("output gradient"));
        }
        let mut grads: Vec<Linear> = Vec::with_capacity(self.layers.len());
        let mut dz = dout.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let gw = x.t().dot(&dz);
            let gb = dz.sum_axis(Axis(0));
            grads.push(Linear { w: gw, b: gb });
            if i > 0 {
                let mut dx = dz.dot(&self.layers[i].w.t());
                // x is the ReLU output of layer i-1
                ndarray::Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                dz = dx;
            }
        }
        grads.reverse();
        Ok(Grads { layers: grads })
    }

    pub fn param_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// `self = (1 - tau) * self + tau * other`
    pub fn polyak_from(&mut self, other: &Mlp, tau: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.zip_mut_with(&b.w, |x, y| *x = (1.0 - tau) * *x + tau * y);
            a.b.zip_mut_with(&b.b, |x, y| *x = (1.0 - tau) * *x + tau * y);
        }
    }
}

pub const DEFAULT_HIDDEN: [usize; 4] = [256, 256, 256, 256];

#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Linear>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads { layers: net.layers.iter().map(|l| Linear::zeros(l.w.nrows(), l.w.ncols())).collect() }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Rescales so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
        n
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Grads,
    v: Grads,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Grads::zeros_like(net), v: Grads::zeros_like(net) }
    }

    /// One bias-corrected Adam update (gradient descent direction).
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<(), NnError> {
        if grads.layers.len() != net.layers.len()
            || grads.layers.iter().zip(&net.layers).any(|(g, l)| g.w.dim() != l.w.dim() || g.b.dim() != l.b.dim())
        {
            return Err(NnError::Shape("gradients"));
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let (lr, eps) = (self.lr, self.eps);
        for ((layer, g), (m, v)) in net.layers.iter_mut().zip(&grads.layers).zip(self.m.layers.iter_mut().zip(self.v.layers.iter_mut())) {
            ndarray::Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
            ndarray::Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
        Ok(())
    }
}

/// Softmax over legal entries; illegal entries get probability exactly 0.
/// With no legal entry, the result is all zeros.
pub fn masked_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let legal = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..logits.len()).filter(|&i| legal(i)).map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![0.0; logits.len()];
    }
    let mut p: Vec<f64> = (0..logits.len()).map(|i| if legal(i) { (logits[i] - max).exp() } else { 0.0 }).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Log-softmax over legal entries; illegal entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: Option<&[bool]>) -> Vec<f64> {
    let legal = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..logits.len()).filter(|&i| legal(i)).map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + (0..logits.len()).filter(|&i| legal(i)).map(|i| (logits[i] - max).exp()).sum::<f64>().ln();
    (0..logits.len()).map(|i| if legal(i) { logits[i] - lse } else { f64::NEG_INFINITY }).collect()
}

/// Adds the mask offset to illegal logits.
pub fn apply_mask(logits: &mut [f64], mask: &[bool]) {
    for (l, &ok) in logits.iter_mut().zip(mask) {
        if !ok {
            *l += MASK_LOGIT;
        }
    }
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn argmax(values: &[f64], mask: Option<&[bool]>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if mask.is_none_or(|m| m[i]) && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

const MAGIC: &[u8; 8] = b"THRLCKPT";
const VERSION: u32 = 1;

/// Named networks plus a free-form metadata string.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: String,
    pub nets: Vec<(String, Mlp)>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Mlp> {
        self.nets.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_bytes(&mut out, self.meta.as_bytes());
        out.extend_from_slice(&(self.nets.len() as u32).to_le_bytes());
        for (name, net) in &self.nets {
            put_bytes(&mut out, name.as_bytes());
            out.extend_from_slice(&(net.layers.len() as u32).to_le_bytes());
            for l in &net.layers {
                out.extend_from_slice(&(l.w.nrows() as u32).to_le_bytes());
                out.extend_from_slice(&(l.w.ncols() as u32).to_le_bytes());
                for v in l.w.iter().chain(l.b.iter()) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| NnError::Checkpoint("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta = String::from_utf8(get_bytes(&mut r)?).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let n = get_u32(&mut r)? as usize;
        let mut nets = Vec::with_capacity(n);
        for _ in 0..n {
            let name = String::from_utf8(get_bytes(&mut r)?).map_err(|e| NnError::Checkpoint(e.to_string()))?;
            let nl = get_u32(&mut r)? as usize;
            let mut layers = Vec::with_capacity(nl);
            for _ in 0..nl {
                let rows = get_u32(&mut r)? as usize;
                let cols = get_u32(&mut r)? as usize;
                let mut vals = vec![0.0; rows * cols + cols];
                for v in vals.iter_mut() {
                    let mut b = [0u8; 8];
                    r.read_exact(&mut b).map_err(|_| NnError::Checkpoint("truncated parameters".into()))?;
                    *v = f64::from_le_bytes(b);
                }
                let b = Array1::from(vals.split_off(rows * cols));
                let w = Array2::from_shape_vec((rows, cols), vals).expect("shape");
                layers.push(Linear { w, b });
            }
            for pair in layers.windows(2) {
                if pair[0].w.ncols() != pair[1].w.nrows() {
                    return Err(NnError::Checkpoint(format!("inconsistent layer shapes in {name}")));
                }
            }
            nets.push((name, Mlp { layers }));
        }
        if !r.is_empty() {
            return Err(NnError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint { meta, nets })
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// One line per layer with shape and parameter norm.
    pub fn describe(&self) -> String {
        let mut s = format!("meta: {}\n", self.meta);
        for (name, net) in &self.nets {
            s.push_str(&format!("{name}: {} params, norm {:.4}\n", net.n_params(), net.param_norm()));
            for (i, l) in net.layers.iter().enumerate() {
                let wn = l.w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let bn = l.b.iter().map(|v| v * v).sum::<f64>().sqrt();
                s.push_str(&format!("  layer {i}: {}x{}  |W| {wn:.4}  |b| {bn:.4}\n", l.w.nrows(), l.w.ncols()));
            }
        }
        s
    }
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn get_u32(r: &mut &[u8]) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| NnError::Checkpoint("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn get_bytes(r: &mut &[u8]) -> Result<Vec<u8>, NnError> {
    let n = get_u32(r)? as usize;
    if r.len() < n {
        return Err(NnError::Checkpoint("truncated".into()));
    }
    let (a, b) = r.split_at(n);
    *r = b;
    Ok(a.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(seed: u64) -> (Mlp, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(5, &[7, 6], 4, 1.0, &mut rng);
        for l in &mut net.layers {
            l.b.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        let x = Array2::from_shape_fn((3, 5), |_| rng.gen_range(-1.0..1.0));
        (net, x)
    }

    #[test]
    fn zero_net_gives_uniform_softmax() {
        let net = Mlp::zeros(4, &[8], 3);
        let out = net.forward_one(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(out, vec![0.0; 3]);
        let p = masked_softmax(&out, None);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_layer_matches_hand_product() {
        let net = Mlp { layers: vec![Linear { w: array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]], b: array![0.5, -0.5] }] };
        let out = net.forward_one(&[1.0, 2.0, -1.0]).unwrap();
        // [1*1 + 2*0 - 1*3 + 0.5, 1*2 - 2*1 - 0.5 - 0.5]
        assert_eq!(out, vec![-1.5, -1.0]);
        assert!(matches!(net.forward_one(&[1.0]), Err(NnError::Dimension { expected: 3, got: 1 })));
    }

    #[test]
    fn identical_rows_identical_outputs() {
        let (net, _) = random_net(1);
        let x = array![[0.1, 0.2, 0.3, 0.4, 0.5], [0.1, 0.2, 0.3, 0.4, 0.5]];
        let y = net.forward(x.view()).unwrap();
        assert_eq!(y.row(0), y.row(1));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let (net, x) = random_net(2);
        let (_, cache) = net.forward_cached(x.view()).unwrap();
        let g = net.backward(&cache, &Array2::zeros((3, 4))).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp { layers: vec![Linear { w: array![[0.3]], b: array![0.0] }] };
        let mut opt = Adam::new(&net, 1e-3);
        let g = Grads { layers: vec![Linear { w: array![[1.0]], b: array![0.0] }] };
        opt.step(&mut net, &g).unwrap();
        assert!((net.layers[0].w[[0, 0]] - (0.3 - 1e-3)).abs() < 1e-10);
        assert_eq!(net.layers[0].b[0], 0.0);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (a, _) = random_net(3);
        let (b, _) = random_net(4);
        let ck = Checkpoint { meta: "kind=test".into(), nets: vec![("actor".into(), a), ("value".into(), b)] };
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }

    #[test]
    fn orthogonal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = orthogonal(6, 4, 1.0, &mut rng);
        let g = q.t().dot(&q);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn mask_offset_kills_probability() {
        let mut l = vec![3.0, 1.0, 2.0];
        apply_mask(&mut l, &[true, false, true]);
        let p = masked_softmax(&l, None);
        assert!(p[1] < 1e-6);
        let exact = masked_softmax(&[3.0, 1.0, 2.0], Some(&[true, false, true]));
        assert_eq!(exact[1], 0.0);
        assert!((p[0] - exact[0]).abs() < 1e-12);
    }
}
