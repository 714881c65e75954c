use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rows_to_matrix, Aggregation, Learner, RlError};
use crate::nn::masked_softmax;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub kl_coeff: f64,
    pub entropy_coeff: f64,
    pub sgd_iters: usize,
    pub minibatch: usize,
    pub batch: usize,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables.
    pub grad_clip: Option<f64>,
    pub normalize_advantages: bool,
    pub aggregation: Aggregation,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.3,
            kl_coeff: 0.2,
            entropy_coeff: 0.0,
            sgd_iters: 5,
            minibatch: 256,
            batch: 1024,
            lr: 1e-4,
            grad_clip: Some(1.0),
            normalize_advantages: true,
            aggregation: Aggregation::RawSum,
        }
    }
}

/// One decision with everything the update needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoSample {
    pub obs: Vec<f64>,
    pub action: usize,
    pub mask: Vec<bool>,
    /// Behaviour-policy probabilities over all actions (0 where masked).
    pub old_probs: Vec<f64>,
    pub advantage: f64,
    pub ret: f64,
}

impl PpoSample {
    pub fn old_logp(&self) -> f64 {
        self.old_probs[self.action].ln()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Largest |ratio - 1| seen in the first minibatch of the update.
    pub first_minibatch_ratio_dev: f64,
    pub minibatches: usize,
}

/// Per-sample objective terms and the gradient of the loss (negated objective) w.r.t. logits.
pub(crate) struct SurrogateTerms {
    pub objective: f64,
    pub ratio: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clipped: bool,
}

pub(crate) fn surrogate_grad(
    logits: &[f64],
    sample: &PpoSample,
    advantage: f64,
    cfg: &PpoConfig,
    dlogits: &mut [f64],
) -> SurrogateTerms {
    let p = masked_softmax(logits, Some(&sample.mask));
    let q = &sample.old_probs;
    let a = sample.action;
    let ratio = (p[a].ln() - sample.old_logp()).exp();
    let clipped_ratio = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
    let unclipped = ratio * advantage <= clipped_ratio * advantage;
    let surr = if unclipped { ratio * advantage } else { clipped_ratio * advantage };

    let mut kl = 0.0;
    let mut ent = 0.0;
    for j in 0..p.len() {
        if sample.mask[j] && p[j] > 0.0 {
            ent -= p[j] * p[j].ln();
            if q[j] > 0.0 {
                kl += q[j] * (q[j].ln() - p[j].ln());
            }
        }
    }
    for j in 0..p.len() {
        if !sample.mask[j] {
            dlogits[j] = 0.0;
            continue;
        }
        let ind = if j == a { 1.0 } else { 0.0 };
        let ds = if unclipped { advantage * ratio * (ind - p[j]) } else { 0.0 };
        let dkl = p[j] - q[j];
        let dh = if p[j] > 0.0 { -p[j] * (p[j].ln() + ent) } else { 0.0 };
        dlogits[j] = -(ds - cfg.kl_coeff * dkl + cfg.entropy_coeff * dh);
    }
    SurrogateTerms {
        objective: surr - cfg.kl_coeff * kl + cfg.entropy_coeff * ent,
        ratio,
        kl,
        entropy: ent,
        clipped: (ratio - 1.0).abs() > cfg.clip,
    }
}

fn normalized_advantages(samples: &[PpoSample], on: bool) -> Vec<f64> {
    let adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
    if !on || adv.len() < 2 {
        return adv;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

fn minibatches<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(|c| c.to_vec()).collect()
}

/// Clipped-surrogate policy update; restores the parameters on a non-finite loss.
pub fn ppo_policy_update<R: Rng + ?Sized>(
    policy: &mut Learner,
    samples: &[PpoSample],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats, RlError> {
    if samples.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    let dim = policy.net.input_dim();
    let n_act = policy.net.output_dim();
    for s in samples {
        if s.obs.len() != dim || s.mask.len() != n_act || s.old_probs.len() != n_act {
            return Err(RlError::Length("sample does not match policy shape".into()));
        }
    }
    let backup = policy.clone();
    let adv = normalized_advantages(samples, cfg.normalize_advantages);
    let mut stats = PpoStats::default();
    let mut count = 0usize;
    let mut clipped = 0usize;
    for epoch in 0..cfg.sgd_iters {
        for (b, mb) in minibatches(samples.len(), cfg.minibatch, rng).into_iter().enumerate() {
            let x = rows_to_matrix(mb.iter().map(|&i| samples[i].obs.as_slice()), dim);
            let (logits, cache) = policy.net.forward_cached(x.view())?;
            let m = mb.len() as f64;
            let mut dout = Array2::zeros((mb.len(), n_act));
            let mut obj = 0.0;
            for (r, &i) in mb.iter().enumerate() {
                let row = logits.row(r);
                let mut d = vec![0.0; n_act];
                let t = surrogate_grad(row.as_slice().unwrap(), &samples[i], adv[i], cfg, &mut d);
                for (j, v) in d.into_iter().enumerate() {
                    dout[[r, j]] = v / m;
                }
                obj += t.objective;
                stats.kl += t.kl;
                stats.entropy += t.entropy;
                clipped += t.clipped as usize;
                count += 1;
                if epoch == 0 && b == 0 {
                    stats.first_minibatch_ratio_dev = stats.first_minibatch_ratio_dev.max((t.ratio - 1.0).abs());
                }
            }
            let loss = -obj / m;
            if !loss.is_finite() {
                *policy = backup;
                return Err(RlError::NonFinite { what: "policy loss", update: policy.opt.t, detail: format!("epoch {epoch} minibatch {b}") });
            }
            stats.policy_loss += loss;
            let mut g = policy.net.backward(&cache, &dout)?;
            if !g.is_finite() {
                *policy = backup;
                return Err(RlError::NonFinite { what: "policy gradient", update: policy.opt.t, detail: format!("epoch {epoch} minibatch {b}") });
            }
            if let Some(c) = cfg.grad_clip {
                g.clip_norm(c);
            }
            policy.opt.step(&mut policy.net, &g)?;
            stats.minibatches += 1;
        }
    }
    if !policy.net.is_finite() {
        *policy = backup;
        return Err(RlError::NonFinite { what: "policy parameters", update: policy.opt.t, detail: String::new() });
    }
    let nb = stats.minibatches.max(1) as f64;
    stats.policy_loss /= nb;
    stats.kl /= count.max(1) as f64;
    stats.entropy /= count.max(1) as f64;
    stats.clip_fraction = clipped as f64 / count.max(1) as f64;
    Ok(stats)
}

/// Mean-squared-error regression of a scalar network onto `targets`; returns the mean loss.
pub fn value_update<R: Rng + ?Sized>(
    value: &mut Learner,
    obs: &[&[f64]],
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    grad_clip: Option<f64>,
    rng: &mut R,
) -> Result<f64, RlError> {
    if obs.is_empty() {
        return Err(RlError::EmptyBatch);
    }
    if obs.len() != targets.len() {
        return Err(RlError::Length(format!("{} observations, {} targets", obs.len(), targets.len())));
    }
    let dim = value.net.input_dim();
    let backup = value.clone();
    let mut total = 0.0;
    let mut nb = 0;
    for epoch in 0..epochs {
        for mb in minibatches(obs.len(), minibatch, rng) {
            let x = rows_to_matrix(mb.iter().map(|&i| obs[i]), dim);
            let (out, cache) = value.net.forward_cached(x.view())?;
            let m = mb.len() as f64;
            let mut dout = Array2::zeros((mb.len(), 1));
            let mut loss = 0.0;
            for (r, &i) in mb.iter().enumerate() {
                let e = out[[r, 0]] - targets[i];
                loss += 0.5 * e * e / m;
                dout[[r, 0]] = e / m;
            }
            if !loss.is_finite() {
                *value = backup;
                return Err(RlError::NonFinite { what: "value loss", update: value.opt.t, detail: format!("epoch {epoch}") });
            }
            let mut g = value.net.backward(&cache, &dout)?;
            if let Some(c) = grad_clip {
                g.clip_norm(c);
            }
            value.opt.step(&mut value.net, &g)?;
            total += loss;
            nb += 1;
        }
    }
    Ok(total / nb.max(1) as f64)
}

/// Policy update followed by a value regression on the same batch.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Learner,
    value: Option<&mut Learner>,
    samples: &[PpoSample],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats, RlError> {
    let mut stats = ppo_policy_update(policy, samples, cfg, rng)?;
    if let Some(v) = value {
        let obs: Vec<&[f64]> = samples.iter().map(|s| s.obs.as_slice()).collect();
        let rets: Vec<f64> = samples.iter().map(|s| s.ret).collect();
        stats.value_loss = value_update(v, &obs, &rets, cfg.sgd_iters, cfg.minibatch, cfg.grad_clip, rng)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(probs: Vec<f64>, action: usize) -> PpoSample {
        let n = probs.len();
        PpoSample { obs: vec![1.0], action, mask: vec![true; n], old_probs: probs, advantage: 1.0, ret: 0.0 }
    }

    #[test]
    fn clipped_branch_has_zero_surrogate_gradient() {
        // current policy puts 0.75 on action 0, old policy 0.5: ratio 1.5
        let logits = [3f64.ln(), 0.0];
        let s = sample(vec![0.5, 0.5], 0);
        let cfg = PpoConfig { kl_coeff: 0.0, entropy_coeff: 0.0, ..PpoConfig::default() };
        let mut d = vec![0.0; 2];
        let t = surrogate_grad(&logits, &s, 1.0, &cfg, &mut d);
        assert!((t.ratio - 1.5).abs() < 1e-12);
        assert!(t.clipped);
        assert_eq!(d, vec![0.0, 0.0]);
        assert!((t.objective - 1.3).abs() < 1e-12);
    }

    #[test]
    fn zero_advantage_only_entropy_drives() {
        let logits = [0.3, -0.2, 0.1];
        let p = masked_softmax(&logits, None);
        let s = sample(p.clone(), 1);
        let cfg = PpoConfig { entropy_coeff: 0.0, ..PpoConfig::default() };
        let mut d = vec![0.0; 3];
        let t = surrogate_grad(&logits, &s, 0.0, &cfg, &mut d);
        assert!(t.kl.abs() < 1e-15);
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        assert!(t.objective.abs() < 1e-15);
    }
}
