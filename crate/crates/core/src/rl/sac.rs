use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rows_to_matrix, Learner, PrioritizedReplay, RlError};
use crate::nn::{masked_log_softmax, masked_softmax, Mlp};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub tau: f64,
    /// Gradient updates between two polyak steps.
    pub target_update_freq: u64,
    /// Fixed entropy temperature.
    pub alpha_entropy: f64,
    pub reward_scale: f64,
    pub replay_alpha: f64,
    pub replay_beta: f64,
    pub buffer_capacity: usize,
    /// Transitions collected before the first update.
    pub learning_starts: usize,
    /// Gradient updates per collected transition.
    pub updates_per_transition: f64,
    pub grad_clip: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            gamma: 0.99,
            lr: 1e-4,
            batch: 512,
            tau: 5e-3,
            target_update_freq: 100,
            alpha_entropy: 0.05,
            reward_scale: 3.0,
            replay_alpha: 0.6,
            replay_beta: 0.4,
            buffer_capacity: 100_000,
            learning_starts: 1024,
            updates_per_transition: 0.25,
            grad_clip: Some(10.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SacNets {
    pub actor: Learner,
    pub q1: Learner,
    pub q2: Learner,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub updates: u64,
}

impl SacNets {
    pub fn new(actor: Mlp, q1: Mlp, q2: Mlp, lr: f64) -> Self {
        SacNets {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor: Learner::new(actor, lr),
            q1: Learner::new(q1, lr),
            q2: Learner::new(q2, lr),
            updates: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SacStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_q: f64,
    pub entropy: f64,
}

/// Soft state value `sum_a pi(a) [min Q(a) - alpha log pi(a)]` over legal actions.
pub fn soft_value(probs: &[f64], logp: &[f64], q_min: &[f64], mask: &[bool], alpha: f64) -> f64 {
    let mut v = 0.0;
    for a in 0..probs.len() {
        if mask[a] && probs[a] > 0.0 {
            let ent = if alpha == 0.0 { 0.0 } else { alpha * logp[a] };
            v += probs[a] * (q_min[a] - ent);
        }
    }
    v
}

/// One discrete soft actor-critic update from prioritized replay.
pub fn sac_update<R: Rng + ?Sized>(
    nets: &mut SacNets,
    replay: &mut PrioritizedReplay,
    cfg: &SacConfig,
    rng: &mut R,
) -> Result<SacStats, RlError> {
    let (idx, weights) = replay.sample(cfg.batch, rng)?;
    let dim = nets.actor.net.input_dim();
    let n_act = nets.actor.net.output_dim();
    let b = idx.len();
    let bf = b as f64;
    let x = rows_to_matrix(idx.iter().map(|&i| replay.get(i).obs.as_slice()), dim);
    let xn = rows_to_matrix(idx.iter().map(|&i| replay.get(i).next_obs.as_slice()), dim);

    let next_logits = nets.actor.net.forward(xn.view())?;
    let t1 = nets.q1_target.forward(xn.view())?;
    let t2 = nets.q2_target.forward(xn.view())?;
    let mut y = vec![0.0; b];
    for (r, &i) in idx.iter().enumerate() {
        let tr = replay.get(i);
        y[r] = cfg.reward_scale * tr.reward;
        if !tr.done && tr.next_mask.iter().any(|m| *m) {
            let l = next_logits.row(r);
            let l = l.as_slice().unwrap();
            let p = masked_softmax(l, Some(&tr.next_mask));
            let lp = masked_log_softmax(l, Some(&tr.next_mask));
            let qmin: Vec<f64> = (0..n_act).map(|a| t1[[r, a]].min(t2[[r, a]])).collect();
            y[r] += cfg.gamma.powi(tr.k as i32) * soft_value(&p, &lp, &qmin, &tr.next_mask, cfg.alpha_entropy);
        }
    }

    let (q1, c1) = nets.q1.net.forward_cached(x.view())?;
    let (q2, c2) = nets.q2.net.forward_cached(x.view())?;
    let mut d1 = Array2::zeros((b, n_act));
    let mut d2 = Array2::zeros((b, n_act));
    let mut td = vec![0.0; b];
    let mut critic_loss = 0.0;
    let mut mean_q = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let a = replay.get(i).action;
        let e1 = q1[[r, a]] - y[r];
        let e2 = q2[[r, a]] - y[r];
        critic_loss += 0.5 * weights[r] * (e1 * e1 + e2 * e2) / bf;
        d1[[r, a]] = weights[r] * e1 / bf;
        d2[[r, a]] = weights[r] * e2 / bf;
        td[r] = 0.5 * (e1.abs() + e2.abs());
        mean_q += q1[[r, a]].min(q2[[r, a]]) / bf;
    }
    if !critic_loss.is_finite() {
        return Err(RlError::NonFinite { what: "critic loss", update: nets.updates, detail: format!("batch {b}") });
    }

    let (logits, ca) = nets.actor.net.forward_cached(x.view())?;
    let mut da = Array2::zeros((b, n_act));
    let mut actor_loss = 0.0;
    let mut entropy = 0.0;
    for (r, &i) in idx.iter().enumerate() {
        let mask = &replay.get(i).mask;
        let l = logits.row(r);
        let l = l.as_slice().unwrap();
        let p = masked_softmax(l, Some(mask));
        let lp = masked_log_softmax(l, Some(mask));
        let f: Vec<f64> = (0..n_act)
            .map(|a| {
                if !mask[a] || p[a] == 0.0 {
                    return 0.0;
                }
                let ent = if cfg.alpha_entropy == 0.0 { 0.0 } else { cfg.alpha_entropy * lp[a] };
                ent - q1[[r, a]].min(q2[[r, a]])
            })
            .collect();
        let loss: f64 = (0..n_act).map(|a| p[a] * f[a]).sum();
        actor_loss += loss / bf;
        entropy -= (0..n_act).filter(|&a| p[a] > 0.0).map(|a| p[a] * lp[a]).sum::<f64>() / bf;
        for a in 0..n_act {
            if mask[a] {
                da[[r, a]] = p[a] * (f[a] - loss) / bf;
            }
        }
    }
    if !actor_loss.is_finite() {
        return Err(RlError::NonFinite { what: "actor loss", update: nets.updates, detail: format!("batch {b}") });
    }

    for (learner, cache, d) in [(&mut nets.q1, &c1, &d1), (&mut nets.q2, &c2, &d2), (&mut nets.actor, &ca, &da)] {
        let mut g = learner.net.backward(cache, d)?;
        if let Some(c) = cfg.grad_clip {
            g.clip_norm(c);
        }
        learner.opt.step(&mut learner.net, &g)?;
    }
    replay.update_priorities(&idx, &td);
    nets.updates += 1;
    if cfg.target_update_freq > 0 && nets.updates.is_multiple_of(cfg.target_update_freq) {
        nets.q1_target.polyak_from(&nets.q1.net, cfg.tau);
        nets.q2_target.polyak_from(&nets.q2.net, cfg.tau);
    }
    Ok(SacStats { critic_loss, actor_loss, mean_q, entropy })
}
