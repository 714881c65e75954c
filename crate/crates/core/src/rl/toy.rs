//! Tabular toy problems for smoke-testing the learners.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{ppo_update, PpoConfig, PpoSample};
use super::sac::{sac_update, SacConfig, SacNets};
use super::{compute_gae, Learner, PrioritizedReplay, RlError, Transition};
use crate::nn::{masked_softmax, sample_categorical, Mlp};

pub trait ToyEnv {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset(&mut self) -> usize;
    /// Returns (next state, reward, terminal).
    fn step(&mut self, state: usize, action: usize) -> (usize, f64, bool);
    fn max_steps(&self) -> usize;

    fn observe(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        v[s] = 1.0;
        v
    }
}

/// Single state, one step per episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandit {
    pub rewards: Vec<f64>,
}

impl ToyEnv for Bandit {
    fn n_states(&self) -> usize {
        1
    }
    fn n_actions(&self) -> usize {
        self.rewards.len()
    }
    fn reset(&mut self) -> usize {
        0
    }
    fn step(&mut self, _s: usize, a: usize) -> (usize, f64, bool) {
        (0, self.rewards[a], true)
    }
    fn max_steps(&self) -> usize {
        1
    }
}

/// Corridor: action 1 moves right, action 0 returns to the start with a small reward.
/// Entering the last state pays `goal_reward` and ends the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub n: usize,
    pub back_reward: f64,
    pub goal_reward: f64,
    pub horizon: usize,
}

impl Default for Chain {
    fn default() -> Self {
        Chain { n: 5, back_reward: 0.002, goal_reward: 1.0, horizon: 50 }
    }
}

impl ToyEnv for Chain {
    fn n_states(&self) -> usize {
        self.n
    }
    fn n_actions(&self) -> usize {
        2
    }
    fn reset(&mut self) -> usize {
        0
    }
    fn step(&mut self, s: usize, a: usize) -> (usize, f64, bool) {
        if a == 1 {
            let n = s + 1;
            if n == self.n - 1 {
                (n, self.goal_reward, true)
            } else {
                (n, 0.0, false)
            }
        } else {
            (0, self.back_reward, false)
        }
    }
    fn max_steps(&self) -> usize {
        self.horizon
    }
}

pub fn toy_net(input: usize, output: usize, hidden: &[usize], head_gain: f64, rng: &mut ChaCha8Rng) -> Mlp {
    Mlp::new(input, hidden, output, head_gain, rng)
}

/// Action probabilities of a policy network in every state.
pub fn policy_table<E: ToyEnv>(env: &E, policy: &Mlp) -> Vec<Vec<f64>> {
    (0..env.n_states())
        .map(|s| masked_softmax(&policy.forward_one(&env.observe(s)).unwrap(), None))
        .collect()
}

/// Trains PPO; returns the policy and the mean undiscounted episode return per iteration.
pub fn train_ppo<E: ToyEnv>(
    env: &mut E,
    cfg: &PpoConfig,
    iterations: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<(Learner, Vec<f64>), RlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na) = (env.n_states(), env.n_actions());
    let mut policy = Learner::new(toy_net(ns, na, hidden, 0.01, &mut rng), cfg.lr);
    let mut value = Learner::new(toy_net(ns, 1, hidden, 1.0, &mut rng), cfg.lr);
    let mask = vec![true; na];
    let mut curve = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut samples = Vec::with_capacity(cfg.batch);
        let mut returns = Vec::new();
        while samples.len() < cfg.batch {
            let mut s = env.reset();
            let (mut obs, mut acts, mut probs, mut rews, mut dones) = (vec![], vec![], vec![], vec![], vec![]);
            let mut total = 0.0;
            for step in 0..env.max_steps() {
                let o = env.observe(s);
                let p = masked_softmax(&policy.net.forward_one(&o)?, None);
                let a = sample_categorical(&p, &mut rng);
                let (n, r, term) = env.step(s, a);
                total += r;
                obs.push(o);
                acts.push(a);
                probs.push(p);
                rews.push(r);
                // time-limit truncation treated as terminal
                dones.push(term || step + 1 == env.max_steps());
                s = n;
                if term {
                    break;
                }
            }
            returns.push(total);
            let mut vals: Vec<f64> = obs.iter().map(|o| value.net.forward_one(o).map(|v| v[0])).collect::<Result<_, _>>()?;
            vals.push(0.0);
            let k = vec![1; rews.len()];
            let (adv, ret) = compute_gae(&rews, &vals, &dones, &k, cfg.gamma, cfg.lambda)?;
            for i in 0..rews.len() {
                samples.push(PpoSample {
                    obs: obs[i].clone(),
                    action: acts[i],
                    mask: mask.clone(),
                    old_probs: probs[i].clone(),
                    advantage: adv[i],
                    ret: ret[i],
                });
            }
        }
        ppo_update(&mut policy, Some(&mut value), &samples, cfg, &mut rng)?;
        curve.push(returns.iter().sum::<f64>() / returns.len() as f64);
    }
    Ok((policy, curve))
}

/// Trains discrete SAC for `steps` environment steps; returns the networks and per-episode returns.
pub fn train_sac<E: ToyEnv>(
    env: &mut E,
    cfg: &SacConfig,
    steps: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<(SacNets, Vec<f64>), RlError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na) = (env.n_states(), env.n_actions());
    let actor = toy_net(ns, na, hidden, 0.01, &mut rng);
    let q1 = toy_net(ns, na, hidden, 1.0, &mut rng);
    let q2 = toy_net(ns, na, hidden, 1.0, &mut rng);
    let mut nets = SacNets::new(actor, q1, q2, cfg.lr);
    let mut replay = PrioritizedReplay::new(cfg.buffer_capacity, cfg.replay_alpha, cfg.replay_beta);
    let mask = vec![true; na];
    let mut episodes = Vec::new();
    let mut s = env.reset();
    let mut t_ep = 0;
    let mut total = 0.0;
    let mut owed = 0.0;
    for _ in 0..steps {
        let o = env.observe(s);
        let a = if replay.len() < cfg.learning_starts {
            rng.gen_range(0..na)
        } else {
            let p = masked_softmax(&nets.actor.net.forward_one(&o)?, None);
            sample_categorical(&p, &mut rng)
        };
        let (n, r, term) = env.step(s, a);
        t_ep += 1;
        total += r;
        let trunc = t_ep >= env.max_steps();
        replay.push(Transition {
            obs: o,
            action: a,
            reward: r,
            next_obs: env.observe(n),
            done: term,
            k: 1,
            mask: mask.clone(),
            next_mask: mask.clone(),
        });
        s = n;
        if term || trunc {
            episodes.push(total);
            total = 0.0;
            t_ep = 0;
            s = env.reset();
        }
        if replay.len() >= cfg.learning_starts.max(cfg.batch) {
            owed += cfg.updates_per_transition;
            while owed >= 1.0 {
                sac_update(&mut nets, &mut replay, cfg, &mut rng)?;
                owed -= 1.0;
            }
        }
    }
    Ok((nets, episodes))
}
