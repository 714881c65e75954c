//! PPO with clipped surrogate, fixed KL penalty and entropy bonus; discrete
//! SAC with twin critics and prioritized replay; SMDP segment aggregation.

pub mod gae;
pub mod ppo;
pub mod replay;
pub mod sac;
pub mod toy;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Adam, Mlp, NnError};

pub use gae::compute_gae;
pub use ppo::{ppo_update, PpoConfig, PpoSample, PpoStats};
pub use replay::PrioritizedReplay;
pub use sac::{sac_update, SacConfig, SacNets, SacStats};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("replay holds {have} transitions, need {need}")]
    InsufficientReplay { have: usize, need: usize },
    #[error("non-finite {what} at update {update}: {detail}")]
    NonFinite { what: &'static str, update: u64, detail: String },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// A network with its optimizer.
#[derive(Clone, Debug)]
pub struct Learner {
    pub net: Mlp,
    pub opt: Adam,
}

impl Learner {
    pub fn new(net: Mlp, lr: f64) -> Self {
        let opt = Adam::new(&net, lr);
        Learner { net, opt }
    }
}

/// How rewards inside an option segment are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plain sum; discounting is applied once as gamma^k at the bootstrap.
    #[default]
    RawSum,
    /// sum_i gamma^i r_i inside the segment.
    Discounted,
}

/// One SMDP transition: the decision, the rewards until the next decision, and where it led.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    /// Segment length in environment steps, at least 1.
    pub k: usize,
    pub mask: Vec<bool>,
    pub next_mask: Vec<bool>,
}

/// Accumulates step rewards between two decisions.
#[derive(Clone, Debug)]
pub struct Segment<P> {
    pub payload: P,
    pub reward: f64,
    pub k: usize,
    gamma: f64,
    mode: Aggregation,
}

impl<P> Segment<P> {
    pub fn new(payload: P, gamma: f64, mode: Aggregation) -> Self {
        Segment { payload, reward: 0.0, k: 0, gamma, mode }
    }

    pub fn add(&mut self, r: f64) {
        let w = match self.mode {
            Aggregation::RawSum => 1.0,
            Aggregation::Discounted => self.gamma.powi(self.k as i32),
        };
        self.reward += w * r;
        self.k += 1;
    }
}

pub(crate) fn rows_to_matrix<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Array2<f64> {
    let n = rows.len();
    let mut m = Array2::zeros((n, dim));
    for (i, r) in rows.enumerate() {
        m.row_mut(i).assign(&ndarray::ArrayView1::from(r));
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_sum_segment() {
        let mut s = Segment::new((), 0.9, Aggregation::RawSum);
        for r in [0.5, 0.25, 0.25] {
            s.add(r);
        }
        assert_eq!((s.k, s.reward), (3, 1.0));
        let mut d = Segment::new((), 0.5, Aggregation::Discounted);
        for r in [1.0, 1.0, 1.0] {
            d.add(r);
        }
        assert_eq!(d.reward, 1.75);
    }
}
