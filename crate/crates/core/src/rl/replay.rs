use rand::Rng;

use super::{RlError, Transition};

/// Proportional prioritized replay over a sum tree.
#[derive(Clone, Debug)]
pub struct PrioritizedReplay {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    capacity: usize,
    leaves: usize,
    tree: Vec<f64>,
    data: Vec<Transition>,
    next: usize,
    max_priority: f64,
}

impl PrioritizedReplay {
    pub fn new(capacity: usize, alpha: f64, beta: f64) -> Self {
        assert!(capacity > 0);
        let leaves = capacity.next_power_of_two();
        PrioritizedReplay {
            alpha,
            beta,
            eps: 1e-6,
            capacity,
            leaves,
            tree: vec![0.0; 2 * leaves],
            data: Vec::with_capacity(capacity),
            next: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    fn set(&mut self, i: usize, p: f64) {
        let mut node = i + self.leaves;
        self.tree[node] = p;
        while node > 1 {
            node /= 2;
            self.tree[node] = self.tree[2 * node] + self.tree[2 * node + 1];
        }
    }

    pub fn total(&self) -> f64 {
        self.tree[1]
    }

    /// Sampling weight `p_i^alpha` of slot `i`.
    pub fn weight(&self, i: usize) -> f64 {
        self.tree[i + self.leaves]
    }

    /// New transitions enter with the largest priority seen so far.
    pub fn push(&mut self, t: Transition) {
        let i = self.next;
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[i] = t;
        }
        self.set(i, self.max_priority.powf(self.alpha));
        self.next = (self.next + 1) % self.capacity;
    }

    fn find(&self, mut mass: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = 2 * node;
            if mass < self.tree[left] || self.tree[left + 1] <= 0.0 {
                node = left;
            } else {
                mass -= self.tree[left];
                node = left + 1;
            }
        }
        (node - self.leaves).min(self.data.len() - 1)
    }

    /// Draws `n` indices with probability proportional to priority, plus
    /// importance weights normalized by their maximum.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>), RlError> {
        if self.data.len() < n || n == 0 {
            return Err(RlError::InsufficientReplay { have: self.data.len(), need: n.max(1) });
        }
        let total = self.total();
        let len = self.data.len() as f64;
        let mut idx = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for _ in 0..n {
            let i = self.find(rng.gen::<f64>() * total);
            let p = self.weight(i) / total;
            idx.push(i);
            w.push((len * p).powf(-self.beta));
        }
        let max = w.iter().cloned().fold(0.0, f64::max);
        w.iter_mut().for_each(|v| *v /= max);
        Ok((idx, w))
    }

    pub fn update_priorities(&mut self, idx: &[usize], td_errors: &[f64]) {
        for (&i, &e) in idx.iter().zip(td_errors) {
            let p = e.abs() + self.eps;
            self.max_priority = self.max_priority.max(p);
            self.set(i, p.powf(self.alpha));
        }
    }
}
