use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Fixed-capacity FIFO store of `(obs, action, reward, next_obs)` records
/// kept in flat arrays.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    rew: Vec<f64>,
    next_obs: Vec<f64>,
    len: usize,
    cursor: usize,
    rng: Rng,
}

/// Row-major batch of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub indices: Vec<usize>,
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub rew: Vec<f64>,
    pub next_obs: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize, rng: Rng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            act: Vec::new(),
            rew: Vec::new(),
            next_obs: Vec::new(),
            len: 0,
            cursor: 0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, obs: &[f64], act: &[f64], rew: f64, next_obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim || next_obs.len() != self.obs_dim || act.len() != self.act_dim {
            return Err(Error::Dimension(format!(
                "transition ({}, {}, {}) for buffer of ({}, {})",
                obs.len(),
                act.len(),
                next_obs.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if self.len < self.capacity {
            self.obs.extend_from_slice(obs);
            self.act.extend_from_slice(act);
            self.rew.push(rew);
            self.next_obs.extend_from_slice(next_obs);
            self.len += 1;
        } else {
            let (o, a) = (self.obs_dim, self.act_dim);
            let c = self.cursor;
            self.obs[c * o..(c + 1) * o].copy_from_slice(obs);
            self.act[c * a..(c + 1) * a].copy_from_slice(act);
            self.rew[c] = rew;
            self.next_obs[c * o..(c + 1) * o].copy_from_slice(next_obs);
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Storage slot of the `k`-th oldest record.
    fn slot(&self, k: usize) -> usize {
        if self.len < self.capacity {
            k
        } else {
            (self.cursor + k) % self.capacity
        }
    }

    /// Reward of the `k`-th oldest record.
    pub fn reward_at(&self, k: usize) -> Option<f64> {
        (k < self.len).then(|| self.rew[self.slot(k)])
    }

    /// Draws `batch` slots uniformly with replacement.
    pub fn sample_indices(&mut self, batch: usize) -> Result<Vec<usize>> {
        if self.len < batch || batch == 0 {
            return Err(Error::Underfull { len: self.len, batch });
        }
        Ok((0..batch).map(|_| self.rng.random_range(0..self.len)).collect())
    }

    pub fn sample(&mut self, batch: usize) -> Result<Batch> {
        let indices = self.sample_indices(batch)?;
        Ok(self.gather(&indices))
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut b = Batch {
            size: indices.len(),
            indices: indices.to_vec(),
            obs: Vec::with_capacity(indices.len() * o),
            act: Vec::with_capacity(indices.len() * a),
            rew: Vec::with_capacity(indices.len()),
            next_obs: Vec::with_capacity(indices.len() * o),
        };
        for &i in indices {
            b.obs.extend_from_slice(&self.obs[i * o..(i + 1) * o]);
            b.act.extend_from_slice(&self.act[i * a..(i + 1) * a]);
            b.rew.push(self.rew[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * o..(i + 1) * o]);
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::Rng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn buf(cap: usize, seed: u64) -> ReplayBuffer {
        ReplayBuffer::new(cap, 1, 1, Rng::seed_from_u64(seed))
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let cap = 1 << 16;
        let mut b = buf(cap, 1);
        for k in 0..=cap {
            b.push(&[0.0], &[0.0], k as f64, &[0.0]).unwrap();
        }
        assert_eq!(b.len(), cap);
        assert_eq!(b.reward_at(0), Some(1.0));
        assert_eq!(b.reward_at(cap - 1), Some(cap as f64));
    }

    #[test]
    fn sampling_is_reproducible() {
        let mut a = buf(100, 9);
        let mut c = buf(100, 9);
        for k in 0..50 {
            a.push(&[0.0], &[0.0], k as f64, &[0.0]).unwrap();
            c.push(&[0.0], &[0.0], k as f64, &[0.0]).unwrap();
        }
        assert_eq!(a.sample_indices(32).unwrap(), c.sample_indices(32).unwrap());
    }

    #[test]
    fn underfull_and_dimension_errors() {
        let mut b = buf(10, 1);
        b.push(&[0.0], &[0.0], 0.0, &[0.0]).unwrap();
        assert!(matches!(b.sample(2), Err(Error::Underfull { len: 1, batch: 2 })));
        assert!(matches!(b.push(&[0.0, 1.0], &[0.0], 0.0, &[0.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn uniform_index_histogram() {
        let mut b = buf(1000, 77);
        for k in 0..1000 {
            b.push(&[0.0], &[0.0], k as f64, &[0.0]).unwrap();
        }
        let draws = 1_000_000;
        let mut counts = vec![0u64; 1000];
        for _ in 0..draws / 1000 {
            for i in b.sample_indices(1000).unwrap() {
                counts[i] += 1;
            }
        }
        let expected = draws as f64 / 1000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 999 degrees of freedom: mean 999, sd ~44.7
        assert!((chi2 - 999.0).abs() < 3.0 * (2.0f64 * 999.0).sqrt(), "chi2 {chi2}");
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity_and_is_fifo(cap in 1usize..40, pushes in 0usize..120) {
            let mut b = buf(cap, 3);
            for k in 0..pushes {
                b.push(&[0.0], &[0.0], k as f64, &[0.0]).unwrap();
                prop_assert!(b.len() <= cap);
            }
            let kept = pushes.min(cap);
            for k in 0..kept {
                prop_assert_eq!(b.reward_at(k), Some((pushes - kept + k) as f64));
            }
        }
    }
}
