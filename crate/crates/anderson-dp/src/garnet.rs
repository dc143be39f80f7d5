//! Seeded generator of Garnet random MDPs G(|S|, |A|, b).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::rng::SplitMix64;

/// Parameters of one Garnet instance. The draw order is pinned (reward
/// states, then reward values in state order, then per (s,a) in order:
/// successor set followed by cut points), so a spec fully determines the
/// generated MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GarnetSpec {
    pub num_states: usize,
    pub num_actions: usize,
    /// Successors per (state, action) pair.
    pub branching: usize,
    /// Fraction of states that carry a nonzero reward.
    pub reward_fraction: f64,
    pub reward_low: f64,
    pub reward_high: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for GarnetSpec {
    /// The benchmark's reference instance: G(100, 4, 3), gamma 0.99,
    /// rewards on 10% of states, uniform in (1, 2).
    fn default() -> Self {
        Self {
            num_states: 100,
            num_actions: 4,
            branching: 3,
            reward_fraction: 0.1,
            reward_low: 1.0,
            reward_high: 2.0,
            gamma: 0.99,
            seed: 0,
        }
    }
}

impl GarnetSpec {
    fn validate(&self) -> Result<()> {
        if self.num_states == 0 || self.num_actions == 0 {
            return Err(Error::InvalidArgument(
                "num_states and num_actions must be positive".into(),
            ));
        }
        if self.branching == 0 || self.branching > self.num_states {
            return Err(Error::InvalidArgument(format!(
                "branching must be in [1, {}], got {}",
                self.num_states, self.branching
            )));
        }
        if !(self.reward_fraction > 0.0 && self.reward_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "reward_fraction must be in (0, 1], got {}",
                self.reward_fraction
            )));
        }
        if !(self.reward_low < self.reward_high) {
            return Err(Error::InvalidArgument(format!(
                "reward_low {} must be below reward_high {}",
                self.reward_low, self.reward_high
            )));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be strictly inside (0,1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Generate the Garnet instance determined by `spec`.
///
/// Per (s,a), `branching` distinct successors are drawn uniformly without
/// replacement and their probabilities are the gaps of a random partition of
/// the unit interval. Rewards are zero except on a uniformly drawn subset of
/// round(reward_fraction * |S|) states, where R(s, a) = r(s) for every
/// action, r(s) uniform in (reward_low, reward_high).
pub fn generate(spec: &GarnetSpec) -> Result<Mdp> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let n = spec.num_states;

    // Half-away-from-zero rounding; exact for the reference 0.1 * 100.
    let num_reward_states = (spec.reward_fraction * n as f64).round() as usize;
    let mut reward_states = sample_distinct(&mut rng, n, num_reward_states);
    reward_states.sort_unstable();
    let mut state_rewards = vec![0.0; n];
    for &s in &reward_states {
        // Strictly interior draw: reject the measure-zero u = 0 endpoint.
        let u = loop {
            let u = rng.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        state_rewards[s] = spec.reward_low + u * (spec.reward_high - spec.reward_low);
    }

    let mut transitions = Vec::with_capacity(n * spec.num_actions);
    let mut rewards = Vec::with_capacity(n * spec.num_actions);
    for s in 0..n {
        for _a in 0..spec.num_actions {
            let successors = sample_distinct(&mut rng, n, spec.branching);
            let probs = partition_unit_interval(&mut rng, spec.branching);
            let mut row: Vec<(usize, f64)> =
                successors.into_iter().zip(probs).collect();
            row.sort_unstable_by_key(|&(next, _)| next);
            transitions.push(row);
            rewards.push(state_rewards[s]);
        }
    }

    Mdp::new(n, spec.num_actions, transitions, rewards, spec.gamma)
}

/// `k` distinct indices from [0, n), uniform without replacement, by a
/// partial Fisher-Yates shuffle. Order of the draw is preserved.
fn sample_distinct(rng: &mut SplitMix64, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for j in 0..k {
        let i = j + rng.next_bounded((n - j) as u64) as usize;
        pool.swap(j, i);
    }
    pool.truncate(k);
    pool
}

/// The `b` gaps obtained by sorting b-1 uniform cut points of (0, 1).
/// Redraws in the (measure-zero) event of a zero-width gap.
fn partition_unit_interval(rng: &mut SplitMix64, b: usize) -> Vec<f64> {
    if b == 1 {
        return vec![1.0];
    }
    loop {
        let mut cuts: Vec<f64> = (0..b - 1).map(|_| rng.next_f64()).collect();
        cuts.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gaps = Vec::with_capacity(b);
        let mut prev = 0.0;
        for &c in &cuts {
            gaps.push(c - prev);
            prev = c;
        }
        gaps.push(1.0 - prev);
        if gaps.iter().all(|&g| g > 0.0) {
            // The gaps sum to 1 exactly only up to rounding; absorb the
            // deficit into the largest gap to honor the row-sum invariant.
            let total: f64 = gaps.iter().sum();
            let imax = gaps
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            gaps[imax] += 1.0 - total;
            if gaps.iter().all(|&g| g > 0.0) {
                return gaps;
            }
        }
    }
}
