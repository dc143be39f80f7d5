//! Finite MDP data model, Bellman operators, and exact value oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-12;

/// Finite discounted MDP with a sparse transition kernel.
///
/// Transitions are stored per (state, action) as `(next_state, probability)`
/// lists; Garnet instances have few successors per pair, so dense |S|x|S|x|A|
/// storage would be wasted.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// Indexed by `s * num_actions + a`.
    transitions: Vec<Vec<(usize, f64)>>,
    /// Indexed by `s * num_actions + a`.
    rewards: Vec<f64>,
    gamma: f64,
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument(
                "num_states and num_actions must be positive".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be strictly inside (0,1), got {gamma}"
            )));
        }
        let cells = num_states * num_actions;
        if transitions.len() != cells || rewards.len() != cells {
            return Err(Error::DimensionMismatch(format!(
                "expected {cells} (s,a) cells, got {} transitions and {} rewards",
                transitions.len(),
                rewards.len()
            )));
        }
        for (idx, row) in transitions.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "empty successor list at cell {idx}"
                )));
            }
            let mut total = 0.0;
            for &(next, p) in row {
                if next >= num_states {
                    return Err(Error::InvalidArgument(format!(
                        "next state {next} out of range at cell {idx}"
                    )));
                }
                if !(p > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "non-positive transition probability {p} at cell {idx}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidArgument(format!(
                    "transition row at cell {idx} sums to {total}, expected 1"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub fn successors(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.transitions[state * self.num_actions + action]
    }

    /// Q-value of (s,a) under the estimate `v`: R(s,a) + gamma * E[v(S')].
    fn q_value(&self, state: usize, action: usize, v: &[f64]) -> f64 {
        let mut expect = 0.0;
        for &(next, p) in self.successors(state, action) {
            expect += p * v[next];
        }
        self.reward(state, action) + self.gamma * expect
    }

    pub fn to_json(&self) -> Result<String> {
        let mut rewards = Vec::with_capacity(self.num_states);
        let mut transitions = Vec::with_capacity(self.num_states);
        for s in 0..self.num_states {
            let mut r_row = Vec::with_capacity(self.num_actions);
            let mut t_row = Vec::with_capacity(self.num_actions);
            for a in 0..self.num_actions {
                r_row.push(self.reward(s, a));
                t_row.push(
                    self.successors(s, a)
                        .iter()
                        .map(|&(next, p)| SuccessorDoc { next, p })
                        .collect(),
                );
            }
            rewards.push(r_row);
            transitions.push(t_row);
        }
        let doc = MdpDoc {
            version: MDP_FORMAT_VERSION,
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.gamma,
            rewards,
            transitions,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MdpDoc = serde_json::from_str(text)?;
        if doc.version != MDP_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported mdp format version {}",
                doc.version
            )));
        }
        let mut rewards = Vec::with_capacity(doc.num_states * doc.num_actions);
        let mut transitions = Vec::with_capacity(doc.num_states * doc.num_actions);
        if doc.rewards.len() != doc.num_states || doc.transitions.len() != doc.num_states {
            return Err(Error::DimensionMismatch(
                "per-state table lengths disagree with num_states".into(),
            ));
        }
        for s in 0..doc.num_states {
            if doc.rewards[s].len() != doc.num_actions || doc.transitions[s].len() != doc.num_actions
            {
                return Err(Error::DimensionMismatch(
                    "per-action table lengths disagree with num_actions".into(),
                ));
            }
            for a in 0..doc.num_actions {
                rewards.push(doc.rewards[s][a]);
                transitions.push(
                    doc.transitions[s][a]
                        .iter()
                        .map(|d| (d.next, d.p))
                        .collect(),
                );
            }
        }
        Self::new(doc.num_states, doc.num_actions, transitions, rewards, doc.gamma)
    }
}

pub const MDP_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MdpDoc {
    version: u32,
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<SuccessorDoc>>>,
}

#[derive(Serialize, Deserialize)]
struct SuccessorDoc {
    next: usize,
    p: f64,
}

/// Per-state distribution over actions. Deterministic policies put mass 1 on
/// a single action.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        for (s, row) in probs.iter().enumerate() {
            let mut total = 0.0;
            for &p in row {
                if p < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "negative action probability at state {s}"
                    )));
                }
                total += p;
            }
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidArgument(format!(
                    "action distribution at state {s} sums to {total}, expected 1"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = Vec::with_capacity(actions.len());
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::InvalidArgument(format!(
                    "action {a} at state {s} out of range"
                )));
            }
            let mut row = vec![0.0; num_actions];
            row[a] = 1.0;
            probs.push(row);
        }
        Ok(Self { probs })
    }

    pub fn num_states(&self) -> usize {
        self.probs.len()
    }

    pub fn action_probs(&self, state: usize) -> &[f64] {
        &self.probs[state]
    }

    /// The chosen action per state, if the policy is deterministic.
    pub fn deterministic_actions(&self) -> Option<Vec<usize>> {
        self.probs
            .iter()
            .map(|row| {
                let mut chosen = None;
                for (a, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    if p != 1.0 || chosen.is_some() {
                        return None;
                    }
                    chosen = Some(a);
                }
                chosen
            })
            .collect()
    }

    fn check_compatible(&self, mdp: &Mdp) -> Result<()> {
        if self.probs.len() != mdp.num_states() {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} states, mdp has {}",
                self.probs.len(),
                mdp.num_states()
            )));
        }
        for (s, row) in self.probs.iter().enumerate() {
            if row.len() != mdp.num_actions() {
                return Err(Error::DimensionMismatch(format!(
                    "policy row {s} has {} actions, mdp has {}",
                    row.len(),
                    mdp.num_actions()
                )));
            }
        }
        Ok(())
    }
}

/// Real vector over states.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(num_states: usize) -> Self {
        Self(vec![0.0; num_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl std::ops::Deref for ValueFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_value_len(mdp: &Mdp, v: &[f64]) -> Result<()> {
    if v.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "value vector has length {}, mdp has {} states",
            v.len(),
            mdp.num_states()
        )));
    }
    Ok(())
}

/// Policy-induced reward vector and row-stochastic transition matrix:
/// R_pi(s) = sum_a pi(a|s) R(s,a), P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a).
pub fn induced_kernels(mdp: &Mdp, policy: &Policy) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    policy.check_compatible(mdp)?;
    let n = mdp.num_states();
    let mut reward_vector = vec![0.0; n];
    let mut transition_matrix = vec![vec![0.0; n]; n];
    for s in 0..n {
        let row = policy.action_probs(s);
        for (a, &pa) in row.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            reward_vector[s] += pa * mdp.reward(s, a);
            for &(next, p) in mdp.successors(s, a) {
                transition_matrix[s][next] += pa * p;
            }
        }
    }
    Ok((reward_vector, transition_matrix))
}

/// One application of the evaluation operator: T_pi v = R_pi + gamma P_pi v.
pub fn bellman_eval(mdp: &Mdp, policy: &Policy, v: &ValueFunction) -> Result<ValueFunction> {
    policy.check_compatible(mdp)?;
    check_value_len(mdp, v)?;
    let n = mdp.num_states();
    let mut out = vec![0.0; n];
    for s in 0..n {
        let mut total = 0.0;
        for (a, &pa) in policy.action_probs(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            total += pa * mdp.q_value(s, a, v);
        }
        out[s] = total;
    }
    Ok(ValueFunction(out))
}

/// One application of the optimality operator:
/// (Tv)(s) = max_a [ R(s,a) + gamma sum_{s'} P(s'|s,a) v(s') ].
pub fn bellman_opt(mdp: &Mdp, v: &ValueFunction) -> Result<ValueFunction> {
    check_value_len(mdp, v)?;
    let n = mdp.num_states();
    let mut out = vec![0.0; n];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.num_actions() {
            let q = mdp.q_value(s, a, v);
            if q > best {
                best = q;
            }
        }
        out[s] = best;
    }
    Ok(ValueFunction(out))
}

/// Relative slack for the greedy argmax. Q-values this close to the best
/// count as ties, so rounding noise (e.g. from the anchored relative-VI
/// iterates, which shift every Q-value by about one ulp) cannot flip the
/// selected action.
const GREEDY_TIE_TOL: f64 = 1e-12;

/// Argmax actions of the Q-values defining `bellman_opt`; ties, including
/// near-ties within `GREEDY_TIE_TOL` relative slack, break to the lowest
/// action index.
pub fn greedy_actions(mdp: &Mdp, v: &ValueFunction) -> Result<Vec<usize>> {
    check_value_len(mdp, v)?;
    let n = mdp.num_states();
    let mut actions = Vec::with_capacity(n);
    let mut q_row = vec![0.0; mdp.num_actions()];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        for (a, q) in q_row.iter_mut().enumerate() {
            *q = mdp.q_value(s, a, v);
            if *q > best {
                best = *q;
            }
        }
        let tol = GREEDY_TIE_TOL * (1.0 + best.abs());
        let chosen = q_row
            .iter()
            .position(|&q| q >= best - tol)
            .expect("argmax row cannot be empty");
        actions.push(chosen);
    }
    Ok(actions)
}

pub fn greedy_policy(mdp: &Mdp, v: &ValueFunction) -> Result<Policy> {
    let actions = greedy_actions(mdp, v)?;
    Policy::deterministic(&actions, mdp.num_actions())
}

const ORACLE_RESIDUAL_REL: f64 = 1e-9;

/// Exact value of a policy by solving (I - gamma P_pi) v = R_pi.
pub fn exact_policy_value(mdp: &Mdp, policy: &Policy) -> Result<ValueFunction> {
    let (reward_vector, transition_matrix) = induced_kernels(mdp, policy)?;
    let n = mdp.num_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    for s in 0..n {
        for next in 0..n {
            a[(s, next)] -= mdp.gamma() * transition_matrix[s][next];
        }
    }
    let rhs = DVector::from_column_slice(&reward_vector);
    let v = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular evaluation system (malformed MDP?)".into()))?;
    let v = ValueFunction(v.as_slice().to_vec());
    // Fixed-point residual check guards against a silently bad solve.
    let tv = bellman_eval(mdp, policy, &v)?;
    let resid = inf_norm_diff(&v, &tv);
    let scale = 1.0 + inf_norm(&v);
    if !(resid <= ORACLE_RESIDUAL_REL * scale) {
        return Err(Error::Numeric(format!(
            "policy evaluation residual {resid} exceeds {}",
            ORACLE_RESIDUAL_REL * scale
        )));
    }
    Ok(v)
}

const POLICY_ITERATION_CAP: usize = 10_000;

/// Optimal value and policy by policy iteration (greedy improvement against
/// the exact evaluation solve).
pub fn optimal_value_oracle(mdp: &Mdp) -> Result<(ValueFunction, Policy)> {
    let mut actions = vec![0usize; mdp.num_states()];
    for _ in 0..POLICY_ITERATION_CAP {
        let policy = Policy::deterministic(&actions, mdp.num_actions())?;
        let v = exact_policy_value(mdp, &policy)?;
        let improved = greedy_actions(mdp, &v)?;
        if improved == actions {
            let tv = bellman_opt(mdp, &v)?;
            let resid = inf_norm_diff(&v, &tv);
            let scale = 1.0 + inf_norm(&v);
            if !(resid <= ORACLE_RESIDUAL_REL * scale) {
                return Err(Error::Numeric(format!(
                    "optimality residual {resid} exceeds {}",
                    ORACLE_RESIDUAL_REL * scale
                )));
            }
            return Ok((v, policy));
        }
        actions = improved;
    }
    Err(Error::Numeric(format!(
        "policy iteration did not stabilize within {POLICY_ITERATION_CAP} steps"
    )))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l1_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
