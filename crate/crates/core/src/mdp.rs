//! Tabular MDPs: value iteration, Q-values, tie-tolerant policy extraction,
//! greedy rollouts, and a backward-induction oracle.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that transition rows are distributions.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const DEFAULT_TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    state_names: Vec<String>,
    action_names: Vec<String>,
    /// `transition[a][s][s']` = P(s' | s, a).
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]` = expected immediate reward.
    reward: Vec<Vec<f64>>,
    /// `Some(v)` marks an absorbing state whose value is held at `v`.
    terminal_values: Vec<Option<f64>>,
    discount: f64,
}

impl FiniteMdp {
    pub fn new(
        state_names: Vec<String>,
        action_names: Vec<String>,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        terminal_values: Vec<Option<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let mdp = FiniteMdp {
            state_names,
            action_names,
            transition,
            reward,
            terminal_values,
            discount,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_names.len();
        let m = self.action_names.len();
        if n == 0 || m == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(Error::InvalidModel(format!(
                "discount {} outside (0,1)",
                self.discount
            )));
        }
        check_len(self.transition.len(), m)?;
        check_len(self.reward.len(), n)?;
        check_len(self.terminal_values.len(), n)?;
        for (a, per_action) in self.transition.iter().enumerate() {
            check_len(per_action.len(), n)?;
            for (s, row) in per_action.iter().enumerate() {
                check_len(row.len(), n)?;
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "negative or non-finite probability in row ({}, {})",
                        self.state_names[s], self.action_names[a]
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(Error::InvalidModel(format!(
                        "transition row ({}, {}) sums to {total}",
                        self.state_names[s], self.action_names[a]
                    )));
                }
                if self.terminal_values[s].is_some()
                    && row
                        .iter()
                        .enumerate()
                        .any(|(t, &p)| p > 0.0 && self.terminal_values[t].is_none())
                {
                    return Err(Error::InvalidModel(format!(
                        "terminal state {} leaks mass to a non-terminal state",
                        self.state_names[s]
                    )));
                }
            }
        }
        for (s, row) in self.reward.iter().enumerate() {
            check_len(row.len(), m)?;
            if row.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "non-finite reward at state {}",
                    self.state_names[s]
                )));
            }
        }
        if self
            .terminal_values
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("non-finite terminal value".into()));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn state_names(&self) -> &[String] {
        &self.state_names
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|s| s == name)
    }

    pub fn action_index(&self, name: &str) -> Option<usize> {
        self.action_names.iter().position(|a| a == name)
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition[action][state][next]
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        &self.transition[action][state]
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.reward[state][action]
    }

    pub fn terminal_value(&self, state: usize) -> Option<f64> {
        self.terminal_values[state]
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal_values[state].is_some()
    }

    /// Largest absolute value any policy can attain, used in iteration bounds.
    pub fn value_range(&self) -> f64 {
        let r = self
            .reward
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, r| acc.max(r.abs()));
        let t = self
            .terminal_values
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        (r / (1.0 - self.discount)).max(t)
    }

    /// Same model with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        FiniteMdp::new(
            self.state_names.clone(),
            self.action_names.clone(),
            self.transition.clone(),
            self.reward.clone(),
            self.terminal_values.clone(),
            discount,
        )
    }
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm Bellman residual of the final sweep.
    pub residual: f64,
}

impl ValueFunction {
    pub fn get(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn max_abs_diff(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// `q[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
}

impl QTable {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.q[state][action]
    }

    pub fn best(&self, state: usize) -> f64 {
        self.q[state]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// For each non-terminal state, the actions within the tie tolerance of the best Q.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub sets: Vec<Option<Vec<usize>>>,
}

impl PolicySet {
    pub fn actions(&self, state: usize) -> Option<&[usize]> {
        self.sets[state].as_deref()
    }
}

/// Sweep budget implied by the contraction bound, with slack.
pub fn iteration_bound(mdp: &FiniteMdp, epsilon: f64) -> usize {
    let range = mdp.value_range().max(1.0);
    let g = mdp.discount();
    let k = ((epsilon * (1.0 - g) / range).ln() / g.ln()).ceil();
    if k.is_finite() && k > 0.0 {
        k as usize
    } else {
        1
    }
}

fn bellman_sweep(mdp: &FiniteMdp, values: &[f64], out: &mut [f64]) {
    let g = mdp.discount();
    for (s, slot) in out.iter_mut().enumerate() {
        *slot = match mdp.terminal_value(s) {
            Some(v) => v,
            None => (0..mdp.n_actions())
                .map(|a| mdp.reward(s, a) + g * dot(mdp.transition_row(s, a), values))
                .fold(f64::NEG_INFINITY, f64::max),
        };
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinite-horizon value iteration, stopping once the sup-norm residual is
/// below `epsilon`. Terminal values are held fixed.
pub fn value_iteration(mdp: &FiniteMdp, epsilon: f64) -> Result<ValueFunction> {
    value_iteration_traced(mdp, epsilon).map(|(v, _)| v)
}

/// As [`value_iteration`], also returning the residual of every sweep.
pub fn value_iteration_traced(mdp: &FiniteMdp, epsilon: f64) -> Result<(ValueFunction, Vec<f64>)> {
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = mdp.n_states();
    let mut values: Vec<f64> = (0..n)
        .map(|s| mdp.terminal_value(s).unwrap_or(0.0))
        .collect();
    let mut next = vec![0.0; n];
    let budget = 2 * iteration_bound(mdp, epsilon) + 10;
    let mut history = Vec::new();
    for it in 1..=budget {
        bellman_sweep(mdp, &values, &mut next);
        let residual = values
            .iter()
            .zip(&next)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        std::mem::swap(&mut values, &mut next);
        history.push(residual);
        if residual < epsilon {
            return Ok((
                ValueFunction {
                    values,
                    iterations: it,
                    residual,
                },
                history,
            ));
        }
    }
    Err(Error::NotConverged {
        iterations: budget,
        residual: *history.last().unwrap_or(&f64::INFINITY),
    })
}

/// Q(s,a) = J(s,a) + γ Σ P(s'|s,a) V(s'). Terminal rows are filled with
/// their fixed value for every action.
pub fn q_values(mdp: &FiniteMdp, v: &ValueFunction) -> Result<QTable> {
    check_len(v.values.len(), mdp.n_states())?;
    let g = mdp.discount();
    let q = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| match mdp.terminal_value(s) {
                    Some(t) => t,
                    None => mdp.reward(s, a) + g * dot(mdp.transition_row(s, a), &v.values),
                })
                .collect()
        })
        .collect();
    Ok(QTable { q })
}

/// Full tie sets; terminal states get `None`.
pub fn extract_policy_set(mdp: &FiniteMdp, q: &QTable, tie_tolerance: f64) -> PolicySet {
    let sets = (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                return None;
            }
            let best = q.best(s);
            Some(
                (0..mdp.n_actions())
                    .filter(|&a| q.get(s, a) >= best - tie_tolerance)
                    .collect(),
            )
        })
        .collect();
    PolicySet { sets }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Visited states, starting with the start state and ending in a terminal.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }
}

/// Follows the first tie-set action in `tie_break` order from `start` until a
/// terminal state. Requires deterministic dynamics along the path.
pub fn greedy_trajectory(
    mdp: &FiniteMdp,
    policy: &PolicySet,
    start: usize,
    tie_break: &[usize],
) -> Result<Trajectory> {
    if start >= mdp.n_states() {
        return Err(Error::Dimension {
            expected: mdp.n_states(),
            got: start,
        });
    }
    if mdp.is_terminal(start) {
        return Err(Error::Contract(
            "trajectory must start at a non-terminal state".into(),
        ));
    }
    let mut states = vec![start];
    let mut actions = Vec::new();
    let mut seen: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut s = start;
    while !mdp.is_terminal(s) {
        let set = policy.actions(s).ok_or_else(|| {
            Error::Invariant(format!("no policy at state {}", mdp.state_names()[s]))
        })?;
        let a = tie_break
            .iter()
            .copied()
            .find(|a| set.contains(a))
            .or_else(|| set.first().copied())
            .ok_or_else(|| Error::Invariant("empty tie set".into()))?;
        let row = mdp.transition_row(s, a);
        let next = row
            .iter()
            .position(|&p| (p - 1.0).abs() <= STOCHASTIC_TOLERANCE)
            .ok_or_else(|| {
                Error::Contract(format!(
                    "action {} at {} is stochastic; greedy rollouts need deterministic dynamics",
                    mdp.action_names()[a],
                    mdp.state_names()[s]
                ))
            })?;
        actions.push(a);
        states.push(next);
        if let Some(&first) = seen.get(&next) {
            let cycle = states[first..]
                .iter()
                .map(|&i| mdp.state_names()[i].clone())
                .collect();
            return Err(Error::NonTerminating { cycle });
        }
        seen.insert(next, states.len() - 1);
        s = next;
    }
    Ok(Trajectory { states, actions })
}

/// Exact backward induction over `horizon` steps, starting from zero at
/// non-terminal states. Kept separate from the fixed-point code so it can
/// serve as an oracle for it.
pub fn finite_horizon_oracle(mdp: &FiniteMdp, horizon: usize) -> Result<ValueFunction> {
    if horizon == 0 {
        return Err(Error::Contract("horizon must be at least 1".into()));
    }
    let n = mdp.n_states();
    let g = mdp.discount();
    // stage[k] = optimal value with k decisions remaining
    let mut stage: Vec<f64> = (0..n)
        .map(|s| mdp.terminal_value(s).unwrap_or(0.0))
        .collect();
    for _ in 0..horizon {
        let prev = stage.clone();
        for (s, slot) in stage.iter_mut().enumerate() {
            if mdp.is_terminal(s) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions() {
                let mut total = mdp.reward(s, a);
                for (t, &vt) in prev.iter().enumerate() {
                    let p = mdp.prob(s, a, t);
                    if p != 0.0 {
                        total += g * p * vt;
                    }
                }
                if total > best {
                    best = total;
                }
            }
            *slot = best;
        }
    }
    Ok(ValueFunction {
        values: stage,
        iterations: horizon,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// Chain 0 -> 1 -> goal(2), one action.
    fn chain() -> FiniteMdp {
        let t = vec![vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0],
        ]];
        FiniteMdp::new(
            names("s", 3),
            names("a", 1),
            t,
            vec![vec![-1.0], vec![-1.0], vec![0.0]],
            vec![None, None, Some(10.0)],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn chain_values_by_hand() {
        let m = chain();
        let v = value_iteration(&m, 1e-12).unwrap();
        assert!((v.get(1) - 8.0).abs() < 1e-12);
        assert!((v.get(0) - 6.2).abs() < 1e-12);
        assert_eq!(v.get(2), 10.0);
    }

    #[test]
    fn single_action_policy_is_that_action() {
        let m = chain();
        let v = value_iteration(&m, 1e-12).unwrap();
        let p = extract_policy_set(&m, &q_values(&m, &v).unwrap(), 1e-6);
        assert_eq!(p.actions(0), Some(&[0][..]));
        assert_eq!(p.actions(1), Some(&[0][..]));
        assert_eq!(p.actions(2), None);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let t = vec![vec![vec![0.5, 0.4], vec![0.0, 1.0]]];
        let err = FiniteMdp::new(
            names("s", 2),
            names("a", 1),
            t,
            vec![vec![0.0], vec![0.0]],
            vec![None, Some(0.0)],
            0.9,
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn rejects_terminal_leak() {
        let t = vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]];
        let err = FiniteMdp::new(
            names("s", 2),
            names("a", 1),
            t,
            vec![vec![0.0], vec![0.0]],
            vec![None, Some(0.0)],
            0.9,
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn q_dimension_mismatch() {
        let m = chain();
        let v = ValueFunction {
            values: vec![0.0; 2],
            iterations: 0,
            residual: 0.0,
        };
        assert!(matches!(q_values(&m, &v), Err(Error::Dimension { .. })));
    }

    #[test]
    fn epsilon_must_be_positive() {
        assert!(value_iteration(&chain(), 0.0).is_err());
        assert!(finite_horizon_oracle(&chain(), 0).is_err());
    }

    #[test]
    fn self_loop_cycle_is_reported() {
        // Staying put is the only option at state 0.
        let t = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]];
        let m = FiniteMdp::new(
            names("s", 2),
            names("a", 1),
            t,
            vec![vec![1.0], vec![0.0]],
            vec![None, Some(0.0)],
            0.5,
        )
        .unwrap();
        let v = value_iteration(&m, 1e-12).unwrap();
        let p = extract_policy_set(&m, &q_values(&m, &v).unwrap(), 1e-6);
        match greedy_trajectory(&m, &p, 0, &[0]) {
            Err(Error::NonTerminating { cycle }) => assert_eq!(cycle, vec!["s0", "s0"]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }
}
