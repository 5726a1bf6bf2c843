//! Belief-state machinery and two POMDP solvers: exact alpha-vector value
//! iteration with incremental pruning, and value iteration over a
//! discretized belief grid.
//!
//! When observations reveal the position deterministically, every belief
//! reachable from a position-consistent start stays on one "face" of the
//! simplex (the states sharing that position). The exact solver prunes
//! against those faces rather than the whole simplex; the value function is
//! exact on every reachable belief.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{dot, FiniteMdp, STOCHASTIC_TOLERANCE};

/// Slack below which a vector is not considered to improve the envelope.
pub const LP_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_GRID_RESOLUTION: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct FinitePomdp {
    mdp: FiniteMdp,
    /// `observation[s'][y]` = O(y | s'), independent of the action.
    observation: Vec<Vec<f64>>,
    observation_names: Vec<String>,
}

impl FinitePomdp {
    pub fn new(
        mdp: FiniteMdp,
        observation: Vec<Vec<f64>>,
        observation_names: Vec<String>,
    ) -> Result<Self> {
        if observation.len() != mdp.n_states() {
            return Err(Error::Dimension {
                expected: mdp.n_states(),
                got: observation.len(),
            });
        }
        for (s, row) in observation.iter().enumerate() {
            if row.len() != observation_names.len() {
                return Err(Error::Dimension {
                    expected: observation_names.len(),
                    got: row.len(),
                });
            }
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > STOCHASTIC_TOLERANCE {
                return Err(Error::InvalidModel(format!(
                    "observation row of {} is not a distribution",
                    mdp.state_names()[s]
                )));
            }
        }
        Ok(FinitePomdp {
            mdp,
            observation,
            observation_names,
        })
    }

    /// Every state emits its own name.
    pub fn fully_observable(mdp: FiniteMdp) -> Self {
        let n = mdp.n_states();
        let observation = (0..n)
            .map(|s| (0..n).map(|y| f64::from(s == y)).collect())
            .collect();
        let names = mdp.state_names().to_vec();
        FinitePomdp {
            mdp,
            observation,
            observation_names: names,
        }
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    pub fn n_observations(&self) -> usize {
        self.observation_names.len()
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observation_names
    }

    pub fn observation_index(&self, name: &str) -> Option<usize> {
        self.observation_names.iter().position(|o| o == name)
    }

    pub fn obs_prob(&self, next_state: usize, observation: usize) -> f64 {
        self.observation[next_state][observation]
    }

    /// True when every state emits exactly one observation with certainty.
    pub fn is_deterministic(&self) -> bool {
        self.observation
            .iter()
            .all(|row| row.iter().filter(|&&p| p > 0.0).count() == 1)
    }

    /// States that emit `observation` with certainty (noise-free models) or
    /// whose most likely observation it is.
    pub fn emitting_states(&self, observation: usize) -> Vec<usize> {
        (0..self.n_states())
            .filter(|&s| {
                let row = &self.observation[s];
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row[observation] > 0.0 && row[observation] >= best
            })
            .collect()
    }

    /// Belief supports that are closed under Bayes updates: the observation
    /// classes when observations are deterministic, the whole simplex otherwise.
    pub fn reachable_faces(&self) -> Vec<Vec<usize>> {
        if self.is_deterministic() {
            (0..self.n_observations())
                .map(|y| self.emitting_states(y))
                .filter(|f| !f.is_empty())
                .collect()
        } else {
            vec![(0..self.n_states()).collect()]
        }
    }
}

/// A probability vector over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Contract(format!(
                "belief must be a distribution (sum {total})"
            )));
        }
        Ok(Belief(probs))
    }

    pub fn pure(n: usize, state: usize) -> Self {
        let mut p = vec![0.0; n];
        p[state] = 1.0;
        Belief(p)
    }

    pub fn uniform_over(n: usize, states: &[usize]) -> Self {
        let mut p = vec![0.0; n];
        for &s in states {
            p[s] = 1.0 / states.len() as f64;
        }
        Belief(p)
    }

    /// `weight·a + (1-weight)·b`.
    pub fn mix(a: &Belief, b: &Belief, weight: f64) -> Self {
        Belief(
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| weight * x + (1.0 - weight) * y)
                .collect(),
        )
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn support(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, _)| s)
            .collect()
    }
}

/// Unnormalized predicted mass Σ_s P(s'|s,a) b(s) for each s'.
fn predict(pomdp: &FinitePomdp, belief: &Belief, action: usize) -> Vec<f64> {
    let n = pomdp.n_states();
    let mut next = vec![0.0; n];
    for (s, &bs) in belief.probs().iter().enumerate() {
        if bs == 0.0 {
            continue;
        }
        for (t, slot) in next.iter_mut().enumerate() {
            *slot += bs * pomdp.mdp().prob(s, action, t);
        }
    }
    next
}

/// P(y | b, a).
pub fn observation_probability(
    pomdp: &FinitePomdp,
    belief: &Belief,
    action: usize,
    observation: usize,
) -> f64 {
    predict(pomdp, belief, action)
        .iter()
        .enumerate()
        .map(|(t, &m)| m * pomdp.obs_prob(t, observation))
        .sum()
}

/// Bayes posterior after taking `action` and seeing `observation`.
pub fn belief_update(
    pomdp: &FinitePomdp,
    belief: &Belief,
    action: usize,
    observation: usize,
) -> Result<Belief> {
    if belief.probs().len() != pomdp.n_states() {
        return Err(Error::Dimension {
            expected: pomdp.n_states(),
            got: belief.probs().len(),
        });
    }
    let mut post: Vec<f64> = predict(pomdp, belief, action)
        .iter()
        .enumerate()
        .map(|(t, &m)| m * pomdp.obs_prob(t, observation))
        .collect();
    let z: f64 = post.iter().sum();
    if z <= 0.0 {
        return Err(Error::ImpossibleObservation {
            action: pomdp.mdp().action_names()[action].clone(),
            observation: pomdp.observation_names()[observation].clone(),
        });
    }
    post.iter_mut().for_each(|p| *p /= z);
    Ok(Belief(post))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub values: Vec<f64>,
    pub action: usize,
}

impl AlphaVector {
    pub fn dot(&self, belief: &Belief) -> f64 {
        dot(&self.values, belief.probs())
    }
}

/// V(b) = max_α ⟨α, b⟩.
pub fn alpha_value(alphas: &[AlphaVector], belief: &Belief) -> f64 {
    alphas
        .iter()
        .map(|a| a.dot(belief))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone)]
pub struct AlphaSolution {
    pub alphas: Vec<AlphaVector>,
    pub backups: usize,
    /// Bellman residual over the reference beliefs at the last backup.
    pub residual: f64,
    pub converged: bool,
    pub faces: Vec<Vec<usize>>,
}

impl AlphaSolution {
    pub fn value(&self, belief: &Belief) -> f64 {
        alpha_value(&self.alphas, belief)
    }
}

/// Beliefs used to measure the Bellman residual: every vertex of each face
/// plus a 21-point sweep along each pair of states in a face.
pub fn reference_beliefs(n: usize, faces: &[Vec<usize>]) -> Vec<Belief> {
    let mut out = Vec::new();
    for face in faces {
        for &s in face {
            out.push(Belief::pure(n, s));
        }
        for (i, &s) in face.iter().enumerate() {
            for &t in &face[i + 1..] {
                for k in 1..20 {
                    let w = k as f64 / 20.0;
                    out.push(Belief::mix(&Belief::pure(n, s), &Belief::pure(n, t), w));
                }
            }
        }
        if face.len() > 2 {
            out.push(Belief::uniform_over(n, face));
        }
    }
    out
}

/// Exact alpha-vector value iteration on the reachable belief faces.
pub fn alpha_value_iteration(
    pomdp: &FinitePomdp,
    epsilon: f64,
    max_backups: usize,
) -> Result<AlphaSolution> {
    alpha_value_iteration_on(pomdp, epsilon, max_backups, &pomdp.reachable_faces())
}

/// As [`alpha_value_iteration`], pruning against the given belief supports.
pub fn alpha_value_iteration_on(
    pomdp: &FinitePomdp,
    epsilon: f64,
    max_backups: usize,
    faces: &[Vec<usize>],
) -> Result<AlphaSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mdp = pomdp.mdp();
    let n = mdp.n_states();
    let refs = reference_beliefs(n, faces);

    // Pessimistic start: the worst reward forever.
    let worst = (0..n)
        .flat_map(|s| (0..mdp.n_actions()).map(move |a| (s, a)))
        .map(|(s, a)| mdp.reward(s, a))
        .fold(f64::INFINITY, f64::min);
    let floor = worst.min(0.0) / (1.0 - mdp.discount());
    let mut alphas = vec![AlphaVector {
        values: (0..n)
            .map(|s| mdp.terminal_value(s).unwrap_or(floor))
            .collect(),
        action: 0,
    }];

    let mut residual = f64::INFINITY;
    let mut backups = 0;
    while backups < max_backups {
        let next = exact_backup(pomdp, &alphas, faces)?;
        backups += 1;
        residual = refs
            .iter()
            .map(|b| (alpha_value(&next, b) - alpha_value(&alphas, b)).abs())
            .fold(0.0_f64, f64::max);
        alphas = next;
        if residual < epsilon {
            break;
        }
    }
    Ok(AlphaSolution {
        alphas,
        backups,
        residual,
        converged: residual < epsilon,
        faces: faces.to_vec(),
    })
}

/// One dynamic-programming backup of the whole alpha set.
fn exact_backup(
    pomdp: &FinitePomdp,
    alphas: &[AlphaVector],
    faces: &[Vec<usize>],
) -> Result<Vec<AlphaVector>> {
    let mdp = pomdp.mdp();
    let n = mdp.n_states();
    let g = mdp.discount();
    let mut all = Vec::new();
    for a in 0..mdp.n_actions() {
        let mut acc: Option<Vec<Vec<f64>>> = None;
        for y in 0..pomdp.n_observations() {
            // g_{a,y}^α(s) = γ Σ_s' P(s'|s,a) O(y|s') α(s')
            let projected: Vec<Vec<f64>> = alphas
                .iter()
                .map(|alpha| {
                    (0..n)
                        .map(|s| {
                            g * (0..n)
                                .map(|t| mdp.prob(s, a, t) * pomdp.obs_prob(t, y) * alpha.values[t])
                                .sum::<f64>()
                        })
                        .collect()
                })
                .collect();
            let projected = prune(projected, faces)?;
            acc = Some(match acc {
                None => projected,
                Some(prev) => {
                    let mut sums = Vec::with_capacity(prev.len() * projected.len());
                    for p in &prev {
                        for q in &projected {
                            sums.push(p.iter().zip(q).map(|(x, y)| x + y).collect());
                        }
                    }
                    prune(sums, faces)?
                }
            });
        }
        for mut v in acc.unwrap_or_default() {
            for (s, slot) in v.iter_mut().enumerate() {
                *slot = match mdp.terminal_value(s) {
                    Some(t) => t,
                    None => *slot + mdp.reward(s, a),
                };
            }
            all.push(AlphaVector {
                values: v,
                action: a,
            });
        }
    }
    let values: Vec<Vec<f64>> = all.iter().map(|a| a.values.clone()).collect();
    let keep = prune_indices(&values, faces)?;
    let mut out: Vec<AlphaVector> = keep.into_iter().map(|i| all[i].clone()).collect();
    // canonical order so results do not depend on pruning order details
    out.sort_by(|x, y| {
        x.action.cmp(&y.action).then_with(|| {
            x.values
                .partial_cmp(&y.values)
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    if out.is_empty() {
        return Err(Error::Invariant(
            "pruning removed every alpha vector".into(),
        ));
    }
    Ok(out)
}

fn prune(vectors: Vec<Vec<f64>>, faces: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
    let keep = prune_indices(&vectors, faces)?;
    let mut vectors = vectors;
    let mut out = Vec::with_capacity(keep.len());
    for i in keep.into_iter().rev() {
        out.push(vectors.swap_remove(i));
    }
    out.reverse();
    Ok(out)
}

/// Indices (ascending) of a minimal subset with the same upper envelope on
/// every face: duplicate removal, pointwise domination, then one LP per
/// surviving vector and face.
fn prune_indices(vectors: &[Vec<f64>], faces: &[Vec<usize>]) -> Result<Vec<usize>> {
    if vectors.is_empty() {
        return Err(Error::Invariant("pruning an empty alpha set".into()));
    }
    let support: Vec<usize> = {
        let mut s: Vec<usize> = faces.iter().flatten().copied().collect();
        s.sort_unstable();
        s.dedup();
        s
    };
    let mut alive: Vec<bool> = vec![true; vectors.len()];

    // duplicates and pointwise domination on the support
    for i in 0..vectors.len() {
        if !alive[i] {
            continue;
        }
        for j in 0..vectors.len() {
            if i == j || !alive[j] {
                continue;
            }
            let dominated = support
                .iter()
                .all(|&s| vectors[j][s] >= vectors[i][s] - LP_TOLERANCE);
            if dominated {
                alive[i] = false;
                break;
            }
        }
    }

    // LP witness test, removing one vector at a time
    for i in 0..vectors.len() {
        if !alive[i] {
            continue;
        }
        let others: Vec<usize> = (0..vectors.len()).filter(|&j| j != i && alive[j]).collect();
        if others.is_empty() {
            continue;
        }
        let useful = faces
            .iter()
            .any(|face| has_witness(&vectors[i], others.iter().map(|&j| &vectors[j]), face));
        if !useful {
            alive[i] = false;
        }
    }
    let kept: Vec<usize> = (0..vectors.len()).filter(|&i| alive[i]).collect();
    if kept.is_empty() {
        return Err(Error::Invariant(
            "pruning removed every alpha vector".into(),
        ));
    }
    Ok(kept)
}

/// Is there a belief on `face` where `alpha` beats every other vector by
/// more than [`LP_TOLERANCE`]?
fn has_witness<'a>(
    alpha: &[f64],
    others: impl Iterator<Item = &'a Vec<f64>>,
    face: &[usize],
) -> bool {
    if face.len() == 1 {
        let s = face[0];
        let best_other = others.map(|o| o[s]).fold(f64::NEG_INFINITY, f64::max);
        return alpha[s] > best_other + LP_TOLERANCE;
    }
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let bound = 1e9;
    let delta = problem.add_var(1.0, (-bound, bound));
    let b: Vec<_> = face
        .iter()
        .map(|_| problem.add_var(0.0, (0.0, 1.0)))
        .collect();
    problem.add_constraint(
        b.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>().as_slice(),
        ComparisonOp::Eq,
        1.0,
    );
    for other in others {
        let mut row: Vec<_> = face
            .iter()
            .zip(&b)
            .map(|(&s, &v)| (v, alpha[s] - other[s]))
            .collect();
        row.push((delta, -1.0));
        problem.add_constraint(row.as_slice(), ComparisonOp::Ge, 0.0);
    }
    match problem.solve() {
        Ok(sol) => sol.objective() > LP_TOLERANCE,
        // a degenerate LP is treated as "keep"; pruning stays conservative
        Err(_) => true,
    }
}

/// Q(b, a) = ρ(b, a) + γ Σ_y P(y|b,a) V(b'), with V given by `alphas`.
pub fn belief_q_value(
    pomdp: &FinitePomdp,
    alphas: &[AlphaVector],
    belief: &Belief,
    action: usize,
) -> f64 {
    let mdp = pomdp.mdp();
    let rho: f64 = belief
        .probs()
        .iter()
        .enumerate()
        .map(|(s, &p)| p * mdp.reward(s, action))
        .sum();
    let predicted = predict(pomdp, belief, action);
    let future: f64 = (0..pomdp.n_observations())
        .map(|y| {
            // P(y|b,a)·V(b') = max_α Σ_s' pred(s') O(y|s') α(s')
            let weighted: Vec<f64> = predicted
                .iter()
                .enumerate()
                .map(|(t, &m)| m * pomdp.obs_prob(t, y))
                .collect();
            if weighted.iter().all(|&w| w == 0.0) {
                return 0.0;
            }
            alphas
                .iter()
                .map(|a| dot(&a.values, &weighted))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    rho + mdp.discount() * future
}

/// Actions within `tie_tolerance` of the best one-step backup at `belief`.
pub fn tie_set_at_belief(
    pomdp: &FinitePomdp,
    alphas: &[AlphaVector],
    belief: &Belief,
    tie_tolerance: f64,
) -> Vec<usize> {
    let q: Vec<f64> = (0..pomdp.n_actions())
        .map(|a| belief_q_value(pomdp, alphas, belief, a))
        .collect();
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..q.len())
        .filter(|&a| q[a] >= best - tie_tolerance)
        .collect()
}

/// Uniform belief over the states emitting `observation`.
pub fn canonical_belief(pomdp: &FinitePomdp, observation: usize) -> Option<Belief> {
    let states = pomdp.emitting_states(observation);
    if states.is_empty() {
        None
    } else {
        Some(Belief::uniform_over(pomdp.n_states(), &states))
    }
}

/// Per-observation tie sets at the canonical beliefs. Observations emitted
/// only by terminal states (or by no state) map to `None`.
pub fn policy_at_observation(
    pomdp: &FinitePomdp,
    alphas: &[AlphaVector],
    tie_tolerance: f64,
) -> Vec<Option<Vec<usize>>> {
    (0..pomdp.n_observations())
        .map(|y| {
            let states = pomdp.emitting_states(y);
            if states.is_empty() || states.iter().all(|&s| pomdp.mdp().is_terminal(s)) {
                return None;
            }
            let b = canonical_belief(pomdp, y)?;
            Some(tie_set_at_belief(pomdp, alphas, &b, tie_tolerance))
        })
        .collect()
}

/// Union of tie sets over `points` evenly spaced beliefs between each pair
/// of states emitting the observation (vertices included).
pub fn policy_over_observation_region(
    pomdp: &FinitePomdp,
    alphas: &[AlphaVector],
    tie_tolerance: f64,
    points: usize,
) -> Vec<Option<Vec<usize>>> {
    let n = pomdp.n_states();
    (0..pomdp.n_observations())
        .map(|y| {
            let states = pomdp.emitting_states(y);
            if states.is_empty() || states.iter().all(|&s| pomdp.mdp().is_terminal(s)) {
                return None;
            }
            let mut beliefs: Vec<Belief> = states.iter().map(|&s| Belief::pure(n, s)).collect();
            for (i, &s) in states.iter().enumerate() {
                for &t in &states[i + 1..] {
                    for k in 1..points.max(2) - 1 {
                        let w = k as f64 / (points.max(2) - 1) as f64;
                        beliefs.push(Belief::mix(&Belief::pure(n, s), &Belief::pure(n, t), w));
                    }
                }
            }
            let mut union: Vec<usize> = beliefs
                .iter()
                .flat_map(|b| tie_set_at_belief(pomdp, alphas, b, tie_tolerance))
                .collect();
            union.sort_unstable();
            union.dedup();
            Some(union)
        })
        .collect()
}

/// Value iteration over a discretized belief space. Each face of at most two
/// states is gridded by the probability of its first state.
#[derive(Debug, Clone)]
pub struct BeliefGrid {
    pub faces: Vec<Vec<usize>>,
    pub resolution: usize,
    /// `values[f][i]` is the value at grid point `i` of face `f`.
    pub values: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

impl BeliefGrid {
    fn points(&self, face: usize) -> usize {
        if self.faces[face].len() == 1 {
            1
        } else {
            self.resolution
        }
    }

    /// Belief at grid point `i` of face `f`.
    pub fn belief(&self, n_states: usize, face: usize, i: usize) -> Belief {
        let states = &self.faces[face];
        if states.len() == 1 {
            return Belief::pure(n_states, states[0]);
        }
        let p = i as f64 / (self.resolution - 1) as f64;
        let mut probs = vec![0.0; n_states];
        probs[states[0]] = p;
        probs[states[1]] = 1.0 - p;
        Belief(probs)
    }

    /// Face and nearest grid index for a belief supported on one face.
    pub fn locate(&self, belief: &Belief) -> Option<(usize, usize)> {
        let probs = belief.probs();
        let face = self
            .faces
            .iter()
            .position(|f| f.iter().map(|&s| probs[s]).sum::<f64>() > 1.0 - 1e-9)?;
        let states = &self.faces[face];
        if states.len() == 1 {
            return Some((face, 0));
        }
        let p = probs[states[0]];
        let i = (p * (self.resolution - 1) as f64).round() as usize;
        Some((face, i.min(self.resolution - 1)))
    }

    /// Value at the nearest grid point.
    pub fn value(&self, belief: &Belief) -> Option<f64> {
        self.locate(belief).map(|(f, i)| self.values[f][i])
    }

    /// Every grid belief with its value.
    pub fn grid_points(&self, n_states: usize) -> Vec<(Belief, f64)> {
        (0..self.faces.len())
            .flat_map(|f| (0..self.points(f)).map(move |i| (f, i)))
            .map(|(f, i)| (self.belief(n_states, f, i), self.values[f][i]))
            .collect()
    }
}

/// Worst-case gap between the grid solution and the exact value at any grid
/// point. Nearest-point projection moves a belief by at most `1/(resolution-1)`
/// in L1, the exact value is Lipschitz with constant at most the value range,
/// and the per-backup error compounds geometrically.
pub fn projection_bound(pomdp: &FinitePomdp, grid_resolution: usize) -> f64 {
    let mdp = pomdp.mdp();
    let h = 1.0 / (grid_resolution.max(2) - 1) as f64;
    mdp.discount() * mdp.value_range() * h / (1.0 - mdp.discount())
}

pub fn belief_grid_value_iteration(
    pomdp: &FinitePomdp,
    grid_resolution: usize,
) -> Result<BeliefGrid> {
    if grid_resolution < 11 {
        return Err(Error::Contract(format!(
            "grid resolution must be at least 11, got {grid_resolution}"
        )));
    }
    if !pomdp.is_deterministic() {
        return Err(Error::Contract(
            "belief grid requires deterministic observations".into(),
        ));
    }
    let faces = pomdp.reachable_faces();
    if faces.iter().any(|f| f.len() > 2) {
        return Err(Error::Contract(
            "belief grid supports faces of at most two states".into(),
        ));
    }
    let mdp = pomdp.mdp();
    let n = mdp.n_states();
    let mut grid = BeliefGrid {
        values: faces
            .iter()
            .map(|f| vec![0.0; if f.len() == 1 { 1 } else { grid_resolution }])
            .collect(),
        faces,
        resolution: grid_resolution,
        iterations: 0,
        residual: f64::INFINITY,
    };

    // Precompute, for every grid point and action, the reward and the
    // projected successor points with their probabilities.
    struct Backup {
        reward: f64,
        successors: Vec<(f64, usize, usize)>,
    }
    let mut table: Vec<Vec<Vec<Backup>>> = Vec::new();
    for f in 0..grid.faces.len() {
        let mut per_point = Vec::new();
        for i in 0..grid.points(f) {
            let b = grid.belief(n, f, i);
            let per_action = (0..mdp.n_actions())
                .map(|a| {
                    let reward = b
                        .probs()
                        .iter()
                        .enumerate()
                        .map(|(s, &p)| p * mdp.reward(s, a))
                        .sum();
                    let successors = (0..pomdp.n_observations())
                        .filter_map(|y| {
                            let py = observation_probability(pomdp, &b, a, y);
                            if py <= 0.0 {
                                return None;
                            }
                            let post = belief_update(pomdp, &b, a, y).ok()?;
                            let (g, j) = grid.locate(&post)?;
                            Some((py, g, j))
                        })
                        .collect();
                    Backup { reward, successors }
                })
                .collect::<Vec<_>>();
            per_point.push(per_action);
        }
        table.push(per_point);
    }

    let fixed: Vec<Vec<Option<f64>>> = (0..grid.faces.len())
        .map(|f| {
            (0..grid.points(f))
                .map(|i| {
                    let b = grid.belief(n, f, i);
                    let support = b.support();
                    if support.iter().all(|&s| mdp.is_terminal(s)) {
                        Some(
                            support
                                .iter()
                                .map(|&s| b.probs()[s] * mdp.terminal_value(s).unwrap_or(0.0))
                                .sum(),
                        )
                    } else {
                        None
                    }
                })
                .collect()
        })
        .collect();

    let g = mdp.discount();
    let max_iterations = 20_000;
    while grid.iterations < max_iterations {
        let mut next = grid.values.clone();
        let mut residual = 0.0_f64;
        for f in 0..grid.faces.len() {
            for i in 0..grid.points(f) {
                let v = match fixed[f][i] {
                    Some(v) => v,
                    None => table[f][i]
                        .iter()
                        .map(|bk| {
                            bk.reward
                                + g * bk
                                    .successors
                                    .iter()
                                    .map(|&(p, h, j)| p * grid.values[h][j])
                                    .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max),
                };
                residual = residual.max((v - grid.values[f][i]).abs());
                next[f][i] = v;
            }
        }
        grid.values = next;
        grid.iterations += 1;
        grid.residual = residual;
        if residual < 1e-10 {
            break;
        }
    }
    Ok(grid)
}
