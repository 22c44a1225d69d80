//! Core domain types: task and feature vectors, tabular MDPs, policies and the
//! environment interface shared by tabular and approximate agents.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// The only random source used across the crate. Every consumer takes it by
/// `&mut` from its caller.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a named sub-stream (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn euclidean_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Linear reward weights `w`. Also used as a policy embedding `z`, naming the
/// (near-)optimal policy of task `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TaskVector(Vec<f64>);

impl TaskVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        check_finite(&w, "task vector")?;
        Ok(Self(w))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.0)
    }

    /// Euclidean distance to another task vector.
    pub fn distance(&self, other: &TaskVector) -> Result<f64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|x| c * x).collect())
    }

    /// Inner product with a vector of the same length.
    pub fn dot(&self, other: &[f64]) -> Result<f64> {
        check_dim(self.dim(), other.len())?;
        Ok(dot(&self.0, other))
    }
}

impl TryFrom<Vec<f64>> for TaskVector {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<TaskVector> for Vec<f64> {
    fn from(w: TaskVector) -> Self {
        w.0
    }
}

impl AsRef<[f64]> for TaskVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for TaskVector {
    /// Semicolon-separated, full precision; the format used in CSV outputs.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

/// Per-transition features `phi(s, a, s')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        check_finite(&phi, "feature vector")?;
        Ok(Self(phi))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(&self.0)
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(phi: Vec<f64>) -> Result<Self> {
        Self::new(phi)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(phi: FeatureVector) -> Self {
        phi.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `r_w(s, a, s') = phi(s, a, s')^T w`.
pub fn reward(phi: &FeatureVector, w: &TaskVector) -> Result<f64> {
    w.dot(phi.as_slice())
}

/// `sum_i gamma^i r_i` over a finite episode.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

/// One entry of a categorical transition distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub next_state: usize,
    pub prob: f64,
    pub phi: FeatureVector,
}

/// A finite MDP with vector-valued transition features.
///
/// States may expose different numbers of actions; the available actions of
/// state `s` are always `0..n_available(s)`. Terminal states absorb with zero
/// features under every action.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    feature_dim: usize,
    gamma: f64,
    available: Vec<usize>,
    terminal: Vec<bool>,
    outcomes: Vec<Vec<Vec<Outcome>>>,
}

impl TabularMdp {
    pub fn builder(n_states: usize, feature_dim: usize, gamma: f64) -> TabularMdpBuilder {
        TabularMdpBuilder {
            n_states,
            feature_dim,
            gamma,
            available: vec![0; n_states],
            terminal: vec![false; n_states],
            outcomes: vec![Vec::new(); n_states],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Largest action count over all states.
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_available(&self, state: usize) -> usize {
        self.available[state]
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Outcome] {
        &self.outcomes[state][action]
    }

    /// `E[phi(s, a, s')]` under the transition distribution.
    pub fn expected_phi(&self, state: usize, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.feature_dim];
        for o in self.outcomes(state, action) {
            for (acc, x) in out.iter_mut().zip(o.phi.as_slice()) {
                *acc += o.prob * x;
            }
        }
        out
    }

    /// Largest Euclidean norm of any transition feature vector.
    pub fn phi_sup(&self) -> f64 {
        self.outcomes
            .iter()
            .flatten()
            .flatten()
            .map(|o| o.phi.norm())
            .fold(0.0, f64::max)
    }

    /// Samples one transition. Stepping a terminal state is an error.
    pub fn step(
        &self,
        state: usize,
        action: usize,
        rng: &mut SeededRng,
    ) -> Result<(usize, FeatureVector, bool)> {
        if self.is_terminal(state) {
            return Err(Error::TerminalState(state));
        }
        if action >= self.n_available(state) {
            return Err(Error::InvalidAction { state, action });
        }
        let outcomes = self.outcomes(state, action);
        let chosen = if outcomes.len() == 1 {
            &outcomes[0]
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            outcomes
                .iter()
                .find(|o| {
                    acc += o.prob;
                    u < acc
                })
                .unwrap_or(&outcomes[outcomes.len() - 1])
        };
        Ok((
            chosen.next_state,
            chosen.phi.clone(),
            self.is_terminal(chosen.next_state),
        ))
    }
}

pub struct TabularMdpBuilder {
    n_states: usize,
    feature_dim: usize,
    gamma: f64,
    available: Vec<usize>,
    terminal: Vec<bool>,
    outcomes: Vec<Vec<Vec<Outcome>>>,
}

impl TabularMdpBuilder {
    pub fn terminal(mut self, state: usize) -> Self {
        self.terminal[state] = true;
        self
    }

    /// Adds `p(next | state, action) = prob` with features `phi`.
    pub fn transition(
        mut self,
        state: usize,
        action: usize,
        next_state: usize,
        prob: f64,
        phi: Vec<f64>,
    ) -> Result<Self> {
        if state >= self.n_states || next_state >= self.n_states {
            return Err(Error::InvalidMdp(format!(
                "transition {state} -> {next_state} out of range"
            )));
        }
        check_dim(self.feature_dim, phi.len())?;
        let per_state = &mut self.outcomes[state];
        if per_state.len() <= action {
            per_state.resize(action + 1, Vec::new());
        }
        if per_state[action].iter().any(|o| o.next_state == next_state) {
            return Err(Error::InvalidMdp(format!(
                "duplicate successor {next_state} for ({state}, {action})"
            )));
        }
        per_state[action].push(Outcome {
            next_state,
            prob,
            phi: FeatureVector::new(phi)?,
        });
        self.available[state] = self.available[state].max(action + 1);
        Ok(self)
    }

    pub fn build(mut self) -> Result<TabularMdp> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidMdp(format!("discount {} outside [0, 1]", self.gamma)));
        }
        let n_actions = self.available.iter().copied().max().unwrap_or(0).max(1);
        for s in 0..self.n_states {
            if self.terminal[s] {
                if !self.outcomes[s].is_empty() {
                    return Err(Error::InvalidMdp(format!(
                        "terminal state {s} has explicit transitions"
                    )));
                }
                self.available[s] = n_actions;
                self.outcomes[s] = (0..n_actions)
                    .map(|_| {
                        vec![Outcome {
                            next_state: s,
                            prob: 1.0,
                            phi: FeatureVector::zeros(self.feature_dim),
                        }]
                    })
                    .collect();
                continue;
            }
            if self.available[s] == 0 {
                return Err(Error::InvalidMdp(format!("state {s} has no actions")));
            }
            for (a, outs) in self.outcomes[s].iter().enumerate() {
                if outs.is_empty() {
                    return Err(Error::InvalidMdp(format!("({s}, {a}) has no successors")));
                }
                if outs.iter().any(|o| !(o.prob >= 0.0)) {
                    return Err(Error::InvalidMdp(format!("({s}, {a}) has a negative probability")));
                }
                let total: f64 = outs.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidMdp(format!(
                        "({s}, {a}) probabilities sum to {total}"
                    )));
                }
            }
        }
        Ok(TabularMdp {
            n_states: self.n_states,
            n_actions,
            feature_dim: self.feature_dim,
            gamma: self.gamma,
            available: self.available,
            terminal: self.terminal,
            outcomes: self.outcomes,
        })
    }
}

/// `pi: S -> A`. Entries for terminal states are ignored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(mdp: &TabularMdp, actions: Vec<usize>) -> Result<Self> {
        check_dim(mdp.n_states(), actions.len())?;
        for (s, &a) in actions.iter().enumerate() {
            if !mdp.is_terminal(s) && a >= mdp.n_available(s) {
                return Err(Error::InvalidAction { state: s, action: a });
            }
        }
        Ok(Self { actions })
    }

    /// The policy that takes action `action` wherever it is available and
    /// action 0 elsewhere.
    pub fn constant(mdp: &TabularMdp, action: usize) -> Self {
        let actions = (0..mdp.n_states())
            .map(|s| if action < mdp.n_available(s) { action } else { 0 })
            .collect();
        Self { actions }
    }

    pub fn action(&self, state: usize) -> usize {
        self.actions[state]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }
}

/// What an agent sees: an optional tabular id, a real feature vector, and the
/// number of actions available (`0..n_actions`).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub state_id: Option<usize>,
    pub features: Vec<f64>,
    pub n_actions: usize,
}

#[derive(Clone, Debug)]
pub struct EnvStep {
    pub observation: Observation,
    pub phi: FeatureVector,
    /// The episode reached an absorbing state.
    pub done: bool,
    /// The episode was cut by a step cap; the state is not absorbing.
    pub truncated: bool,
}

/// Episodic environment with vector-valued features.
pub trait Environment: Send {
    fn feature_dim(&self) -> usize;

    /// Largest action count over all states.
    fn n_actions(&self) -> usize;

    fn observation_dim(&self) -> usize;

    fn gamma(&self) -> f64;

    fn reset(&mut self, rng: &mut SeededRng) -> Observation;

    fn step(&mut self, action: usize, rng: &mut SeededRng) -> Result<EnvStep>;

    /// The exact model behind this environment, when there is one.
    fn tabular(&self) -> Option<&TabularMdp> {
        None
    }
}

/// Environment view of a [`TabularMdp`]; observations are one-hot state codes.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    mdp: TabularMdp,
    start: usize,
    state: usize,
    step_cap: Option<usize>,
    t: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp, start: usize, step_cap: Option<usize>) -> Self {
        Self {
            mdp,
            start,
            state: start,
            step_cap,
            t: 0,
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    pub fn start_state(&self) -> usize {
        self.start
    }

    pub fn observe(&self, state: usize) -> Observation {
        let mut features = vec![0.0; self.mdp.n_states()];
        features[state] = 1.0;
        Observation {
            state_id: Some(state),
            features,
            n_actions: self.mdp.n_available(state),
        }
    }
}

impl Environment for TabularEnv {
    fn feature_dim(&self) -> usize {
        self.mdp.feature_dim()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn observation_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> Observation {
        self.state = self.start;
        self.t = 0;
        self.observe(self.state)
    }

    fn step(&mut self, action: usize, rng: &mut SeededRng) -> Result<EnvStep> {
        let (next, phi, done) = self.mdp.step(self.state, action, rng)?;
        self.state = next;
        self.t += 1;
        let truncated = !done && self.step_cap.is_some_and(|cap| self.t >= cap);
        Ok(EnvStep {
            observation: self.observe(next),
            phi,
            done,
            truncated,
        })
    }

    fn tabular(&self) -> Option<&TabularMdp> {
        Some(&self.mdp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tv(v: &[f64]) -> TaskVector {
        TaskVector::new(v.to_vec()).unwrap()
    }

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reward_examples() {
        assert_eq!(reward(&fv(&[1.0, 0.0]), &tv(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(reward(&fv(&[0.0; 3]), &tv(&[0.3, -2.0, 7.0])).unwrap(), 0.0);
        let r = reward(&fv(&[-0.05, -0.05]), &tv(&[0.6, 0.8])).unwrap();
        assert!((r + 0.07).abs() < 1e-15);
    }

    #[test]
    fn reward_dimension_mismatch() {
        assert!(matches!(
            reward(&fv(&[1.0]), &tv(&[1.0, 0.0])),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn non_finite_vectors_rejected() {
        assert!(TaskVector::new(vec![f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<TaskVector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0], 0.9), 1.0);
        assert_eq!(discounted_return(&[0.0, 1.0], 0.5), 0.5);
        assert!((discounted_return(&[-0.07, 0.9293], 1.0) - 0.8593).abs() < 1e-12);
        assert_eq!(discounted_return(&[], 0.9), 0.0);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0]), 0);
    }

    fn chain() -> TabularMdp {
        TabularMdp::builder(3, 1, 0.9)
            .terminal(2)
            .transition(0, 0, 1, 1.0, vec![0.5])
            .unwrap()
            .transition(0, 1, 0, 0.25, vec![0.0])
            .unwrap()
            .transition(0, 1, 2, 0.75, vec![1.0])
            .unwrap()
            .transition(1, 0, 2, 1.0, vec![2.0])
            .unwrap()
            .build()
            .unwrap()
    }

    #[test]
    fn builder_validates_rows() {
        let bad = TabularMdp::builder(2, 1, 0.9)
            .terminal(1)
            .transition(0, 0, 1, 0.5, vec![0.0])
            .unwrap()
            .build();
        assert!(matches!(bad, Err(Error::InvalidMdp(_))));

        let dup = TabularMdp::builder(2, 1, 0.9)
            .transition(0, 0, 1, 0.5, vec![0.0])
            .unwrap()
            .transition(0, 0, 1, 0.5, vec![0.0]);
        assert!(dup.is_err());
    }

    #[test]
    fn terminal_states_absorb_with_zero_features() {
        let mdp = chain();
        assert!(mdp.is_terminal(2));
        for a in 0..mdp.n_available(2) {
            let outs = mdp.outcomes(2, a);
            assert_eq!(outs.len(), 1);
            assert_eq!(outs[0].next_state, 2);
            assert_eq!(outs[0].phi.as_slice(), &[0.0]);
        }
        let mut rng = seeded_rng(0);
        assert!(matches!(mdp.step(2, 0, &mut rng), Err(Error::TerminalState(2))));
    }

    #[test]
    fn deterministic_step() {
        let mdp = chain();
        let mut rng = seeded_rng(3);
        for _ in 0..10 {
            let (next, phi, done) = mdp.step(1, 0, &mut rng).unwrap();
            assert_eq!((next, phi.as_slice(), done), (2, &[2.0][..], true));
        }
        assert!(matches!(
            mdp.step(1, 1, &mut rng),
            Err(Error::InvalidAction { state: 1, action: 1 })
        ));
    }

    #[test]
    fn seeded_trajectories_repeat() {
        let mdp = chain();
        let run = |seed| {
            let mut rng = seeded_rng(seed);
            (0..200)
                .map(|_| mdp.step(0, 1, &mut rng).unwrap().0)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        let counts = run(11).iter().filter(|&&s| s == 2).count();
        assert!((120..=180).contains(&counts), "{counts}");
    }

    #[test]
    fn tabular_env_truncates_at_cap() {
        let mdp = TabularMdp::builder(1, 1, 0.9)
            .transition(0, 0, 0, 1.0, vec![1.0])
            .unwrap()
            .build()
            .unwrap();
        let mut env = TabularEnv::new(mdp, 0, Some(3));
        let mut rng = seeded_rng(0);
        env.reset(&mut rng);
        let flags: Vec<_> = (0..3)
            .map(|_| {
                let s = env.step(0, &mut rng).unwrap();
                (s.done, s.truncated)
            })
            .collect();
        assert_eq!(flags, vec![(false, false), (false, false), (false, true)]);
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
