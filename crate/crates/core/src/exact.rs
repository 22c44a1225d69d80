//! Exact dynamic programming over [`TabularMdp`]s.
//!
//! Discounted problems are solved by fixed-point iteration (values) or a direct
//! linear solve (successor features). Undiscounted episodic problems require
//! the non-terminal transition graph to be acyclic and are solved backwards
//! over it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{argmax, dot, DeterministicPolicy, TabularMdp, TaskVector};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;
/// Decision depth allowed by [`optimal_return`] enumeration.
pub const HORIZON_CAP: usize = 64;

/// Action values over all `(s, a)`; only `0..n_available(s)` are meaningful.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    available: Vec<usize>,
    values: Vec<f64>,
}

impl QTable {
    fn zeros(mdp: &TabularMdp) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            available: (0..mdp.n_states()).map(|s| mdp.n_available(s)).collect(),
            values: vec![0.0; mdp.n_states() * mdp.n_actions()],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_available(&self, state: usize) -> usize {
        self.available[state]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.n_actions + action] = value;
    }

    /// Values of the available actions at `state`.
    pub fn row(&self, state: usize) -> &[f64] {
        let start = state * self.n_actions;
        &self.values[start..start + self.available[state]]
    }

    pub fn max(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    /// All actions attaining the maximum exactly.
    pub fn greedy_set(&self, state: usize) -> Vec<usize> {
        let best = self.max(state);
        (0..self.available[state]).filter(|&a| self.get(state, a) == best).collect()
    }

    pub fn greedy_policy(&self, mdp: &TabularMdp) -> DeterministicPolicy {
        let actions = (0..self.n_states).map(|s| self.greedy_action(s)).collect();
        DeterministicPolicy::new(mdp, actions).expect("greedy actions are available")
    }

    /// `max |self - other|` over available `(s, a)`.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        (0..self.n_states)
            .flat_map(|s| (0..self.available[s]).map(move |a| (s, a)))
            .map(|(s, a)| (self.get(s, a) - other.get(s, a)).abs())
            .fold(0.0, f64::max)
    }
}

/// Successor features `psi(s, a)` of a fixed policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SfTable {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    available: Vec<usize>,
    psi: Vec<f64>,
}

impl SfTable {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_available(&self, state: usize) -> usize {
        self.available[state]
    }

    pub fn get(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.n_actions + action) * self.dim;
        &self.psi[start..start + self.dim]
    }

    /// `psi(s, a)^T w`.
    pub fn q(&self, state: usize, action: usize, w: &TaskVector) -> Result<f64> {
        w.dot(self.get(state, action))
    }

    /// Largest componentwise difference over available `(s, a)`.
    pub fn sup_distance(&self, other: &SfTable) -> f64 {
        (0..self.n_states)
            .flat_map(|s| (0..self.available[s]).map(move |a| (s, a)))
            .flat_map(|(s, a)| {
                self.get(s, a)
                    .iter()
                    .zip(other.get(s, a))
                    .map(|(x, y)| (x - y).abs())
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }
}

/// Non-terminal states in an order where every successor comes first.
/// Errors if the non-terminal part of the transition graph has a cycle.
fn reverse_topological_order(mdp: &TabularMdp) -> Result<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = mdp.n_states();
    let mut marks = vec![Mark::New; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if mdp.is_terminal(root) || marks[root] != Mark::New {
            continue;
        }
        // (state, next action index, next outcome index)
        let mut stack = vec![(root, 0usize, 0usize)];
        marks[root] = Mark::Active;
        while let Some(&mut (s, ref mut a, ref mut o)) = stack.last_mut() {
            if *a >= mdp.n_available(s) {
                marks[s] = Mark::Done;
                order.push(s);
                stack.pop();
                continue;
            }
            let outs = mdp.outcomes(s, *a);
            if *o >= outs.len() {
                *a += 1;
                *o = 0;
                continue;
            }
            let next = outs[*o].next_state;
            let prob = outs[*o].prob;
            *o += 1;
            if prob == 0.0 || mdp.is_terminal(next) {
                continue;
            }
            match marks[next] {
                Mark::Active => {
                    return Err(Error::InvalidMdp(format!(
                        "undiscounted MDP has a cycle through state {next}"
                    )))
                }
                Mark::New => {
                    marks[next] = Mark::Active;
                    stack.push((next, 0, 0));
                }
                Mark::Done => {}
            }
        }
    }
    Ok(order)
}

fn backup(mdp: &TabularMdp, w: &[f64], values: &[f64], state: usize, action: usize) -> f64 {
    let gamma = mdp.gamma();
    mdp.outcomes(state, action)
        .iter()
        .map(|o| o.prob * (dot(o.phi.as_slice(), w) + gamma * values[o.next_state]))
        .sum()
}

fn q_from_values(mdp: &TabularMdp, w: &[f64], values: &[f64]) -> QTable {
    let mut q = QTable::zeros(mdp);
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_available(s) {
            q.set(s, a, backup(mdp, w, values, s, a));
        }
    }
    q
}

/// Change threshold between sweeps that bounds the distance to the fixed point
/// by `tol` for a `gamma`-contraction.
fn stopping_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma < 1.0 {
        tol * (1.0 - gamma) / gamma.max(f64::MIN_POSITIVE)
    } else {
        tol * 1e-3
    }
}

/// Optimal action values `Q*_w`.
pub fn value_iteration(mdp: &TabularMdp, w: &TaskVector, tol: f64) -> Result<QTable> {
    check_dim(mdp.feature_dim(), w.dim())?;
    let w = w.as_slice();
    let n = mdp.n_states();
    let mut values = vec![0.0; n];

    if mdp.gamma() >= 1.0 {
        for s in reverse_topological_order(mdp)? {
            values[s] = (0..mdp.n_available(s))
                .map(|a| backup(mdp, w, &values, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        return Ok(q_from_values(mdp, w, &values));
    }

    let threshold = stopping_threshold(mdp.gamma(), tol);
    let mut next = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                (0..mdp.n_available(s))
                    .map(|a| backup(mdp, w, &values, s, a))
                    .fold(f64::NEG_INFINITY, f64::max)
            };
            change = change.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            return Ok(q_from_values(mdp, w, &values));
        }
    }
    let q = q_from_values(mdp, w, &values);
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: bellman_residual_optimal(mdp, &TaskVector::new(w.to_vec())?, &q)?,
    })
}

/// `max |Q(s,a) - (T* Q)(s,a)|`.
pub fn bellman_residual_optimal(mdp: &TabularMdp, w: &TaskVector, q: &QTable) -> Result<f64> {
    check_dim(mdp.feature_dim(), w.dim())?;
    let values: Vec<f64> = (0..mdp.n_states())
        .map(|s| if mdp.is_terminal(s) { 0.0 } else { q.max(s) })
        .collect();
    let target = q_from_values(mdp, w.as_slice(), &values);
    Ok(q.sup_distance(&target))
}

/// The greedy policy of `Q*_w`.
pub fn optimal_policy(mdp: &TabularMdp, w: &TaskVector) -> Result<DeterministicPolicy> {
    Ok(value_iteration(mdp, w, DEFAULT_TOL)?.greedy_policy(mdp))
}

/// Successor features of `policy`, by solving `(I - gamma P_pi) X = E_pi[phi]`
/// over the non-terminal states.
pub fn policy_evaluation_sf(mdp: &TabularMdp, policy: &DeterministicPolicy) -> Result<SfTable> {
    check_dim(mdp.n_states(), policy.actions().len())?;
    let d = mdp.feature_dim();
    let gamma = mdp.gamma();
    let live: Vec<usize> = (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)).collect();
    let mut index = vec![usize::MAX; mdp.n_states()];
    for (i, &s) in live.iter().enumerate() {
        index[s] = i;
    }

    let m = live.len();
    let mut state_sf = vec![0.0; mdp.n_states() * d];
    if m > 0 {
        let mut lhs = DMatrix::<f64>::identity(m, m);
        let mut rhs = DMatrix::<f64>::zeros(m, d);
        for (i, &s) in live.iter().enumerate() {
            let a = policy.action(s);
            for o in mdp.outcomes(s, a) {
                if !mdp.is_terminal(o.next_state) {
                    lhs[(i, index[o.next_state])] -= gamma * o.prob;
                }
                for k in 0..d {
                    rhs[(i, k)] += o.prob * o.phi.as_slice()[k];
                }
            }
        }
        let solution = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("policy never terminates under gamma = 1".into()))?;
        for (i, &s) in live.iter().enumerate() {
            for k in 0..d {
                state_sf[s * d + k] = solution[(i, k)];
            }
        }
    }

    let n_actions = mdp.n_actions();
    let mut psi = vec![0.0; mdp.n_states() * n_actions * d];
    for s in live.iter().copied() {
        for a in 0..mdp.n_available(s) {
            let out = &mut psi[(s * n_actions + a) * d..(s * n_actions + a + 1) * d];
            for o in mdp.outcomes(s, a) {
                let next = &state_sf[o.next_state * d..(o.next_state + 1) * d];
                for k in 0..d {
                    out[k] += o.prob * (o.phi.as_slice()[k] + gamma * next[k]);
                }
            }
        }
    }
    let table = SfTable {
        n_states: mdp.n_states(),
        n_actions,
        dim: d,
        available: (0..mdp.n_states()).map(|s| mdp.n_available(s)).collect(),
        psi,
    };
    let residual = sf_bellman_residual(mdp, policy, &table);
    let scale = 1.0 + table.psi.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if !(residual <= 1e-9 * scale) {
        return Err(Error::NoConvergence { iterations: 1, residual });
    }
    Ok(table)
}

/// `max |psi(s,a) - E[phi + gamma psi(s', pi(s'))]|` componentwise.
pub fn sf_bellman_residual(mdp: &TabularMdp, policy: &DeterministicPolicy, sf: &SfTable) -> f64 {
    let d = mdp.feature_dim();
    let gamma = mdp.gamma();
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_available(s) {
            let mut target = vec![0.0; d];
            for o in mdp.outcomes(s, a) {
                let next = if mdp.is_terminal(o.next_state) {
                    vec![0.0; d]
                } else {
                    sf.get(o.next_state, policy.action(o.next_state)).to_vec()
                };
                for k in 0..d {
                    target[k] += o.prob * (o.phi.as_slice()[k] + gamma * next[k]);
                }
            }
            for k in 0..d {
                worst = worst.max((sf.get(s, a)[k] - target[k]).abs());
            }
        }
    }
    worst
}

/// `Q(s, a) = psi(s, a)^T w` for every `(s, a)`.
pub fn q_from_sf(psi: &SfTable, w: &TaskVector) -> Result<QTable> {
    check_dim(psi.dim, w.dim())?;
    let mut values = vec![0.0; psi.n_states * psi.n_actions];
    for (i, v) in values.iter_mut().enumerate() {
        *v = dot(&psi.psi[i * psi.dim..(i + 1) * psi.dim], w.as_slice());
    }
    Ok(QTable {
        n_states: psi.n_states,
        n_actions: psi.n_actions,
        available: psi.available.clone(),
        values,
    })
}

/// Scalar `Q^pi_w` by iterative policy evaluation. Independent of the
/// linear-solve route in [`policy_evaluation_sf`].
pub fn evaluate_policy_scalar(
    mdp: &TabularMdp,
    policy: &DeterministicPolicy,
    w: &TaskVector,
) -> Result<QTable> {
    check_dim(mdp.feature_dim(), w.dim())?;
    check_dim(mdp.n_states(), policy.actions().len())?;
    let w = w.as_slice();
    let n = mdp.n_states();
    let threshold = stopping_threshold(mdp.gamma(), DEFAULT_TOL);
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        change = 0.0;
        for s in 0..n {
            next[s] = if mdp.is_terminal(s) {
                0.0
            } else {
                backup(mdp, w, &values, s, policy.action(s))
            };
            change = change.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            return Ok(q_from_values(mdp, w, &values));
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: change,
    })
}

/// Exact optimal expected return from `start`.
///
/// Undiscounted MDPs are solved by enumerating every action sequence (with
/// expectation over successors) up to [`HORIZON_CAP`] decisions; discounted
/// ones fall back to [`value_iteration`].
pub fn optimal_return(mdp: &TabularMdp, w: &TaskVector, start: usize) -> Result<f64> {
    check_dim(mdp.feature_dim(), w.dim())?;
    if mdp.gamma() < 1.0 {
        let q = value_iteration(mdp, w, DEFAULT_TOL)?;
        return Ok(if mdp.is_terminal(start) { 0.0 } else { q.max(start) });
    }

    fn best(mdp: &TabularMdp, w: &[f64], state: usize, depth: usize) -> Result<f64> {
        if mdp.is_terminal(state) {
            return Ok(0.0);
        }
        if depth == HORIZON_CAP {
            return Err(Error::HorizonExceeded(HORIZON_CAP));
        }
        let mut top = f64::NEG_INFINITY;
        for a in 0..mdp.n_available(state) {
            let mut total = 0.0;
            for o in mdp.outcomes(state, a) {
                if o.prob > 0.0 {
                    total += o.prob * (dot(o.phi.as_slice(), w) + best(mdp, w, o.next_state, depth + 1)?);
                }
            }
            top = top.max(total);
        }
        Ok(top)
    }
    best(mdp, w.as_slice(), start, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_trip_mdp, make_two_state_mdp, TripMdpConfig};

    fn tv(v: &[f64]) -> TaskVector {
        TaskVector::new(v.to_vec()).unwrap()
    }

    const S1: usize = 0;
    const C: usize = 0;
    const F: usize = 1;
    const E: usize = 2;

    fn trip() -> TabularMdp {
        make_trip_mdp(&TripMdpConfig::default()).unwrap()
    }

    #[test]
    fn two_state_value_iteration() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        let q = value_iteration(&mdp, &tv(&[0.5]), DEFAULT_TOL).unwrap();
        assert!((q.get(0, 1) - 0.5).abs() < 1e-9);
        assert!((q.get(0, 0) - 0.45).abs() < 1e-9);

        let q = value_iteration(&mdp, &tv(&[-0.3]), DEFAULT_TOL).unwrap();
        assert!(q.get(0, 0).abs() < 1e-9);
        assert!((q.get(0, 1) + 0.3).abs() < 1e-9);
        assert_eq!(q.greedy_action(0), 0);
    }

    #[test]
    fn trip_value_iteration() {
        let mdp = trip();
        let q = value_iteration(&mdp, &tv(&[1.0, 0.0]), DEFAULT_TOL).unwrap();
        assert_eq!(q.get(S1, C), 1.0);
        assert_eq!(q.greedy_action(S1), C);
        assert!(bellman_residual_optimal(&mdp, &tv(&[1.0, 0.0]), &q).unwrap() < 1e-12);
    }

    #[test]
    fn undiscounted_cycle_rejected() {
        let mdp = TabularMdp::builder(2, 1, 1.0)
            .terminal(1)
            .transition(0, 0, 0, 1.0, vec![0.0])
            .unwrap()
            .transition(0, 1, 1, 1.0, vec![1.0])
            .unwrap()
            .build()
            .unwrap();
        assert!(matches!(
            value_iteration(&mdp, &tv(&[1.0]), DEFAULT_TOL),
            Err(Error::InvalidMdp(_))
        ));
        // The looping policy never terminates.
        let stay = DeterministicPolicy::constant(&mdp, 0);
        assert!(matches!(policy_evaluation_sf(&mdp, &stay), Err(Error::Singular(_))));
    }

    #[test]
    fn trip_successor_features() {
        let mdp = trip();
        let pi_c = DeterministicPolicy::constant(&mdp, C);
        let sf = policy_evaluation_sf(&mdp, &pi_c).unwrap();
        assert_eq!(sf.get(S1, C), &[1.0, 0.0]);

        // E at s1, then the 45 degree outcome (index 3 of 7) at s2.
        let pi = DeterministicPolicy::new(&mdp, vec![E, 3, 0]).unwrap();
        let sf = policy_evaluation_sf(&mdp, &pi).unwrap();
        let expected = -0.05 + std::f64::consts::FRAC_1_SQRT_2;
        for x in sf.get(S1, E) {
            assert!((x - expected).abs() < 1e-12);
            assert!((x - 0.6571).abs() < 1e-4);
        }
        let q = q_from_sf(&sf, &tv(&[45f64.to_radians().cos(), 45f64.to_radians().sin()])).unwrap();
        assert!((q.get(S1, E) - 0.9293).abs() < 1e-4);
    }

    #[test]
    fn zero_features_give_zero_sf() {
        let mdp = TabularMdp::builder(3, 2, 0.9)
            .terminal(2)
            .transition(0, 0, 1, 1.0, vec![0.0, 0.0])
            .unwrap()
            .transition(1, 0, 0, 0.5, vec![0.0, 0.0])
            .unwrap()
            .transition(1, 0, 2, 0.5, vec![0.0, 0.0])
            .unwrap()
            .build()
            .unwrap();
        let sf = policy_evaluation_sf(&mdp, &DeterministicPolicy::constant(&mdp, 0)).unwrap();
        assert_eq!(sf.sup_distance(&sf.clone()), 0.0);
        assert!((0..3).all(|s| sf.get(s, 0).iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn q_from_sf_examples() {
        let mdp = trip();
        let sf = policy_evaluation_sf(&mdp, &DeterministicPolicy::constant(&mdp, C)).unwrap();
        assert_eq!(sf.q(S1, C, &tv(&[0.0, 1.0])).unwrap(), 0.0);
        let q = q_from_sf(&sf, &TaskVector::zeros(2)).unwrap();
        assert!((0..3).all(|s| q.row(s).iter().all(|&x| x == 0.0)));
        assert!(q_from_sf(&sf, &tv(&[1.0])).is_err());
    }

    #[test]
    fn scalar_policy_evaluation_examples() {
        let mdp = trip();
        let pi_c = DeterministicPolicy::constant(&mdp, C);
        let q = evaluate_policy_scalar(&mdp, &pi_c, &tv(&[1.0, 0.0])).unwrap();
        assert_eq!(q.get(S1, C), 1.0);
        let q = evaluate_policy_scalar(&mdp, &pi_c, &tv(&[0.0, 1.0])).unwrap();
        assert_eq!(q.get(S1, C), 0.0);
        let q = evaluate_policy_scalar(&mdp, &pi_c, &TaskVector::zeros(2)).unwrap();
        assert_eq!(q.max(S1), 0.0);
        let _ = F;
    }

    #[test]
    fn optimal_return_examples() {
        let mdp = trip();
        assert_eq!(optimal_return(&mdp, &tv(&[1.0, 0.0]), S1).unwrap(), 1.0);
        let diag = tv(&[45f64.to_radians().cos(), 45f64.to_radians().sin()]);
        let v = optimal_return(&mdp, &diag, S1).unwrap();
        assert!((v - (1.0 - 0.05 * 2f64.sqrt())).abs() < 1e-12);
        assert!((v - 0.9293).abs() < 1e-4);
    }

    #[test]
    fn optimal_return_discounted_falls_back() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        assert!((optimal_return(&mdp, &tv(&[0.5]), 0).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(optimal_return(&mdp, &tv(&[0.5]), 1).unwrap(), 0.0);
    }

    #[test]
    fn optimal_return_horizon_cap() {
        // A 70-step corridor needs more decisions than the cap allows.
        let n = 71;
        let mut b = TabularMdp::builder(n, 1, 1.0).terminal(n - 1);
        for s in 0..n - 1 {
            b = b.transition(s, 0, s + 1, 1.0, vec![1.0]).unwrap();
        }
        let mdp = b.build().unwrap();
        assert!(matches!(
            optimal_return(&mdp, &tv(&[1.0]), 0),
            Err(Error::HorizonExceeded(HORIZON_CAP))
        ));
        assert_eq!(optimal_return(&mdp, &tv(&[1.0]), 20).unwrap(), 50.0);
    }
}
