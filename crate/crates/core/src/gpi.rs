//! Generalised policy improvement (GPI) over candidate policy embeddings.
//!
//! Given successor features `psi(s, a, z)` for a set `C` of policy embeddings,
//! the GPI policy for task `w'` acts by
//! `argmax_a max_{z in C} psi(s, a, z)^T w'`.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::exact::{evaluate_policy_scalar, optimal_policy, policy_evaluation_sf, value_iteration, QTable, SfTable, DEFAULT_TOL};
use crate::mdp::{dot, DeterministicPolicy, Observation, TabularMdp, TaskVector};

/// Ordered, non-empty set of policy embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TaskVector>", into = "Vec<TaskVector>")]
pub struct CandidateSet(Vec<TaskVector>);

impl CandidateSet {
    pub fn new(policies: Vec<TaskVector>) -> Result<Self> {
        let first = policies.first().ok_or(Error::EmptyCandidateSet)?;
        for z in &policies[1..] {
            check_dim(first.dim(), z.dim())?;
        }
        Ok(Self(policies))
    }

    pub fn singleton(z: TaskVector) -> Self {
        Self(vec![z])
    }

    pub fn policies(&self) -> &[TaskVector] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.0[0].dim()
    }

    /// `self ∪ {z}`, skipping `z` if already present.
    pub fn with(&self, z: TaskVector) -> Self {
        let mut policies = self.0.clone();
        if !policies.contains(&z) {
            policies.push(z);
        }
        Self(policies)
    }
}

impl TryFrom<Vec<TaskVector>> for CandidateSet {
    type Error = Error;

    fn try_from(policies: Vec<TaskVector>) -> Result<Self> {
        Self::new(policies)
    }
}

impl From<CandidateSet> for Vec<TaskVector> {
    fn from(c: CandidateSet) -> Self {
        c.0
    }
}

/// `psi(s, ., z)` for every action of one state, row-major `(|A|, d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SfMatrix {
    n_actions: usize,
    dim: usize,
    data: Vec<f64>,
}

impl SfMatrix {
    pub fn new(n_actions: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(n_actions * dim, data.len())?;
        Ok(Self { n_actions, dim, data })
    }

    pub fn zeros(n_actions: usize, dim: usize) -> Self {
        Self {
            n_actions,
            dim,
            data: vec![0.0; n_actions * dim],
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, action: usize) -> &[f64] {
        &self.data[action * self.dim..(action + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `psi(s, a, z)^T w` for every action.
    pub fn q_values(&self, w: &TaskVector) -> Result<Vec<f64>> {
        check_dim(self.dim, w.dim())?;
        Ok((0..self.n_actions).map(|a| dot(self.row(a), w.as_slice())).collect())
    }
}

/// Anything that can produce successor features for a policy embedding.
pub trait SfEvaluator {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix>;
}

impl<T: SfEvaluator + ?Sized> SfEvaluator for &T {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        (**self).successor_features(obs, z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GpiChoice {
    pub action: usize,
    /// Index into the candidate set of the embedding that attained the max.
    pub candidate: usize,
    pub q_value: f64,
}

/// GPI over precomputed successor features (one matrix per candidate).
/// Ties go to the lowest action, then the lowest candidate.
pub fn gpi_over(sfs: &[SfMatrix], n_available: usize, w_prime: &TaskVector) -> Result<GpiChoice> {
    if sfs.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let mut best = GpiChoice {
        action: 0,
        candidate: 0,
        q_value: f64::NEG_INFINITY,
    };
    let q: Vec<Vec<f64>> = sfs.iter().map(|m| m.q_values(w_prime)).collect::<Result<_>>()?;
    for a in 0..n_available.max(1) {
        for (i, qi) in q.iter().enumerate() {
            if qi[a] > best.q_value {
                best = GpiChoice {
                    action: a,
                    candidate: i,
                    q_value: qi[a],
                };
            }
        }
    }
    Ok(best)
}

/// `argmax_a max_{z in C} psi(s, a, z)^T w'`.
pub fn gpi_action<E: SfEvaluator + ?Sized>(
    evaluator: &E,
    obs: &Observation,
    w_prime: &TaskVector,
    c: &CandidateSet,
) -> Result<GpiChoice> {
    let sfs = c
        .policies()
        .iter()
        .map(|z| evaluator.successor_features(obs, z))
        .collect::<Result<Vec<_>>>()?;
    gpi_over(&sfs, obs.n_actions, w_prime)
}

/// Which form of the GPI performance bound to compute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundForm {
    /// `2/(1-γ) min_z(phi_sup ‖w'-z‖) + max_z(‖w'‖ δψ(z))`.
    #[default]
    AsTypeset,
    /// `2/(1-γ) [min_z(phi_sup ‖w'-z‖) + max_z(‖w'‖ δψ(z))]`.
    Conservative,
}

/// Upper bound on `‖Q*_{w'} - Q^GPI_{w'}‖∞` given per-candidate successor
/// feature errors `delta_psi[i]` (aligned with `c`).
pub fn gpi_bound(
    w_prime: &TaskVector,
    c: &CandidateSet,
    phi_sup: f64,
    gamma: f64,
    delta_psi: &[f64],
    form: BoundForm,
) -> Result<f64> {
    if gamma >= 1.0 {
        return Err(Error::DiscountTooLarge(gamma));
    }
    check_dim(c.len(), delta_psi.len())?;
    if delta_psi.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::NonFinite("delta_psi (must be finite and >= 0)".into()));
    }
    let distance = c
        .policies()
        .iter()
        .map(|z| w_prime.distance(z).map(|d| phi_sup * d))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let approx = delta_psi
        .iter()
        .map(|d| w_prime.norm() * d)
        .fold(f64::NEG_INFINITY, f64::max);
    let factor = 2.0 / (1.0 - gamma);
    Ok(match form {
        BoundForm::AsTypeset => factor * distance + approx,
        BoundForm::Conservative => factor * (distance + approx),
    })
}

/// The exact GPI policy over a list of successor-feature tables.
pub fn tabular_gpi_policy(
    mdp: &TabularMdp,
    w_prime: &TaskVector,
    sf_tables: &[SfTable],
) -> Result<DeterministicPolicy> {
    if sf_tables.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let actions = (0..mdp.n_states())
        .map(|s| {
            let sfs = sf_tables
                .iter()
                .map(|t| {
                    let rows = (0..t.n_actions()).flat_map(|a| t.get(s, a).to_vec()).collect();
                    SfMatrix::new(t.n_actions(), t.dim(), rows)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(gpi_over(&sfs, mdp.n_available(s), w_prime)?.action)
        })
        .collect::<Result<Vec<_>>>()?;
    DeterministicPolicy::new(mdp, actions)
}

#[derive(Clone, Debug)]
pub struct DominanceReport {
    pub policy: DeterministicPolicy,
    pub q_gpi: QTable,
    /// `max_{s,a,i} (psi_i(s,a)^T w' - Q^GPI(s,a))`, floored at 0.
    pub max_violation: f64,
    /// Number of `(s, a, i)` exceeding the 1e-8 tolerance.
    pub violations: usize,
}

pub const DOMINANCE_TOL: f64 = 1e-8;

/// Evaluates the GPI policy exactly and checks that it dominates every
/// constituent policy on `w'`.
pub fn gpi_dominance_check(
    mdp: &TabularMdp,
    w_prime: &TaskVector,
    sf_tables: &[SfTable],
) -> Result<DominanceReport> {
    let policy = tabular_gpi_policy(mdp, w_prime, sf_tables)?;
    let q_gpi = evaluate_policy_scalar(mdp, &policy, w_prime)?;
    let mut max_violation: f64 = 0.0;
    let mut violations = 0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_available(s) {
            for t in sf_tables {
                let excess = t.q(s, a, w_prime)? - q_gpi.get(s, a);
                max_violation = max_violation.max(excess);
                if excess > DOMINANCE_TOL {
                    violations += 1;
                }
            }
        }
    }
    Ok(DominanceReport {
        policy,
        q_gpi,
        max_violation,
        violations,
    })
}

/// `‖Q*_{w'} - Q^GPI_{w'}‖∞` for the exact GPI policy over `sf_tables`.
pub fn gpi_optimality_gap(mdp: &TabularMdp, w_prime: &TaskVector, sf_tables: &[SfTable]) -> Result<f64> {
    let policy = tabular_gpi_policy(mdp, w_prime, sf_tables)?;
    let q_gpi = evaluate_policy_scalar(mdp, &policy, w_prime)?;
    let q_star = value_iteration(mdp, w_prime, DEFAULT_TOL)?;
    Ok(q_star.sup_distance(&q_gpi))
}

/// Exact successor features of the optimal policy of every requested `z`,
/// computed on demand and cached. Requires observations with a state id.
#[derive(Debug)]
pub struct ExactSfOracle {
    mdp: TabularMdp,
    cache: Mutex<HashMap<Vec<u64>, SfTable>>,
}

impl ExactSfOracle {
    pub fn new(mdp: TabularMdp) -> Self {
        Self {
            mdp,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    /// `psi^{pi_z}` where `pi_z` is greedy with respect to `Q*_z`.
    pub fn table(&self, z: &TaskVector) -> Result<SfTable> {
        let key: Vec<u64> = z.as_slice().iter().map(|x| x.to_bits()).collect();
        if let Some(t) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(t.clone());
        }
        let table = policy_evaluation_sf(&self.mdp, &optimal_policy(&self.mdp, z)?)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, table.clone());
        Ok(table)
    }
}

impl SfEvaluator for ExactSfOracle {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        let s = obs.state_id.ok_or(Error::MissingStateId)?;
        let t = self.table(z)?;
        let data = (0..t.n_actions()).flat_map(|a| t.get(s, a).to_vec()).collect();
        SfMatrix::new(t.n_actions(), t.dim(), data)
    }
}

/// Fixed successor-feature tables keyed by their policy embedding.
#[derive(Clone, Debug)]
pub struct SfTableSet {
    entries: Vec<(TaskVector, SfTable)>,
}

impl SfTableSet {
    pub fn new(entries: Vec<(TaskVector, SfTable)>) -> Self {
        Self { entries }
    }

    pub fn embeddings(&self) -> Vec<TaskVector> {
        self.entries.iter().map(|(z, _)| z.clone()).collect()
    }

    pub fn tables(&self) -> Vec<SfTable> {
        self.entries.iter().map(|(_, t)| t.clone()).collect()
    }
}

impl SfEvaluator for SfTableSet {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        let s = obs.state_id.ok_or(Error::MissingStateId)?;
        let (_, t) = self
            .entries
            .iter()
            .find(|(key, _)| key == z)
            .ok_or_else(|| Error::UnknownPolicy(z.as_slice().to_vec()))?;
        let data = (0..t.n_actions()).flat_map(|a| t.get(s, a).to_vec()).collect();
        SfMatrix::new(t.n_actions(), t.dim(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_trip_mdp, make_two_state_mdp, TripMdpConfig, TRIP_START};
    use crate::mdp::TabularEnv;

    fn tv(v: &[f64]) -> TaskVector {
        TaskVector::new(v.to_vec()).unwrap()
    }

    fn diag() -> TaskVector {
        let a = 45f64.to_radians();
        tv(&[a.cos(), a.sin()])
    }

    #[test]
    fn candidate_set_rejects_empty_and_ragged() {
        assert!(matches!(CandidateSet::new(vec![]), Err(Error::EmptyCandidateSet)));
        assert!(CandidateSet::new(vec![tv(&[1.0]), tv(&[1.0, 2.0])]).is_err());
        let c = CandidateSet::singleton(tv(&[1.0, 0.0])).with(tv(&[1.0, 0.0]));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn empty_candidates_error() {
        let mdp = make_trip_mdp(&TripMdpConfig::default()).unwrap();
        assert!(matches!(gpi_over(&[], 3, &diag()), Err(Error::EmptyCandidateSet)));
        assert!(matches!(tabular_gpi_policy(&mdp, &diag(), &[]), Err(Error::EmptyCandidateSet)));
    }

    #[test]
    fn singleton_reduces_to_greedy() {
        let m = SfMatrix::new(3, 2, vec![1.0, 0.0, 0.0, 2.0, 0.5, 0.5]).unwrap();
        let w = tv(&[1.0, 1.0]);
        let choice = gpi_over(std::slice::from_ref(&m), 3, &w).unwrap();
        let q = m.q_values(&w).unwrap();
        assert_eq!(choice.action, crate::mdp::argmax(&q));
        assert_eq!(choice.q_value, 2.0);
        // Only the first two actions available.
        assert_eq!(gpi_over(&[m], 1, &w).unwrap().action, 0);
    }

    #[test]
    fn trip_exact_gpi_picks_binary_outcome() {
        let mdp = make_trip_mdp(&TripMdpConfig::default()).unwrap();
        let oracle = ExactSfOracle::new(mdp.clone());
        let env = TabularEnv::new(mdp, 0, None);
        let c = CandidateSet::new(vec![tv(&[1.0, 0.0]), tv(&[0.0, 1.0])]).unwrap();
        let choice = gpi_action(&oracle, &env.observe(0), &diag(), &c).unwrap();
        assert_eq!(choice.action, 0);
        assert!((choice.q_value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn two_state_gpi_generalises_over_all_tasks() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        let oracle = ExactSfOracle::new(mdp.clone());
        let tables = vec![oracle.table(&tv(&[-1.0])).unwrap(), oracle.table(&tv(&[1.0])).unwrap()];
        for k in 0..=20 {
            let w = tv(&[-1.0 + 0.1 * k as f64]);
            let policy = tabular_gpi_policy(&mdp, &w, &tables).unwrap();
            let q = value_iteration(&mdp, &w, DEFAULT_TOL).unwrap();
            assert!(q.greedy_set(0).contains(&policy.action(0)), "w = {w:?}");
        }
    }

    #[test]
    fn bound_examples() {
        let w = tv(&[1.0, 0.0]);
        let same = CandidateSet::singleton(w.clone());
        assert_eq!(gpi_bound(&w, &same, 1.0, 0.9, &[0.0], BoundForm::AsTypeset).unwrap(), 0.0);

        let other = CandidateSet::singleton(tv(&[0.0, 1.0]));
        let b = gpi_bound(&w, &other, 1.0, 0.9, &[0.0], BoundForm::AsTypeset).unwrap();
        assert!((b - 20.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!((b - 28.2843).abs() < 1e-4);

        let c = CandidateSet::new(vec![w.clone(), tv(&[0.0, 1.0])]).unwrap();
        let small = gpi_bound(&w, &c, 1.0, 0.9, &[0.0, 0.1], BoundForm::AsTypeset).unwrap();
        let big = gpi_bound(&w, &c, 1.0, 0.9, &[0.0, 50.0], BoundForm::AsTypeset).unwrap();
        assert!(big >= small);
        assert!((big - 50.0).abs() < 1e-12);
        let conservative = gpi_bound(&w, &c, 1.0, 0.9, &[0.0, 50.0], BoundForm::Conservative).unwrap();
        assert!((conservative - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn bound_rejects_undiscounted() {
        let w = tv(&[1.0]);
        let c = CandidateSet::singleton(w.clone());
        assert!(matches!(
            gpi_bound(&w, &c, 1.0, 1.0, &[0.0], BoundForm::AsTypeset),
            Err(Error::DiscountTooLarge(_))
        ));
    }

    #[test]
    fn single_policy_dominance_is_tight() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        let oracle = ExactSfOracle::new(mdp.clone());
        let table = oracle.table(&tv(&[-1.0])).unwrap();
        let report = gpi_dominance_check(&mdp, &tv(&[0.5]), &[table]).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.max_violation <= 1e-8);
    }

    #[test]
    fn trip_dominance_without_optimality() {
        let mdp = make_trip_mdp(&TripMdpConfig::default()).unwrap();
        let oracle = ExactSfOracle::new(mdp.clone());
        let tables = vec![oracle.table(&tv(&[1.0, 0.0])).unwrap(), oracle.table(&tv(&[0.0, 1.0])).unwrap()];
        let report = gpi_dominance_check(&mdp, &diag(), &tables).unwrap();
        assert_eq!(report.violations, 0);
        // Q-gap is small because exploring then following GPI is optimal;
        // the loss is in the action GPI picks at the start state.
        let q_star = value_iteration(&mdp, &diag(), DEFAULT_TOL).unwrap();
        let start = report.q_gpi.get(TRIP_START, report.policy.action(TRIP_START));
        assert!((q_star.max(TRIP_START) - start - 0.2222).abs() < 1e-4);
    }

    #[test]
    fn table_set_rejects_unknown_embedding() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        let oracle = ExactSfOracle::new(mdp.clone());
        let set = SfTableSet::new(vec![(tv(&[1.0]), oracle.table(&tv(&[1.0])).unwrap())]);
        let env = TabularEnv::new(mdp, 0, None);
        assert!(set.successor_features(&env.observe(0), &tv(&[1.0])).is_ok());
        assert!(matches!(
            set.successor_features(&env.observe(0), &tv(&[2.0])),
            Err(Error::UnknownPolicy(_))
        ));
    }
}
