//! n-step temporal-difference errors with trace cutting.
//!
//! A trajectory slice starts at the transition being updated. Returns never
//! cross an episode boundary: a terminal transition stops the sum with no
//! bootstrap, a truncated one (or the end of the slice) bootstraps from the
//! last next-observation.

use super::uvfa::QEvaluator;
use super::TransitionSample;
use crate::error::{check_dim, Error, Result};
use crate::gpi::{SfEvaluator, SfMatrix};
use crate::mdp::{argmax, dot, Observation, TaskVector};

/// Number of transitions an `n`-step return can use from the start of `traj`.
pub fn episode_horizon(traj: &[TransitionSample], n: usize) -> usize {
    let limit = n.min(traj.len());
    traj[..limit]
        .iter()
        .position(TransitionSample::ends_episode)
        .map_or(limit, |i| i + 1)
}

fn greedy_sf(sf: &SfMatrix, obs: &Observation, z: &TaskVector) -> Result<usize> {
    let q = sf.q_values(z)?;
    Ok(argmax(&q[..obs.n_actions.min(q.len())]))
}

fn greedy_q(q: &[f64], obs: &Observation) -> usize {
    argmax(&q[..obs.n_actions.min(q.len())])
}

fn check_trajectory(traj: &[TransitionSample], n: usize) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if n == 0 {
        return Err(Error::Config(vec!["n-step length must be >= 1".into()]));
    }
    Ok(())
}

/// Largest `m <= n` such that every behaviour action after the first one in
/// `traj[..m]` is greedy for `z`.
pub fn cut_trace<E: SfEvaluator + ?Sized>(
    traj: &[TransitionSample],
    z: &TaskVector,
    model: &E,
    n: usize,
) -> Result<usize> {
    check_trajectory(traj, n)?;
    let horizon = episode_horizon(traj, n);
    for m in 1..horizon {
        let step = &traj[m];
        let sf = model.successor_features(&step.observation, z)?;
        if step.action != greedy_sf(&sf, &step.observation, z)? {
            return Ok(m);
        }
    }
    Ok(horizon)
}

/// Scalar counterpart of [`cut_trace`] for a value model and task `w`.
pub fn cut_trace_q<Q: QEvaluator + ?Sized>(
    traj: &[TransitionSample],
    w: &TaskVector,
    model: &Q,
    n: usize,
) -> Result<usize> {
    check_trajectory(traj, n)?;
    let horizon = episode_horizon(traj, n);
    for m in 1..horizon {
        let step = &traj[m];
        let q = model.q_values(&step.observation, w)?;
        if step.action != greedy_q(&q, &step.observation) {
            return Ok(m);
        }
    }
    Ok(horizon)
}

/// `sum_i gamma^i phi_{t+i+1} + gamma^m psi(s_{t+m}, a', z) - psi(s_t, a_t, z)`
/// with `a' = argmax_b psi(s_{t+m}, b, z)^T z`.
pub fn nstep_td_delta<E: SfEvaluator + ?Sized>(
    traj: &[TransitionSample],
    z: &TaskVector,
    model: &E,
    n: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_trajectory(traj, n)?;
    let m = episode_horizon(traj, n);
    let d = z.dim();
    let mut delta = vec![0.0; d];
    let mut discount = 1.0;
    for step in &traj[..m] {
        check_dim(d, step.phi.dim())?;
        for (x, p) in delta.iter_mut().zip(step.phi.as_slice()) {
            *x += discount * p;
        }
        discount *= gamma;
    }
    let last = &traj[m - 1];
    if !last.done {
        let sf = model.successor_features(&last.next_observation, z)?;
        let next = greedy_sf(&sf, &last.next_observation, z)?;
        for (x, p) in delta.iter_mut().zip(sf.row(next)) {
            *x += discount * p;
        }
    }
    let sf = model.successor_features(&traj[0].observation, z)?;
    for (x, p) in delta.iter_mut().zip(sf.row(traj[0].action)) {
        *x -= p;
    }
    Ok(delta)
}

/// The same error for `Q(s, a, w, z) = psi(s, a, z)^T w`, computed with
/// scalar rewards. Equals `nstep_td_delta(..)^T w`.
pub fn nstep_td_error_scalar<E: SfEvaluator + ?Sized>(
    traj: &[TransitionSample],
    z: &TaskVector,
    w: &TaskVector,
    model: &E,
    n: usize,
    gamma: f64,
) -> Result<f64> {
    check_trajectory(traj, n)?;
    check_dim(z.dim(), w.dim())?;
    let m = episode_horizon(traj, n);
    let mut delta = 0.0;
    let mut discount = 1.0;
    for step in &traj[..m] {
        delta += discount * w.dot(step.phi.as_slice())?;
        discount *= gamma;
    }
    let last = &traj[m - 1];
    if !last.done {
        let sf = model.successor_features(&last.next_observation, z)?;
        let next = greedy_sf(&sf, &last.next_observation, z)?;
        delta += discount * dot(sf.row(next), w.as_slice());
    }
    let sf = model.successor_features(&traj[0].observation, z)?;
    Ok(delta - dot(sf.row(traj[0].action), w.as_slice()))
}

/// n-step Q-learning error for a value model: bootstrap with
/// `max_b Q(s_{t+m}, b, w)`.
pub fn nstep_q_delta<Q: QEvaluator + ?Sized>(
    traj: &[TransitionSample],
    w: &TaskVector,
    model: &Q,
    n: usize,
    gamma: f64,
) -> Result<f64> {
    check_trajectory(traj, n)?;
    let m = episode_horizon(traj, n);
    let mut delta = 0.0;
    let mut discount = 1.0;
    for step in &traj[..m] {
        delta += discount * w.dot(step.phi.as_slice())?;
        discount *= gamma;
    }
    let last = &traj[m - 1];
    if !last.done {
        let q = model.q_values(&last.next_observation, w)?;
        delta += discount * q[greedy_q(&q, &last.next_observation)];
    }
    let q = model.q_values(&traj[0].observation, w)?;
    Ok(delta - q[traj[0].action])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TabularSf;
    use crate::envs::{make_two_state_mdp, LEAVE, STAY};
    use crate::gpi::ExactSfOracle;
    use crate::mdp::{FeatureVector, TabularEnv};

    fn tv(v: &[f64]) -> TaskVector {
        TaskVector::new(v.to_vec()).unwrap()
    }

    /// Returns the given matrix everywhere.
    struct Constant(SfMatrix);

    impl SfEvaluator for Constant {
        fn successor_features(&self, _: &Observation, _: &TaskVector) -> Result<SfMatrix> {
            Ok(self.0.clone())
        }
    }

    fn obs(id: usize) -> Observation {
        Observation {
            state_id: Some(id),
            features: vec![id as f64],
            n_actions: 2,
        }
    }

    fn step(from: usize, action: usize, phi: &[f64], done: bool) -> TransitionSample {
        TransitionSample {
            observation: obs(from),
            action,
            phi: FeatureVector::new(phi.to_vec()).unwrap(),
            next_observation: obs(from + 1),
            done,
            truncated: false,
        }
    }

    #[test]
    fn one_step_terminal_is_phi_minus_psi() {
        let model = Constant(SfMatrix::new(2, 2, vec![0.5, 0.25, -1.0, 2.0]).unwrap());
        let traj = [step(0, 1, &[1.0, 1.0], true)];
        let delta = nstep_td_delta(&traj, &tv(&[1.0, 0.0]), &model, 1, 0.9).unwrap();
        assert_eq!(delta, vec![2.0, -1.0]);
    }

    #[test]
    fn bootstrap_uses_greedy_action_for_z() {
        // Row 0 is better for z = e1, row 1 for z = e2.
        let model = Constant(SfMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let traj = [step(0, 0, &[0.0, 0.0], false), step(1, 0, &[2.0, 0.0], false)];
        let d1 = nstep_td_delta(&traj, &tv(&[1.0, 0.0]), &model, 2, 0.5).unwrap();
        // 0 + 0.5 * [2, 0] + 0.25 * [1, 0] - [1, 0]
        assert_eq!(d1, vec![0.25, 0.0]);
        let d2 = nstep_td_delta(&traj, &tv(&[0.0, 1.0]), &model, 2, 0.5).unwrap();
        assert_eq!(d2, vec![0.0, 0.25]);
    }

    #[test]
    fn returns_stop_at_episode_boundaries() {
        let mut traj = vec![step(0, 0, &[1.0], false), step(1, 0, &[1.0], true), step(0, 0, &[5.0], false)];
        assert_eq!(episode_horizon(&traj, 5), 2);
        let model = Constant(SfMatrix::zeros(2, 1));
        let delta = nstep_td_delta(&traj, &tv(&[1.0]), &model, 5, 0.5).unwrap();
        assert_eq!(delta, vec![1.5]);
        traj[1].done = false;
        traj[1].truncated = true;
        assert_eq!(episode_horizon(&traj, 5), 2);
        assert!(matches!(nstep_td_delta(&[], &tv(&[1.0]), &model, 1, 0.5), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn trace_cut_at_first_disagreement() {
        let model = Constant(SfMatrix::new(2, 1, vec![1.0, 0.0]).unwrap());
        let z = tv(&[1.0]);
        let greedy = vec![step(0, 1, &[0.0], false), step(1, 0, &[0.0], false), step(2, 0, &[0.0], false)];
        assert_eq!(cut_trace(&greedy, &z, &model, 5).unwrap(), 3);
        assert_eq!(cut_trace(&greedy, &z, &model, 2).unwrap(), 2);
        let mut off = greedy.clone();
        off[1].action = 1;
        assert_eq!(cut_trace(&off, &z, &model, 5).unwrap(), 1);
    }

    #[test]
    fn exact_features_are_a_fixed_point() {
        let mdp = make_two_state_mdp(0.9).unwrap();
        let env = TabularEnv::new(mdp.clone(), 0, None);
        let oracle = ExactSfOracle::new(mdp.clone());
        let z = tv(&[1.0]);
        let mut table = TabularSf::new(2, 1, 0.1).unwrap();
        table.insert_exact(&z, &oracle.table(&z).unwrap(), |s| env.observe(s)).unwrap();
        for action in [STAY, LEAVE] {
            for n in 1..4 {
                let mut rng = crate::mdp::seeded_rng(n as u64);
                let mut traj = Vec::new();
                let mut state = 0;
                let mut a = action;
                for _ in 0..n {
                    let (next, phi, done) = mdp.step(state, a, &mut rng).unwrap();
                    traj.push(TransitionSample {
                        observation: env.observe(state),
                        action: a,
                        phi,
                        next_observation: env.observe(next),
                        done,
                        truncated: false,
                    });
                    if done {
                        break;
                    }
                    state = next;
                    a = LEAVE;
                }
                let delta = nstep_td_delta(&traj, &z, &table, n, 0.9).unwrap();
                assert!(delta[0].abs() <= 1e-10, "{delta:?}");
            }
        }
    }
}
