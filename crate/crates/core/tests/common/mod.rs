#![allow(dead_code)]

use rand::Rng;
use usfa_core::agent::{TransitionSample, UsfaModel};
use usfa_core::mdp::{FeatureVector, Observation, SeededRng, TaskVector};

pub fn task(v: &[f64]) -> TaskVector {
    TaskVector::new(v.to_vec()).unwrap()
}

pub fn random_vector(rng: &mut SeededRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn observation(rng: &mut SeededRng, obs_dim: usize, n_actions: usize) -> Observation {
    Observation {
        state_id: None,
        features: random_vector(rng, obs_dim),
        n_actions,
    }
}

/// A chain of `len` transitions with random features; each step ends the
/// episode with probability `p_end`, split between termination and
/// truncation.
pub fn random_trajectory(
    rng: &mut SeededRng,
    len: usize,
    obs_dim: usize,
    n_actions: usize,
    dim: usize,
    p_end: f64,
) -> Vec<TransitionSample> {
    let mut obs = observation(rng, obs_dim, n_actions);
    (0..len)
        .map(|_| {
            let next = observation(rng, obs_dim, n_actions);
            let ends = rng.random_bool(p_end);
            let done = ends && rng.random_bool(0.5);
            let t = TransitionSample {
                observation: std::mem::replace(&mut obs, next.clone()),
                action: rng.random_range(0..n_actions),
                phi: FeatureVector::new(random_vector(rng, dim)).unwrap(),
                next_observation: next,
                done,
                truncated: ends && !done,
            };
            if ends {
                obs = observation(rng, obs_dim, n_actions);
            }
            t
        })
        .collect()
}

pub fn random_model(rng: &mut SeededRng, obs_dim: usize, n_actions: usize, dim: usize) -> UsfaModel {
    UsfaModel::new(obs_dim, n_actions, dim, rng)
}
