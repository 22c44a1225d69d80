//! Universal successor features approximators, UVFA baselines and training.

mod net;
mod sampler;
mod td;
mod train;
mod usfa;
mod uvfa;

pub use net::{ConditionedNet, LookupTable, NetGradients, COND_WIDTH, HEAD_WIDTH, TRUNK_WIDTH};
pub use sampler::{PolicySampler, SamplerKind};
pub use td::{cut_trace, cut_trace_q, episode_horizon, nstep_q_delta, nstep_td_delta, nstep_td_error_scalar};
pub use train::{train_usfa, train_uvfa, Budget, EnvFactory, Resample, Segment, TaskAssignment, TrainingConfig, TrainingLog};
pub use usfa::{SfBackend, SfUpdate, TabularSf, Usfa, UsfaLearner, UsfaModel};
pub use uvfa::{QBackend, QEvaluator, QUpdate, TabularQ, Uvfa, UvfaLearner, UvfaModel};

use rand::Rng;

use crate::error::Result;
use crate::gpi::{gpi_action, CandidateSet, SfEvaluator};
use crate::mdp::{argmax, FeatureVector, Observation, SeededRng, TaskVector};

/// One environment step as seen by the learner.
#[derive(Clone, Debug)]
pub struct TransitionSample {
    pub observation: Observation,
    pub action: usize,
    pub phi: FeatureVector,
    pub next_observation: Observation,
    pub done: bool,
    pub truncated: bool,
}

impl TransitionSample {
    /// The episode does not continue into the next sample.
    pub fn ends_episode(&self) -> bool {
        self.done || self.truncated
    }
}

/// Draws `Bernoulli(epsilon)` and, on success, a uniform action. The second
/// draw only happens when exploring.
fn explore(n_actions: usize, epsilon: f64, rng: &mut SeededRng) -> Option<usize> {
    if epsilon > 0.0 && rng.random_bool(epsilon.min(1.0)) {
        Some(rng.random_range(0..n_actions.max(1)))
    } else {
        None
    }
}

/// Epsilon-greedy GPI: a uniform action with probability `epsilon`, else
/// `argmax_b max_{z in C} psi(s, b, z)^T w`.
pub fn act_gpi<E: SfEvaluator + ?Sized>(
    evaluator: &E,
    obs: &Observation,
    w: &TaskVector,
    c: &CandidateSet,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<usize> {
    match explore(obs.n_actions, epsilon, rng) {
        Some(a) => Ok(a),
        None => Ok(gpi_action(evaluator, obs, w, c)?.action),
    }
}

/// Epsilon-greedy on `Q(s, ., w)`.
pub fn act_greedy_q<Q: QEvaluator + ?Sized>(
    model: &Q,
    obs: &Observation,
    w: &TaskVector,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<usize> {
    match explore(obs.n_actions, epsilon, rng) {
        Some(a) => Ok(a),
        None => {
            let q = model.q_values(obs, w)?;
            Ok(argmax(&q[..obs.n_actions.min(q.len())]))
        }
    }
}
