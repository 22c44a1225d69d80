use rand::Rng;

use crate::mdp::{SeededRng, TabularMdp};

/// Shape limits for [`random_tabular_mdp`].
#[derive(Clone, Debug)]
pub struct RandomMdpSpec {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_dim: usize,
    pub gamma_range: (f64, f64),
    /// Every `(s, a)` has a single successor.
    pub deterministic: bool,
    /// Probability that each state after the first is absorbing.
    pub terminal_prob: f64,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self {
            max_states: 10,
            max_actions: 4,
            max_dim: 3,
            gamma_range: (0.5, 0.95),
            deterministic: false,
            terminal_prob: 0.1,
        }
    }
}

/// A discounted MDP with 2..=max_states states, 2..=max_actions actions,
/// 1..=max_dim features in `[-1, 1]` and up to three successors per `(s, a)`.
pub fn random_tabular_mdp(rng: &mut SeededRng, spec: &RandomMdpSpec) -> TabularMdp {
    let n = rng.random_range(2..=spec.max_states.max(2));
    let n_actions = rng.random_range(2..=spec.max_actions.max(2));
    let d = rng.random_range(1..=spec.max_dim.max(1));
    let (lo, hi) = spec.gamma_range;
    let gamma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let terminal: Vec<bool> = (0..n).map(|s| s > 0 && rng.random_bool(spec.terminal_prob)).collect();

    let mut b = TabularMdp::builder(n, d, gamma);
    for (s, _) in terminal.iter().enumerate().filter(|(_, t)| **t) {
        b = b.terminal(s);
    }
    for s in (0..n).filter(|&s| !terminal[s]) {
        for a in 0..n_actions {
            let k = if spec.deterministic { 1 } else { rng.random_range(1..=3.min(n)) };
            let mut next: Vec<usize> = Vec::with_capacity(k);
            while next.len() < k {
                let candidate = rng.random_range(0..n);
                if !next.contains(&candidate) {
                    next.push(candidate);
                }
            }
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let head: f64 = probs[..k - 1].iter().sum();
            probs[k - 1] = 1.0 - head;
            for (s2, p) in next.into_iter().zip(probs) {
                let phi = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                b = b.transition(s, a, s2, p, phi).expect("generated transition is valid");
            }
        }
    }
    b.build().expect("generated MDP is valid")
}
