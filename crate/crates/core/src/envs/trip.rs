use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const TRIP_START: usize = 0;
pub const TRIP_EXPLORE_STATE: usize = 1;
pub const TRIP_TERMINAL: usize = 2;

/// Actions at the arrival state.
pub const COFFEE: usize = 0;
pub const FOOD: usize = 1;
pub const EXPLORE: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripMdpConfig {
    /// Angular resolution `N`: the second state offers outcomes at angles
    /// `k pi / 2N` for `k = 0..=N`.
    #[serde(default = "default_angles")]
    pub n_angles: usize,
    /// Cost `eps` of the exploration action, whose features are `[-eps, -eps]`.
    #[serde(default = "default_cost")]
    pub epsilon_cost: f64,
}

fn default_angles() -> usize {
    6
}

fn default_cost() -> f64 {
    0.05
}

impl Default for TripMdpConfig {
    fn default() -> Self {
        Self {
            n_angles: default_angles(),
            epsilon_cost: default_cost(),
        }
    }
}

/// Unit-norm outcome features `[cos t, sin t]` with `t = k pi / 2N`; the two
/// axis-aligned outcomes are exact.
pub fn trip_outcome(k: usize, n_angles: usize) -> [f64; 2] {
    if k == 0 {
        [1.0, 0.0]
    } else if k == n_angles {
        [0.0, 1.0]
    } else {
        let t = k as f64 * FRAC_PI_2 / n_angles as f64;
        [t.cos(), t.sin()]
    }
}

/// Two decision states plus an absorbing terminal, undiscounted.
///
/// The arrival state offers coffee (`[1, 0]`), food (`[0, 1]`) or exploring
/// (`[-eps, -eps]`, moves to the second state); every action of the second
/// state picks one of the `N + 1` outcomes and terminates.
pub fn make_trip_mdp(config: &TripMdpConfig) -> Result<TabularMdp> {
    if config.n_angles == 0 {
        return Err(Error::Config(vec!["trip: n_angles must be >= 1".into()]));
    }
    if !(config.epsilon_cost >= 0.0) || !config.epsilon_cost.is_finite() {
        return Err(Error::Config(vec!["trip: epsilon_cost must be finite and >= 0".into()]));
    }
    let eps = config.epsilon_cost;
    let mut b = TabularMdp::builder(3, 2, 1.0)
        .terminal(TRIP_TERMINAL)
        .transition(TRIP_START, COFFEE, TRIP_TERMINAL, 1.0, vec![1.0, 0.0])?
        .transition(TRIP_START, FOOD, TRIP_TERMINAL, 1.0, vec![0.0, 1.0])?
        .transition(TRIP_START, EXPLORE, TRIP_EXPLORE_STATE, 1.0, vec![-eps, -eps])?;
    for k in 0..=config.n_angles {
        b = b.transition(TRIP_EXPLORE_STATE, k, TRIP_TERMINAL, 1.0, trip_outcome(k, config.n_angles).to_vec())?;
    }
    b.build()
}
