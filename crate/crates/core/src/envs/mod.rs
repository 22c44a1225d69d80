//! Environments and task-set generators.

mod grid;
mod random;
mod tasks;
mod trip;
mod two_state;

pub use grid::{GridCollect, GridCollectConfig, GRID_ACTIONS, OBJECT_TYPES};
pub use random::{random_tabular_mdp, RandomMdpSpec};
pub use tasks::{generate_tasks, load_tasks, TaskSetSpec};
pub use trip::{
    make_trip_mdp, trip_outcome, TripMdpConfig, COFFEE, EXPLORE, FOOD, TRIP_EXPLORE_STATE, TRIP_START,
    TRIP_TERMINAL,
};
pub use two_state::{make_two_state_mdp, LEAVE, STAY};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Environment, TabularEnv, TabularMdp};

/// Environment selection, keyed by registry name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvConfig {
    Trip(TripMdpConfig),
    TwoState {
        #[serde(default = "default_two_state_gamma")]
        gamma: f64,
        /// Episodes that never leave are cut after this many steps.
        #[serde(default = "default_two_state_cap")]
        step_cap: usize,
    },
    GridCollect(GridCollectConfig),
}

fn default_two_state_gamma() -> f64 {
    0.9
}

fn default_two_state_cap() -> usize {
    20
}

impl EnvConfig {
    /// Default configuration for a registry name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "trip" => Ok(EnvConfig::Trip(TripMdpConfig::default())),
            "two-state" => Ok(EnvConfig::TwoState {
                gamma: default_two_state_gamma(),
                step_cap: default_two_state_cap(),
            }),
            "grid-collect" => Ok(EnvConfig::GridCollect(GridCollectConfig::default())),
            _ => Err(Error::Unknown {
                kind: "environment",
                name: name.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Trip(_) => "trip",
            EnvConfig::TwoState { .. } => "two-state",
            EnvConfig::GridCollect(_) => "grid-collect",
        }
    }

    /// The exact model and start state, for environments that have one.
    pub fn tabular(&self) -> Result<Option<(TabularMdp, usize)>> {
        Ok(match self {
            EnvConfig::Trip(c) => Some((make_trip_mdp(c)?, TRIP_START)),
            EnvConfig::TwoState { gamma, .. } => Some((make_two_state_mdp(*gamma)?, 0)),
            EnvConfig::GridCollect(_) => None,
        })
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Trip(c) => Box::new(TabularEnv::new(make_trip_mdp(c)?, TRIP_START, None)),
            EnvConfig::TwoState { gamma, step_cap } => {
                Box::new(TabularEnv::new(make_two_state_mdp(*gamma)?, 0, Some(*step_cap)))
            }
            EnvConfig::GridCollect(c) => Box::new(GridCollect::new(c.clone())?),
        })
    }
}
