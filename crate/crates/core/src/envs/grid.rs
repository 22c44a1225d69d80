//! Object collection on a square grid with four object types.
//!
//! Moving onto an object collects it and emits the one-hot feature of its
//! type. Episodes never reach an absorbing state; they end at the step cap.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{seeded_rng, EnvStep, Environment, FeatureVector, Observation, SeededRng};

pub const OBJECT_TYPES: usize = 4;
pub const GRID_ACTIONS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCollectConfig {
    #[serde(default = "default_side")]
    pub side: usize,
    /// Objects of each type placed at reset.
    #[serde(default = "default_counts")]
    pub counts: [usize; OBJECT_TYPES],
    #[serde(default = "default_step_cap")]
    pub step_cap: usize,
    /// Collected objects reappear at a random free cell.
    #[serde(default = "default_respawn")]
    pub respawn: bool,
    /// Seed of the initial layout, shared by every episode.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn default_side() -> usize {
    6
}
fn default_counts() -> [usize; OBJECT_TYPES] {
    [3; OBJECT_TYPES]
}
fn default_step_cap() -> usize {
    200
}
fn default_respawn() -> bool {
    true
}
fn default_gamma() -> f64 {
    0.9
}

impl Default for GridCollectConfig {
    fn default() -> Self {
        Self {
            side: default_side(),
            counts: default_counts(),
            step_cap: default_step_cap(),
            respawn: default_respawn(),
            seed: 0,
            gamma: default_gamma(),
        }
    }
}

impl GridCollectConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.side < 2 {
            problems.push("grid-collect: side must be >= 2".to_string());
        }
        let total: usize = self.counts.iter().sum();
        if total + 1 > self.side * self.side {
            problems.push(format!(
                "grid-collect: {total} objects do not fit on a {0}x{0} grid with the agent",
                self.side
            ));
        }
        if self.step_cap == 0 {
            problems.push("grid-collect: step_cap must be >= 1".to_string());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push("grid-collect: gamma must be in [0, 1)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridCollect {
    config: GridCollectConfig,
    agent: (usize, usize),
    /// `cells[y * side + x]` holds the object type at that cell.
    cells: Vec<Option<usize>>,
    t: usize,
}

impl GridCollect {
    pub fn new(config: GridCollectConfig) -> Result<Self> {
        config.validate()?;
        let n = config.side * config.side;
        let mut env = Self {
            config,
            agent: (0, 0),
            cells: vec![None; n],
            t: 0,
        };
        env.layout();
        Ok(env)
    }

    pub fn config(&self) -> &GridCollectConfig {
        &self.config
    }

    pub fn agent(&self) -> (usize, usize) {
        self.agent
    }

    pub fn object_at(&self, x: usize, y: usize) -> Option<usize> {
        self.cells[y * self.config.side + x]
    }

    fn layout(&mut self) {
        let side = self.config.side;
        self.agent = (side / 2, side / 2);
        self.cells.iter_mut().for_each(|c| *c = None);
        self.t = 0;
        let mut rng = seeded_rng(self.config.seed);
        for (kind, &count) in self.config.counts.clone().iter().enumerate() {
            for _ in 0..count {
                self.place(kind, &mut rng);
            }
        }
    }

    /// Puts an object on a uniformly chosen free cell (not the agent's).
    fn place(&mut self, kind: usize, rng: &mut SeededRng) {
        let side = self.config.side;
        let agent = self.agent.1 * side + self.agent.0;
        let free: Vec<usize> = (0..self.cells.len())
            .filter(|&i| i != agent && self.cells[i].is_none())
            .collect();
        if free.is_empty() {
            return;
        }
        let i = free[rng.random_range(0..free.len())];
        self.cells[i] = Some(kind);
    }

    pub fn observe(&self) -> Observation {
        let side = self.config.side;
        let scale = (side - 1) as f64;
        let (ax, ay) = self.agent;
        let mut features = vec![ax as f64 / scale, ay as f64 / scale];
        let mut nearest = [None::<(i64, i64)>; OBJECT_TYPES];
        let mut counts = [0usize; OBJECT_TYPES];
        for (i, cell) in self.cells.iter().enumerate() {
            if let Some(kind) = *cell {
                counts[kind] += 1;
                let dx = (i % side) as i64 - ax as i64;
                let dy = (i / side) as i64 - ay as i64;
                let closer = nearest[kind].is_none_or(|(bx, by)| dx.abs() + dy.abs() < bx.abs() + by.abs());
                if closer {
                    nearest[kind] = Some((dx, dy));
                }
            }
        }
        for n in nearest {
            let (dx, dy) = n.unwrap_or((0, 0));
            features.push(dx as f64 / scale);
            features.push(dy as f64 / scale);
        }
        for (kind, c) in counts.iter().enumerate() {
            let initial = self.config.counts[kind];
            features.push(if initial == 0 { 0.0 } else { *c as f64 / initial as f64 });
        }
        Observation {
            state_id: None,
            features,
            n_actions: GRID_ACTIONS,
        }
    }
}

impl Environment for GridCollect {
    fn feature_dim(&self) -> usize {
        OBJECT_TYPES
    }

    fn n_actions(&self) -> usize {
        GRID_ACTIONS
    }

    fn observation_dim(&self) -> usize {
        2 + 3 * OBJECT_TYPES
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }

    fn reset(&mut self, _rng: &mut SeededRng) -> Observation {
        self.layout();
        self.observe()
    }

    /// Actions: 0 up, 1 down, 2 left, 3 right. Walls block movement.
    fn step(&mut self, action: usize, rng: &mut SeededRng) -> Result<EnvStep> {
        let side = self.config.side;
        let (x, y) = self.agent;
        self.agent = match action {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(side - 1)),
            2 => (x.saturating_sub(1), y),
            3 => ((x + 1).min(side - 1), y),
            _ => return Err(Error::InvalidAction { state: y * side + x, action }),
        };
        let mut phi = vec![0.0; OBJECT_TYPES];
        let cell = self.agent.1 * side + self.agent.0;
        if let Some(kind) = self.cells[cell].take() {
            phi[kind] = 1.0;
            if self.config.respawn {
                self.place(kind, rng);
            }
        }
        self.t += 1;
        Ok(EnvStep {
            observation: self.observe(),
            phi: FeatureVector::new(phi)?,
            done: false,
            truncated: self.t >= self.config.step_cap,
        })
    }
}
