use serde::{Deserialize, Serialize};

use super::net::{ConditionedNet, LookupTable};
use super::usfa::{default_bucket, default_optimizer, default_tabular_lr};
use crate::error::{check_dim, Error, Result};
use crate::exact::QTable;
use crate::mdp::{Observation, SeededRng, TaskVector};
use crate::nn::{Optimizer, OptimizerConfig};

/// Anything that scores the actions at an observation for a task.
pub trait QEvaluator {
    fn q_values(&self, obs: &Observation, w: &TaskVector) -> Result<Vec<f64>>;
}

impl<T: QEvaluator + ?Sized> QEvaluator for &T {
    fn q_values(&self, obs: &Observation, w: &TaskVector) -> Result<Vec<f64>> {
        (**self).q_values(obs, w)
    }
}

/// `Q(s, ., w)` from a state trunk and a task-conditioning net; unaware of
/// the linear reward structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UvfaModel {
    n_actions: usize,
    dim: usize,
    net: ConditionedNet,
}

impl UvfaModel {
    pub fn new(observation_dim: usize, n_actions: usize, dim: usize, rng: &mut SeededRng) -> Self {
        Self {
            n_actions,
            dim,
            net: ConditionedNet::new(observation_dim, dim, n_actions, rng),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn net(&self) -> &ConditionedNet {
        &self.net
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.net.parameters()
    }
}

impl QEvaluator for UvfaModel {
    fn q_values(&self, obs: &Observation, w: &TaskVector) -> Result<Vec<f64>> {
        check_dim(self.dim, w.dim())?;
        self.net.forward(&obs.features, w.as_slice())
    }
}

/// Lookup-table `Q(s, a, w)` keyed by state and quantised `w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularQ {
    n_actions: usize,
    dim: usize,
    table: LookupTable,
}

impl TabularQ {
    pub fn new(n_actions: usize, dim: usize, bucket: f64) -> Result<Self> {
        Ok(Self {
            n_actions,
            dim,
            table: LookupTable::new(n_actions, bucket)?,
        })
    }

    /// Largest deviation from an exact table over available actions.
    pub fn sup_distance(&self, w: &TaskVector, exact: &QTable, observe: impl Fn(usize) -> Observation) -> Result<f64> {
        let mut worst = 0.0f64;
        for s in 0..exact.n_states() {
            let row = self.table.get(&observe(s), w.as_slice())?;
            for (a, &x) in row.iter().enumerate().take(exact.n_available(s)) {
                worst = worst.max((x - exact.get(s, a)).abs());
            }
        }
        Ok(worst)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.table.parameters()
    }
}

impl QEvaluator for TabularQ {
    fn q_values(&self, obs: &Observation, w: &TaskVector) -> Result<Vec<f64>> {
        check_dim(self.dim, w.dim())?;
        self.table.get(obs, w.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum Uvfa {
    Mlp(UvfaModel),
    Tabular(TabularQ),
}

impl Uvfa {
    pub fn parameters(&self) -> Vec<f64> {
        match self {
            Uvfa::Mlp(m) => m.parameters(),
            Uvfa::Tabular(t) => t.parameters(),
        }
    }
}

impl QEvaluator for Uvfa {
    fn q_values(&self, obs: &Observation, w: &TaskVector) -> Result<Vec<f64>> {
        match self {
            Uvfa::Mlp(m) => m.q_values(obs, w),
            Uvfa::Tabular(t) => t.q_values(obs, w),
        }
    }
}

/// Scalar TD error for `Q(s, a, w)`.
#[derive(Clone, Debug)]
pub struct QUpdate {
    pub observation: Observation,
    pub action: usize,
    pub w: TaskVector,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum QBackend {
    Mlp {
        #[serde(default = "default_optimizer")]
        optimizer: OptimizerConfig,
    },
    Tabular {
        #[serde(default = "default_tabular_lr")]
        lr: f64,
        #[serde(default = "default_bucket")]
        bucket: f64,
    },
}

impl Default for QBackend {
    fn default() -> Self {
        QBackend::Mlp {
            optimizer: default_optimizer(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UvfaLearner {
    model: Uvfa,
    optimizer: Optimizer,
    tabular_lr: f64,
}

impl UvfaLearner {
    pub fn new(
        backend: &QBackend,
        observation_dim: usize,
        n_actions: usize,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(match backend {
            QBackend::Mlp { optimizer } => Self {
                model: Uvfa::Mlp(UvfaModel::new(observation_dim, n_actions, dim, rng)),
                optimizer: Optimizer::new(*optimizer),
                tabular_lr: 0.0,
            },
            QBackend::Tabular { lr, bucket } => Self {
                model: Uvfa::Tabular(TabularQ::new(n_actions, dim, *bucket)?),
                optimizer: Optimizer::new(default_optimizer()),
                tabular_lr: *lr,
            },
        })
    }

    pub fn model(&self) -> &Uvfa {
        &self.model
    }

    pub fn into_model(self) -> Uvfa {
        self.model
    }

    /// Network: descend `-mean(delta * Q(s, a, w))`; table: `Q += lr * delta`.
    pub fn apply(&mut self, updates: &[QUpdate]) -> Result<()> {
        if updates.is_empty() {
            return Ok(());
        }
        if let Some(u) = updates.iter().find(|u| !u.delta.is_finite()) {
            return Err(Error::NonFinite(format!(
                "TD error {} at action {} for w = {}",
                u.delta, u.action, u.w
            )));
        }
        match &mut self.model {
            Uvfa::Mlp(m) => {
                let mut grads = m.net.zero_gradients();
                let scale = 1.0 / updates.len() as f64;
                let mut upstream = vec![0.0; m.n_actions];
                for u in updates {
                    upstream.iter_mut().for_each(|x| *x = 0.0);
                    upstream[u.action] = -u.delta;
                    m.net.accumulate(&u.observation.features, u.w.as_slice(), &upstream, scale, &mut grads)?;
                }
                m.net.step(&mut self.optimizer, &grads)
            }
            Uvfa::Tabular(t) => {
                for u in updates {
                    t.table.add(&u.observation, u.w.as_slice(), u.action, &[u.delta], self.tabular_lr)?;
                }
                Ok(())
            }
        }
    }
}
