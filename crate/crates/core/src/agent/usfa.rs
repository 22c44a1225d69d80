use serde::{Deserialize, Serialize};

use super::net::{ConditionedNet, LookupTable};
use crate::error::{check_dim, Error, Result};
use crate::exact::SfTable;
use crate::gpi::{SfEvaluator, SfMatrix};
use crate::mdp::{Observation, SeededRng, TaskVector};
use crate::nn::{Optimizer, OptimizerConfig};

/// `psi(s, ., z)` as a network: state trunk, z-conditioning net and a joint
/// head with `|A| * d` outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsfaModel {
    n_actions: usize,
    dim: usize,
    net: ConditionedNet,
}

impl UsfaModel {
    pub fn new(observation_dim: usize, n_actions: usize, dim: usize, rng: &mut SeededRng) -> Self {
        Self {
            n_actions,
            dim,
            net: ConditionedNet::new(observation_dim, dim, n_actions * dim, rng),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn net(&self) -> &ConditionedNet {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut ConditionedNet {
        &mut self.net
    }

    /// Trunk output, reusable across many `z`.
    pub fn state_embedding(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.net.embed(features)
    }

    pub fn sf_from_embedding(&self, embedding: &[f64], z: &TaskVector) -> Result<SfMatrix> {
        check_dim(self.dim, z.dim())?;
        SfMatrix::new(self.n_actions, self.dim, self.net.forward_embedded(embedding, z.as_slice())?)
    }

    pub fn usfa_sf(&self, features: &[f64], z: &TaskVector) -> Result<SfMatrix> {
        self.sf_from_embedding(&self.state_embedding(features)?, z)
    }

    pub fn sf_batch(&self, features: &[f64], zs: &[TaskVector]) -> Result<Vec<SfMatrix>> {
        let embedding = self.state_embedding(features)?;
        zs.iter().map(|z| self.sf_from_embedding(&embedding, z)).collect()
    }

    /// `psi(s, ., z)^T w`.
    pub fn q_values(&self, features: &[f64], z: &TaskVector, w: &TaskVector) -> Result<Vec<f64>> {
        self.usfa_sf(features, z)?.q_values(w)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.net.parameters()
    }
}

/// Lookup-table `psi(s, a, z)` keyed by state and quantised `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularSf {
    n_actions: usize,
    dim: usize,
    table: LookupTable,
}

impl TabularSf {
    pub fn new(n_actions: usize, dim: usize, bucket: f64) -> Result<Self> {
        Ok(Self {
            n_actions,
            dim,
            table: LookupTable::new(n_actions * dim, bucket)?,
        })
    }

    /// Loads the rows of an exact table for embedding `z`.
    pub fn insert_exact(&mut self, z: &TaskVector, exact: &SfTable, observe: impl Fn(usize) -> Observation) -> Result<()> {
        check_dim(self.dim, exact.dim())?;
        for s in 0..exact.n_states() {
            let mut row = vec![0.0; self.n_actions * self.dim];
            for a in 0..exact.n_available(s).min(self.n_actions) {
                row[a * self.dim..(a + 1) * self.dim].copy_from_slice(exact.get(s, a));
            }
            self.table.set(&observe(s), z.as_slice(), row)?;
        }
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.table.parameters()
    }
}

impl SfEvaluator for TabularSf {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        check_dim(self.dim, z.dim())?;
        SfMatrix::new(self.n_actions, self.dim, self.table.get(obs, z.as_slice())?)
    }
}

impl SfEvaluator for UsfaModel {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        self.usfa_sf(&obs.features, z)
    }
}

/// A trained (or training) successor-feature approximator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "kebab-case")]
pub enum Usfa {
    Mlp(UsfaModel),
    Tabular(TabularSf),
}

impl Usfa {
    pub fn parameters(&self) -> Vec<f64> {
        match self {
            Usfa::Mlp(m) => m.parameters(),
            Usfa::Tabular(t) => t.parameters(),
        }
    }

    /// Many `z` at one state; the network reuses the state embedding.
    pub fn sf_batch(&self, obs: &Observation, zs: &[TaskVector]) -> Result<Vec<SfMatrix>> {
        match self {
            Usfa::Mlp(m) => m.sf_batch(&obs.features, zs),
            Usfa::Tabular(t) => zs.iter().map(|z| t.successor_features(obs, z)).collect(),
        }
    }
}

impl SfEvaluator for Usfa {
    fn successor_features(&self, obs: &Observation, z: &TaskVector) -> Result<SfMatrix> {
        match self {
            Usfa::Mlp(m) => m.successor_features(obs, z),
            Usfa::Tabular(t) => t.successor_features(obs, z),
        }
    }
}

/// Vector TD error for `psi(s, a, z)`.
#[derive(Clone, Debug)]
pub struct SfUpdate {
    pub observation: Observation,
    pub action: usize,
    pub z: TaskVector,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SfBackend {
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

pub(crate) fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::adam(1e-3)
}

pub(crate) fn default_tabular_lr() -> f64 {
    0.1
}

pub(crate) fn default_bucket() -> f64 {
    0.1
}

impl Default for SfBackend {
    fn default() -> Self {
        SfBackend::Mlp {
            optimizer: default_optimizer(),
        }
    }
}

/// Owns the parameters being learned and the optimiser state.
#[derive(Clone, Debug)]
pub struct UsfaLearner {
    model: Usfa,
    optimizer: Optimizer,
    tabular_lr: f64,
}

impl UsfaLearner {
    pub fn new(
        backend: &SfBackend,
        observation_dim: usize,
        n_actions: usize,
        dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        Ok(match backend {
            SfBackend::Mlp { optimizer } => Self {
                model: Usfa::Mlp(UsfaModel::new(observation_dim, n_actions, dim, rng)),
                optimizer: Optimizer::new(*optimizer),
                tabular_lr: 0.0,
            },
            SfBackend::Tabular { lr, bucket } => Self {
                model: Usfa::Tabular(TabularSf::new(n_actions, dim, *bucket)?),
                optimizer: Optimizer::new(default_optimizer()),
                tabular_lr: *lr,
            },
        })
    }

    pub fn from_model(model: Usfa, backend: &SfBackend) -> Self {
        let (optimizer, tabular_lr) = match backend {
            SfBackend::Mlp { optimizer } => (*optimizer, 0.0),
            SfBackend::Tabular { lr, .. } => (default_optimizer(), *lr),
        };
        Self {
            model,
            optimizer: Optimizer::new(optimizer),
            tabular_lr,
        }
    }

    pub fn model(&self) -> &Usfa {
        &self.model
    }

    pub fn into_model(self) -> Usfa {
        self.model
    }

    /// Moves `psi(s, a, z)` along each `delta`. The network descends
    /// `-mean(delta^T psi(s, a, z))` with `delta` held fixed; the table adds
    /// `lr * delta` to each entry in turn.
    pub fn apply(&mut self, updates: &[SfUpdate]) -> Result<()> {
        if updates.is_empty() {
            return Ok(());
        }
        if let Some(u) = updates.iter().find(|u| u.delta.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite(format!(
                "TD error {:?} at action {} for z = {}",
                u.delta, u.action, u.z
            )));
        }
        match &mut self.model {
            Usfa::Mlp(m) => {
                let mut grads = m.net.zero_gradients();
                let scale = 1.0 / updates.len() as f64;
                let mut upstream = vec![0.0; m.n_actions * m.dim];
                for u in updates {
                    check_dim(m.dim, u.delta.len())?;
                    upstream.iter_mut().for_each(|x| *x = 0.0);
                    for (x, d) in upstream[u.action * m.dim..(u.action + 1) * m.dim].iter_mut().zip(&u.delta) {
                        *x = -d;
                    }
                    m.net.accumulate(&u.observation.features, u.z.as_slice(), &upstream, scale, &mut grads)?;
                }
                m.net.step(&mut self.optimizer, &grads)
            }
            Usfa::Tabular(t) => {
                for u in updates {
                    check_dim(t.dim, u.delta.len())?;
                    t.table
                        .add(&u.observation, u.z.as_slice(), u.action * t.dim, &u.delta, self.tabular_lr)?;
                }
                Ok(())
            }
        }
    }
}
