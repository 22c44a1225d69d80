//! Pieces shared by the successor-feature and value models: a conditioned
//! network and a lookup table keyed by state and a quantised vector.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{Observation, SeededRng};
use crate::nn::{Activation, Gradients, Mlp, Optimizer};

pub const TRUNK_WIDTH: usize = 32;
pub const COND_WIDTH: usize = 16;
pub const HEAD_WIDTH: usize = 32;

/// `head(trunk(x) ++ cond(c))`: state features and a conditioning vector are
/// embedded separately and combined by a joint head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionedNet {
    pub trunk: Mlp,
    pub cond: Mlp,
    pub head: Mlp,
}

pub struct NetGradients {
    pub trunk: Gradients,
    pub cond: Gradients,
    pub head: Gradients,
}

impl ConditionedNet {
    pub fn new(input_dim: usize, cond_dim: usize, output_dim: usize, rng: &mut SeededRng) -> Self {
        let trunk = Mlp::new(&[input_dim, TRUNK_WIDTH], Activation::Relu, Activation::Relu, rng);
        let cond = Mlp::new(&[cond_dim, COND_WIDTH, COND_WIDTH], Activation::Relu, Activation::Identity, rng);
        let head = Mlp::new(
            &[TRUNK_WIDTH + COND_WIDTH, HEAD_WIDTH, HEAD_WIDTH, output_dim],
            Activation::Relu,
            Activation::Identity,
            rng,
        );
        Self { trunk, cond, head }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.trunk.output_dim() + self.cond.output_dim(), self.head.input_dim())
    }

    pub fn embed(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.trunk.forward(features)
    }

    pub fn forward_embedded(&self, embedding: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        let mut joint = embedding.to_vec();
        joint.extend(self.cond.forward(c)?);
        self.head.forward(&joint)
    }

    pub fn forward(&self, features: &[f64], c: &[f64]) -> Result<Vec<f64>> {
        self.forward_embedded(&self.embed(features)?, c)
    }

    pub fn zero_gradients(&self) -> NetGradients {
        NetGradients {
            trunk: Gradients::zeros_like(&self.trunk),
            cond: Gradients::zeros_like(&self.cond),
            head: Gradients::zeros_like(&self.head),
        }
    }

    /// Adds `scale * d(upstream . output)/d(theta)` to `grads`.
    pub fn accumulate(
        &self,
        features: &[f64],
        c: &[f64],
        upstream: &[f64],
        scale: f64,
        grads: &mut NetGradients,
    ) -> Result<()> {
        let trunk_trace = self.trunk.forward_trace(features)?;
        let cond_trace = self.cond.forward_trace(c)?;
        let mut joint = trunk_trace.output().to_vec();
        joint.extend_from_slice(cond_trace.output());
        let head_trace = self.head.forward_trace(&joint)?;
        let g_joint = self.head.backward_into(&head_trace, upstream, scale, &mut grads.head)?;
        let (g_trunk_in, g_cond_in) = g_joint.split_at(self.trunk.output_dim());
        self.trunk.backward_into(&trunk_trace, g_trunk_in, scale, &mut grads.trunk)?;
        self.cond.backward_into(&cond_trace, g_cond_in, scale, &mut grads.cond)?;
        Ok(())
    }

    pub fn step(&mut self, optimizer: &mut Optimizer, grads: &NetGradients) -> Result<()> {
        optimizer.step(
            &mut [&mut self.trunk, &mut self.cond, &mut self.head],
            &[&grads.trunk, &grads.cond, &grads.head],
        )
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.trunk.parameters();
        p.extend(self.cond.parameters());
        p.extend(self.head.parameters());
        p
    }
}

/// Rows of `width` values keyed by `(state id, round(v / bucket))`. Missing
/// rows read as zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr", into = "TableRepr")]
pub struct LookupTable {
    width: usize,
    bucket: f64,
    rows: BTreeMap<(usize, Vec<i64>), Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TableRepr {
    width: usize,
    bucket: f64,
    rows: Vec<TableRow>,
}

#[derive(Serialize, Deserialize)]
struct TableRow {
    state: usize,
    key: Vec<i64>,
    values: Vec<f64>,
}

impl LookupTable {
    pub fn new(width: usize, bucket: f64) -> Result<Self> {
        if !(bucket.is_finite() && bucket > 0.0) {
            return Err(Error::Config(vec![format!("tabular bucket must be > 0, got {bucket}")]));
        }
        Ok(Self {
            width,
            bucket,
            rows: BTreeMap::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn key(&self, obs: &Observation, v: &[f64]) -> Result<(usize, Vec<i64>)> {
        let state = obs.state_id.ok_or(Error::MissingStateId)?;
        Ok((state, v.iter().map(|x| (x / self.bucket).round() as i64).collect()))
    }

    pub fn get(&self, obs: &Observation, v: &[f64]) -> Result<Vec<f64>> {
        let key = self.key(obs, v)?;
        Ok(self.rows.get(&key).cloned().unwrap_or_else(|| vec![0.0; self.width]))
    }

    pub fn set(&mut self, obs: &Observation, v: &[f64], values: Vec<f64>) -> Result<()> {
        check_dim(self.width, values.len())?;
        let key = self.key(obs, v)?;
        self.rows.insert(key, values);
        Ok(())
    }

    /// `row[offset..offset + delta.len()] += lr * delta`.
    pub fn add(&mut self, obs: &Observation, v: &[f64], offset: usize, delta: &[f64], lr: f64) -> Result<()> {
        let key = self.key(obs, v)?;
        let width = self.width;
        let row = self.rows.entry(key).or_insert_with(|| vec![0.0; width]);
        for (x, d) in row[offset..offset + delta.len()].iter_mut().zip(delta) {
            *x += lr * d;
        }
        Ok(())
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.rows.values().flatten().copied().collect()
    }
}

impl From<LookupTable> for TableRepr {
    fn from(t: LookupTable) -> Self {
        TableRepr {
            width: t.width,
            bucket: t.bucket,
            rows: t
                .rows
                .into_iter()
                .map(|((state, key), values)| TableRow { state, key, values })
                .collect(),
        }
    }
}

impl TryFrom<TableRepr> for LookupTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        let mut t = LookupTable::new(r.width, r.bucket)?;
        for row in r.rows {
            check_dim(r.width, row.values.len())?;
            t.rows.insert((row.state, row.key), row.values);
        }
        Ok(t)
    }
}
