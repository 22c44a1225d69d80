//! Fully connected networks with exact reverse-mode gradients, SGD/Adam, a
//! finite-difference gradient checker and a JSON checkpoint format.
//!
//! Checkpoint layout (`format = "usfa-mlp"`, `version = 1`):
//!
//! ```json
//! {"format": "usfa-mlp", "version": 1,
//!  "layers": [{"inputs": 3, "outputs": 2, "activation": "relu",
//!              "weights": [/* outputs x inputs, row-major */],
//!              "bias": [/* outputs */]}]}
//! ```

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn uniform(inputs: usize, outputs: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut draw = || rng.random_range(-bound..=bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            activation,
            weights,
            bias,
        }
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn pre_activation(&self, input: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpCheckpoint", into = "MlpCheckpoint")]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer values recorded by [`Mlp::forward_trace`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `inputs[i]` is the input to layer `i`; the last entry is the output.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }

    /// Pre-activation values of every layer, input layer first.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config(vec!["network needs at least one layer".into()]));
        }
        for l in &layers {
            check_dim(l.inputs * l.outputs, l.weights.len())?;
            check_dim(l.outputs, l.bias.len())?;
            if !l.weights.iter().chain(&l.bias).all(|x| x.is_finite()) {
                return Err(Error::NonFinite("network parameters".into()));
            }
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].outputs, pair[1].inputs)?;
        }
        Ok(Self { layers })
    }

    /// Layer sizes `sizes[0] -> ... -> sizes[n]`; hidden layers use `hidden`,
    /// the last layer `output`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut SeededRng) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::uniform(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All weights and biases, layer by layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), input.len())?;
        let mut x = input.to_vec();
        for l in &self.layers {
            x = l.pre_activation(&x).into_iter().map(|p| l.activation.apply(p)).collect();
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        check_dim(self.input_dim(), input.len())?;
        let mut activations = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let p = l.pre_activation(activations.last().expect("non-empty"));
            activations.push(p.iter().map(|&v| l.activation.apply(v)).collect());
            pre.push(p);
        }
        Ok(ForwardTrace { activations, pre })
    }

    /// Gradients of `upstream^T f(input)` with respect to the parameters and
    /// to the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        self.backward_from(&trace, upstream)
    }

    pub fn backward_from(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let delta = self.backward_into(trace, upstream, 1.0, &mut grads)?;
        Ok((grads, delta))
    }

    /// Adds `scale` times the parameter gradient into `grads` and returns the
    /// unscaled gradient with respect to the input.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        check_dim(self.output_dim(), upstream.len())?;
        if !grads.matches(self) {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: grads.len(),
            });
        }
        let mut delta = upstream.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            for (d, &p) in delta.iter_mut().zip(&trace.pre[i]) {
                *d *= l.activation.derivative(p);
            }
            let x = &trace.activations[i];
            let g = &mut grads.layers[i];
            let mut below = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let ds = d * scale;
                g.bias[o] += ds;
                let grow = &mut g.weights[o * l.inputs..(o + 1) * l.inputs];
                for (gw, xi) in grow.iter_mut().zip(x) {
                    *gw += ds * xi;
                }
                let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                for (b, w) in below.iter_mut().zip(row) {
                    *b += d * w;
                }
            }
            delta = below;
        }
        Ok(delta)
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients with the same shape as an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    #[cfg(test)]
    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    fn matches(&self, mlp: &Mlp) -> bool {
        self.layers.len() == mlp.layers.len()
            && self
                .layers
                .iter()
                .zip(&mlp.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_adam_eps(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { lr } | OptimizerConfig::Adam { lr, .. } => lr,
        }
    }
}

/// Descends a loss given its gradients. Holds the moment estimates for Adam,
/// laid out over all parameters of the networks passed to [`Optimizer::step`]
/// in order.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            first: Vec::new(),
            second: Vec::new(),
            t: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// One descent step: `theta -= lr * g` (SGD) or the bias-corrected Adam
    /// update. Fails without touching parameters if any gradient is non-finite.
    pub fn step(&mut self, nets: &mut [&mut Mlp], grads: &[&Gradients]) -> Result<()> {
        check_dim(nets.len(), grads.len())?;
        for (n, g) in nets.iter().zip(grads) {
            if !g.matches(n) {
                return Err(Error::DimensionMismatch {
                    expected: n.param_count(),
                    actual: g.len(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        let slices = nets.iter_mut().zip(grads).flat_map(|(n, g)| {
            n.layers.iter_mut().zip(&g.layers).flat_map(|(l, lg)| {
                [(&mut l.weights[..], &lg.weights[..]), (&mut l.bias[..], &lg.bias[..])]
            })
        });
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                for (ps, gs) in slices {
                    for (p, g) in ps.iter_mut().zip(gs) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let total: usize = grads.iter().map(|g| g.len()).sum();
                if self.first.len() != total {
                    self.first = vec![0.0; total];
                    self.second = vec![0.0; total];
                    self.t = 0;
                }
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                let mut offset = 0;
                for (ps, gs) in slices {
                    let n = ps.len();
                    let ms = &mut self.first[offset..offset + n];
                    let vs = &mut self.second[offset..offset + n];
                    for i in 0..n {
                        let g = gs[i];
                        let m = beta1 * ms[i] + (1.0 - beta1) * g;
                        let v = beta2 * vs[i] + (1.0 - beta2) * g * g;
                        ms[i] = m;
                        vs[i] = v;
                        ps[i] -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                    }
                    offset += n;
                }
            }
        }
        Ok(())
    }
}

/// Largest relative error between [`Mlp::backward`] and central differences
/// of `upstream^T f(input)` over every parameter. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-7)`.
pub fn finite_diff_check(mlp: &Mlp, input: &[f64], upstream: &[f64], eps: f64) -> Result<f64> {
    let (analytic, _) = mlp.backward(input, upstream)?;
    let objective = |m: &Mlp| -> Result<f64> {
        Ok(m.forward(input)?.iter().zip(upstream).map(|(y, u)| y * u).sum())
    };
    let mut probe = mlp.clone();
    let count = mlp.param_count();
    let analytic: Vec<f64> = analytic.values().copied().collect();
    let mut worst: f64 = 0.0;
    for i in 0..count {
        let original = *mlp.params().nth(i).expect("index in range");
        *probe.params_mut().nth(i).expect("index in range") = original + eps;
        let plus = objective(&probe)?;
        *probe.params_mut().nth(i).expect("index in range") = original - eps;
        let minus = objective(&probe)?;
        *probe.params_mut().nth(i).expect("index in range") = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Serialize, Deserialize)]
struct MlpCheckpoint {
    format: String,
    version: u32,
    layers: Vec<Layer>,
}

impl From<Mlp> for MlpCheckpoint {
    fn from(m: Mlp) -> Self {
        Self {
            format: "usfa-mlp".into(),
            version: 1,
            layers: m.layers,
        }
    }
}

impl TryFrom<MlpCheckpoint> for Mlp {
    type Error = Error;

    fn try_from(c: MlpCheckpoint) -> Result<Self> {
        if c.format != "usfa-mlp" || c.version != 1 {
            return Err(Error::Unknown {
                kind: "checkpoint format",
                name: format!("{} v{}", c.format, c.version),
            });
        }
        Mlp::from_layers(c.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::seeded_rng;

    fn random_vec(n: usize, rng: &mut SeededRng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::from_layers(vec![
            Layer::zeros(3, 4, Activation::Relu),
            Layer::zeros(4, 2, Activation::Identity),
        ])
        .unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input() {
        let mut l = Layer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let m = Mlp::from_layers(vec![l]).unwrap();
        assert_eq!(m.forward(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let mut rng = seeded_rng(0);
        let m = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Identity, &mut rng);
        assert!(matches!(m.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(m.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(Mlp::from_layers(vec![
            Layer::zeros(3, 4, Activation::Relu),
            Layer::zeros(5, 2, Activation::Identity),
        ])
        .is_err());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let mut rng = seeded_rng(1);
        let m = Mlp::new(&[16, 8], Activation::Relu, Activation::Identity, &mut rng);
        assert!(m.params().all(|x| x.abs() <= 0.25));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = seeded_rng(2);
        let m = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let (g, dx) = m.backward(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert!(g.values().all(|&x| x == 0.0));
        assert!(dx.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let mut rng = seeded_rng(3);
        let m = Mlp::new(&[3, 2], Activation::Relu, Activation::Identity, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let u = [0.3, -0.7];
        let (g, _) = m.backward(&x, &u).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.layers[0].weights[o * 3 + i], u[o] * x[i]);
            }
            assert_eq!(g.layers[0].bias[o], u[o]);
        }
        let err = finite_diff_check(&m, &x, &u, 1e-5).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn rectifier_network_matches_central_differences() {
        let mut rng = seeded_rng(4);
        let m = Mlp::new(&[4, 6, 6, 3], Activation::Relu, Activation::Identity, &mut rng);
        let x = random_vec(4, &mut rng);
        let trace = m.forward_trace(&x).unwrap();
        let near_kink = trace.pre[..2].iter().flatten().any(|p| p.abs() < 1e-3);
        assert!(!near_kink, "seed chosen to avoid kinks");
        let u = random_vec(3, &mut rng);
        assert!(finite_diff_check(&m, &x, &u, 1e-5).unwrap() <= 1e-5);
    }

    #[test]
    fn finite_difference_error_shrinks_quadratically() {
        // Smooth cubic response via identity layers: f = w2 (w1 x)
        let mut rng = seeded_rng(5);
        let m = Mlp::new(&[3, 4, 2], Activation::Identity, Activation::Identity, &mut rng);
        let x = random_vec(3, &mut rng);
        let u = random_vec(2, &mut rng);
        // Bilinear in the parameters: central differences are exact up to rounding.
        let coarse = finite_diff_check(&m, &x, &u, 1e-3).unwrap();
        let fine = finite_diff_check(&m, &x, &u, 1e-5).unwrap();
        assert!(coarse < 1e-8 && fine < 1e-8, "{coarse} {fine}");
    }

    #[test]
    fn sgd_step_definition() {
        let mut rng = seeded_rng(6);
        let mut m = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        let before = m.clone();
        let mut g = Gradients::zeros_like(&m);
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { lr: 0.1 });
        opt.step(&mut [&mut m], &[&g]).unwrap();
        assert_eq!(m, before);

        for (i, v) in g.values_mut().enumerate() {
            *v = i as f64 - 2.0;
        }
        opt.step(&mut [&mut m], &[&g]).unwrap();
        for ((after, b), gv) in m.params().zip(before.params()).zip(g.values()) {
            assert!((after - (b - 0.1 * gv)).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = seeded_rng(7);
        let mut m = Mlp::new(&[2, 3, 2], Activation::Relu, Activation::Identity, &mut rng);
        let before = m.clone();
        let (g, _) = m.backward(&[1.0, 1.0], &[1.0, -1.0]).unwrap();
        for cfg in [OptimizerConfig::Sgd { lr: 0.0 }, OptimizerConfig::adam(0.0)] {
            let mut opt = Optimizer::new(cfg);
            opt.step(&mut [&mut m], &[&g]).unwrap();
            assert_eq!(m, before);
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut rng = seeded_rng(8);
        let mut m = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity, &mut rng);
        let before = m.clone();
        let mut g = Gradients::zeros_like(&m);
        g.layers[0].bias[1] = f64::NAN;
        let mut opt = Optimizer::new(OptimizerConfig::Sgd { lr: 0.1 });
        assert!(matches!(opt.step(&mut [&mut m], &[&g]), Err(Error::NonFinite(_))));
        assert_eq!(m, before);
    }

    #[test]
    fn adam_reduces_quadratic_monotonically() {
        let mut rng = seeded_rng(9);
        let mut m = Mlp::new(&[3, 2], Activation::Relu, Activation::Identity, &mut rng);
        let x = [0.4, -0.3, 0.9];
        let target = [1.5, -2.0];
        let loss = |m: &Mlp| -> f64 {
            m.forward(&x)
                .unwrap()
                .iter()
                .zip(target)
                .map(|(y, t)| 0.5 * (y - t) * (y - t))
                .sum()
        };
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.01));
        let mut previous = loss(&m);
        for _ in 0..100 {
            let y = m.forward(&x).unwrap();
            let upstream: Vec<f64> = y.iter().zip(target).map(|(y, t)| y - t).collect();
            let (g, _) = m.backward(&x, &upstream).unwrap();
            opt.step(&mut [&mut m], &[&g]).unwrap();
            let current = loss(&m);
            assert!(current < previous, "{current} >= {previous}");
            previous = current;
        }
    }

    #[test]
    fn checkpoint_roundtrip_and_version_check() {
        let mut rng = seeded_rng(10);
        let m = Mlp::new(&[3, 4, 2], Activation::Relu, Activation::Identity, &mut rng);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.starts_with(r#"{"format":"usfa-mlp","version":1"#));
        let back: Mlp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        let bumped = json.replace(r#""version":1"#, r#""version":2"#);
        assert!(serde_json::from_str::<Mlp>(&bumped).is_err());
    }
}
