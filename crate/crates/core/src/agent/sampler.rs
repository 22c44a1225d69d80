use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::mdp::{SeededRng, TaskVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SamplerKind {
    /// `z ~ Normal(w, sigma^2 I)`; `sigma` is a standard deviation.
    Gaussian { sigma: f64 },
    /// Independent of `w`: each coordinate uniform in `[low_i, high_i]`.
    Uniform { low: Vec<f64>, high: Vec<f64> },
    /// `z = w`.
    Degenerate,
}

/// Distribution of policy embeddings around a task, `D_z(. | w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySampler {
    #[serde(flatten)]
    pub kind: SamplerKind,
    #[serde(default = "default_n_z")]
    pub n_z: usize,
}

fn default_n_z() -> usize {
    1
}

impl PolicySampler {
    pub fn gaussian(sigma: f64, n_z: usize) -> Self {
        Self {
            kind: SamplerKind::Gaussian { sigma },
            n_z,
        }
    }

    pub fn uniform(low: Vec<f64>, high: Vec<f64>, n_z: usize) -> Self {
        Self {
            kind: SamplerKind::Uniform { low, high },
            n_z,
        }
    }

    pub fn degenerate() -> Self {
        Self {
            kind: SamplerKind::Degenerate,
            n_z: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_z == 0 {
            problems.push("sampler: n_z must be >= 1".to_string());
        }
        match &self.kind {
            SamplerKind::Gaussian { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                problems.push(format!("sampler: sigma must be finite and >= 0, got {sigma}"));
            }
            SamplerKind::Uniform { low, high } => {
                if low.len() != high.len() {
                    problems.push("sampler: uniform bounds differ in length".to_string());
                }
                if low.iter().zip(high).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
                    problems.push("sampler: uniform bounds need low <= high".to_string());
                }
            }
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// One draw from `D_z(. | w)`.
    pub fn sample_one(&self, w: &TaskVector, rng: &mut SeededRng) -> Result<TaskVector> {
        match &self.kind {
            SamplerKind::Degenerate => Ok(w.clone()),
            SamplerKind::Gaussian { sigma } => {
                if *sigma == 0.0 {
                    return Ok(w.clone());
                }
                let z = w
                    .as_slice()
                    .iter()
                    .map(|&m| {
                        let normal = Normal::new(m, *sigma).map_err(|e| Error::Config(vec![e.to_string()]))?;
                        Ok(normal.sample(rng))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TaskVector::new(z)
            }
            SamplerKind::Uniform { low, high } => {
                check_dim(w.dim(), low.len())?;
                let z = low
                    .iter()
                    .zip(high)
                    .map(|(&l, &h)| {
                        if l == h {
                            return Ok(l);
                        }
                        let u = Uniform::new_inclusive(l, h).map_err(|e| Error::Config(vec![e.to_string()]))?;
                        Ok(u.sample(rng))
                    })
                    .collect::<Result<Vec<_>>>()?;
                TaskVector::new(z)
            }
        }
    }

    /// `n_z` independent draws.
    pub fn sample(&self, w: &TaskVector, rng: &mut SeededRng) -> Result<Vec<TaskVector>> {
        (0..self.n_z).map(|_| self.sample_one(w, rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::seeded_rng;

    #[test]
    fn degenerate_and_zero_sigma_return_w() {
        let w = TaskVector::new(vec![0.3, -0.2]).unwrap();
        let mut rng = seeded_rng(0);
        for sampler in [PolicySampler::degenerate(), PolicySampler::gaussian(0.0, 4)] {
            assert!(sampler.sample(&w, &mut rng).unwrap().iter().all(|z| *z == w));
        }
    }

    #[test]
    fn gaussian_mean_within_three_standard_errors() {
        let w = TaskVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let sigma = 0.1;
        let n = 10_000;
        let zs = PolicySampler::gaussian(sigma, n).sample(&w, &mut seeded_rng(7)).unwrap();
        for i in 0..4 {
            let mean = zs.iter().map(|z| z.as_slice()[i]).sum::<f64>() / n as f64;
            assert!((mean - w.as_slice()[i]).abs() <= 3.0 * sigma / (n as f64).sqrt());
            let var = zs.iter().map(|z| (z.as_slice()[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var.sqrt() - sigma).abs() < 0.01);
        }
    }

    #[test]
    fn uniform_box_ignores_w() {
        let sampler = PolicySampler::uniform(vec![0.0, 0.0], vec![1.0, 1.0], 5);
        let a = sampler.sample(&TaskVector::new(vec![5.0, 5.0]).unwrap(), &mut seeded_rng(3)).unwrap();
        let b = sampler.sample(&TaskVector::new(vec![-5.0, 0.0]).unwrap(), &mut seeded_rng(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().flat_map(|z| z.as_slice()).all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn validation_and_json() {
        assert!(PolicySampler::gaussian(-1.0, 1).validate().is_err());
        assert!(PolicySampler::gaussian(0.1, 0).validate().is_err());
        assert!(PolicySampler::uniform(vec![1.0], vec![0.0], 1).validate().is_err());
        let s: PolicySampler = serde_json::from_str(r#"{"kind": "gaussian", "sigma": 0.5, "n_z": 3}"#).unwrap();
        assert_eq!(s, PolicySampler::gaussian(0.5, 3));
        let s: PolicySampler = serde_json::from_str(r#"{"kind": "degenerate"}"#).unwrap();
        assert_eq!(s, PolicySampler::degenerate());
    }
}
