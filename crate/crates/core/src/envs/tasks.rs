use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TaskVector;

const GRID_HARD: &str = include_str!("../../tasks/grid_hard.json");
const GRID_EASY: &str = include_str!("../../tasks/grid_easy.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskSetSpec {
    /// `[cos(pi k / 2K), sin(pi k / 2K)]` for `k = 0..=K`.
    #[serde(rename = "directions-2d")]
    Directions2d { k: usize },
    /// The unit vectors of `R^dim`.
    CanonicalBasis { dim: usize },
    /// Regular `(n+1) x (n+1)` lattice over `[0, 1]^2`, row-major in `w2`.
    #[serde(rename = "grid-2d")]
    Grid2d { n: usize },
    Explicit { tasks: Vec<TaskVector> },
    /// A task-set file: a JSON array of arrays of reals.
    File { path: PathBuf },
    /// A bundled task set: `grid-hard` or `grid-easy`.
    Named { name: String },
}

pub fn generate_tasks(spec: &TaskSetSpec) -> Result<Vec<TaskVector>> {
    match spec {
        TaskSetSpec::Directions2d { k } => {
            if *k == 0 {
                return Err(Error::Config(vec!["directions-2d needs k >= 1".into()]));
            }
            Ok((0..=*k)
                .map(|i| {
                    let w = if i == 0 {
                        vec![1.0, 0.0]
                    } else if i == *k {
                        vec![0.0, 1.0]
                    } else {
                        let t = FRAC_PI_2 * i as f64 / *k as f64;
                        vec![t.cos(), t.sin()]
                    };
                    TaskVector::new(w).expect("finite")
                })
                .collect())
        }
        TaskSetSpec::CanonicalBasis { dim } => Ok((0..*dim)
            .map(|i| {
                let mut w = vec![0.0; *dim];
                w[i] = 1.0;
                TaskVector::new(w).expect("finite")
            })
            .collect()),
        TaskSetSpec::Grid2d { n } => {
            let n = (*n).max(1);
            Ok((0..=n)
                .flat_map(|j| (0..=n).map(move |i| (i, j)))
                .map(|(i, j)| TaskVector::new(vec![i as f64 / n as f64, j as f64 / n as f64]).expect("finite"))
                .collect())
        }
        TaskSetSpec::Explicit { tasks } => Ok(tasks.clone()),
        TaskSetSpec::File { path } => load_tasks(&std::fs::read_to_string(path)?),
        TaskSetSpec::Named { name } => match name.as_str() {
            "grid-hard" => load_tasks(GRID_HARD),
            "grid-easy" => load_tasks(GRID_EASY),
            _ => Err(Error::Unknown {
                kind: "task set",
                name: name.clone(),
            }),
        },
    }
}

/// Parses a JSON array of task vectors.
pub fn load_tasks(json: &str) -> Result<Vec<TaskVector>> {
    Ok(serde_json::from_str(json)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions() {
        let tasks = generate_tasks(&TaskSetSpec::Directions2d { k: 50 }).unwrap();
        assert_eq!(tasks.len(), 51);
        assert_eq!(tasks[0].as_slice(), &[1.0, 0.0]);
        assert_eq!(tasks[50].as_slice(), &[0.0, 1.0]);
        for (i, w) in tasks.iter().enumerate() {
            assert!((w.norm() - 1.0).abs() < 1e-15);
            let mirror = &tasks[50 - i];
            assert!((w.as_slice()[0] - mirror.as_slice()[1]).abs() < 1e-15);
            assert!((w.as_slice()[1] - mirror.as_slice()[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn canonical_basis() {
        let tasks = generate_tasks(&TaskSetSpec::CanonicalBasis { dim: 4 }).unwrap();
        let flat: Vec<Vec<f64>> = tasks.into_iter().map(Vec::from).collect();
        assert_eq!(
            flat,
            vec![
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0, 0.0],
                vec![0.0, 0.0, 1.0, 0.0],
                vec![0.0, 0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn bundled_sets() {
        let hard = generate_tasks(&TaskSetSpec::Named { name: "grid-hard".into() }).unwrap();
        assert_eq!(hard.len(), 8);
        assert!(hard.iter().all(|w| w.dim() == 4));
        assert!(hard.contains(&TaskVector::new(vec![-1.0, 1.0, 0.0, 1.0]).unwrap()));
        let easy = generate_tasks(&TaskSetSpec::Named { name: "grid-easy".into() }).unwrap();
        assert!(easy.contains(&TaskVector::new(vec![0.0, 0.9, 0.0, 0.1]).unwrap()));
        assert!(generate_tasks(&TaskSetSpec::Named { name: "nope".into() }).is_err());
    }

    #[test]
    fn lattice_and_spec_json() {
        let tasks = generate_tasks(&TaskSetSpec::Grid2d { n: 2 }).unwrap();
        assert_eq!(tasks.len(), 9);
        assert_eq!(tasks[5].as_slice(), &[1.0, 0.5]);
        let spec: TaskSetSpec = serde_json::from_str(r#"{"kind": "directions-2d", "k": 4}"#).unwrap();
        assert_eq!(spec, TaskSetSpec::Directions2d { k: 4 });
    }
}
