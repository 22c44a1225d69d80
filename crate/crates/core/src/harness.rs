//! Experiment specs, evaluation under candidate-set regimes, optimality gaps
//! and the files written for each run.
//!
//! A run directory holds:
//!
//! - `learning_curve.csv` with columns
//!   `step,seed,task,regime,mean_return,std_return,n_episodes`
//! - `summary.json` with the resolved spec, its SHA-256 hash and aggregates
//! - `checkpoints/seed-<n>.json` and `checkpoints/seed-<n>.meta.json`
//! - `FAILED` if the run stopped with an error

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{
    act_gpi, act_greedy_q, train_usfa, train_uvfa, PolicySampler, SamplerKind, TrainingConfig,
    TrainingLog, Usfa, Uvfa,
};
use crate::envs::{generate_tasks, random_tabular_mdp, EnvConfig, RandomMdpSpec, TaskSetSpec};
use crate::error::{Error, Result};
use crate::exact::{
    evaluate_policy_scalar, optimal_policy, optimal_return, policy_evaluation_sf, q_from_sf, value_iteration,
    DEFAULT_TOL,
};
use crate::gpi::{
    gpi_bound, gpi_dominance_check, gpi_optimality_gap, BoundForm, CandidateSet, ExactSfOracle,
};
use crate::mdp::{derive_seed, reward, seeded_rng, SeededRng, TaskVector};

pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const SUMMARY: &str = "summary.json";
pub const FAILURE_MARKER: &str = "FAILED";

/// Evaluation episodes longer than this are cut.
pub const EVAL_STEP_LIMIT: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Usfa,
    UvfaOn,
    UvfaOff,
    ExactSfGpi,
}

/// How the GPI candidate set is built for a test task `w'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regime {
    /// `{w'}`
    Singleton,
    /// `M`
    TrainingSet,
    /// `M ∪ {w'}`
    Union,
    /// `k` fresh draws from `sampler` around `w'`, redrawn every episode.
    RandomK { k: usize, sampler: SamplerKind },
}

impl Regime {
    pub fn label(&self) -> String {
        match self {
            Regime::Singleton => "singleton".into(),
            Regime::TrainingSet => "training-set".into(),
            Regime::Union => "union".into(),
            Regime::RandomK { k, .. } => format!("random-{k}"),
        }
    }

    pub fn candidates(&self, w_prime: &TaskVector, training: &[TaskVector], rng: &mut SeededRng) -> Result<CandidateSet> {
        match self {
            Regime::Singleton => Ok(CandidateSet::singleton(w_prime.clone())),
            Regime::TrainingSet => CandidateSet::new(training.to_vec()),
            Regime::Union => Ok(CandidateSet::new(training.to_vec())?.with(w_prime.clone())),
            Regime::RandomK { k, sampler } => {
                let sampler = PolicySampler {
                    kind: sampler.clone(),
                    n_z: *k,
                };
                CandidateSet::new(sampler.sample(w_prime, rng)?)
            }
        }
    }
}

/// Regime label used for UVFA agents, which act greedily on `Q(s, ., w')`.
pub const UVFA_REGIME: &str = "uvfa";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub tasks: TaskSetSpec,
    #[serde(default)]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_eval_epsilon")]
    pub epsilon: f64,
}

fn default_episodes() -> usize {
    20
}

fn default_eval_epsilon() -> f64 {
    0.001
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub env: EnvConfig,
    pub agent: AgentKind,
    pub training: TrainingConfig,
    #[serde(default = "PolicySampler::degenerate")]
    pub sampler: PolicySampler,
    pub eval: EvalSpec,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/out")
}

impl ExperimentSpec {
    /// Reads a spec, or the spec embedded in a previous run's `summary.json`.
    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let spec = match value.get("spec") {
            Some(inner) if value.get("config_hash").is_some() => inner.clone(),
            _ => value,
        };
        Ok(serde_json::from_value(spec)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Every configuration problem, checked before any work starts.
    pub fn validate(&self) -> Result<Vec<TaskVector>> {
        let mut problems = Vec::new();
        if self.seeds.is_empty() {
            problems.push("spec: at least one seed is required".to_string());
        }
        if self.agent != AgentKind::ExactSfGpi {
            problems.extend(self.training.problems());
        } else if self.training.tasks.is_empty() {
            problems.push("training: tasks must be non-empty".to_string());
        }
        if let Err(Error::Config(p)) = self.sampler.validate() {
            problems.extend(p);
        }
        let uses_gpi = matches!(self.agent, AgentKind::Usfa | AgentKind::ExactSfGpi);
        if uses_gpi && self.eval.regimes.is_empty() {
            problems.push("eval: regimes must be non-empty for this agent".to_string());
        }
        for r in &self.eval.regimes {
            if let Regime::RandomK { k, sampler } = r {
                let s = PolicySampler {
                    kind: sampler.clone(),
                    n_z: *k,
                };
                if let Err(Error::Config(p)) = s.validate() {
                    problems.extend(p.into_iter().map(|m| format!("eval regime {}: {m}", r.label())));
                }
            }
        }
        if self.eval.episodes == 0 {
            problems.push("eval: episodes must be >= 1".to_string());
        }
        if !(0.0..=1.0).contains(&self.eval.epsilon) {
            problems.push("eval: epsilon must be in [0, 1]".to_string());
        }
        if let EnvConfig::GridCollect(c) = &self.env {
            if let Err(Error::Config(p)) = c.validate() {
                problems.extend(p);
            }
        }
        let tabular = self.env.tabular();
        if let Err(e) = &tabular {
            problems.push(format!("env: {e}"));
        }
        if self.agent == AgentKind::ExactSfGpi && matches!(tabular, Ok(None)) {
            problems.push(format!("agent exact-sf-gpi needs a tabular environment, got {}", self.env.name()));
        }
        let tasks = match generate_tasks(&self.eval.tasks) {
            Ok(t) if t.is_empty() => {
                problems.push("eval: task set is empty".to_string());
                Vec::new()
            }
            Ok(t) => t,
            Err(e) => {
                problems.push(format!("eval: {e}"));
                Vec::new()
            }
        };
        if let Ok(env) = self.env.build() {
            let d = env.feature_dim();
            if tasks.iter().chain(&self.training.tasks).any(|w| w.dim() != d) {
                problems.push(format!("tasks must have the environment's feature dimension {d}"));
            }
        }
        if problems.is_empty() {
            Ok(tasks)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// SHA-256 of the canonical JSON of the resolved spec.
    pub fn config_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }

    pub fn regime_labels(&self) -> Vec<String> {
        match self.agent {
            AgentKind::UvfaOn | AgentKind::UvfaOff => vec![UVFA_REGIME.to_string()],
            _ => self.eval.regimes.iter().map(Regime::label).collect(),
        }
    }
}

/// Policy to evaluate.
#[derive(Clone, Debug)]
pub enum AgentModel {
    Usfa(Usfa),
    Uvfa(Uvfa),
    Exact(Arc<ExactSfOracle>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: u64,
    pub seed: u64,
    pub task: TaskVector,
    pub regime: String,
    pub mean_return: f64,
    pub std_return: f64,
    pub n_episodes: usize,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    step: u64,
    seed: u64,
    task: String,
    regime: String,
    mean_return: f64,
    std_return: f64,
    n_episodes: usize,
}

/// Shared settings for one call to [`evaluate`].
pub struct EvalContext<'a> {
    pub env: &'a EnvConfig,
    pub training_tasks: &'a [TaskVector],
    pub episodes: usize,
    pub epsilon: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Undiscounted return of one epsilon-greedy episode on `w_prime`.
fn run_episode(
    agent: &AgentModel,
    ctx: &EvalContext<'_>,
    w_prime: &TaskVector,
    regime: Option<&Regime>,
    rng: &mut SeededRng,
) -> Result<f64> {
    let mut env = ctx.env.build()?;
    let c = match regime {
        Some(r) => Some(r.candidates(w_prime, ctx.training_tasks, rng)?),
        None => None,
    };
    let mut obs = env.reset(rng);
    let mut total = 0.0;
    for _ in 0..EVAL_STEP_LIMIT {
        let action = match (agent, &c) {
            (AgentModel::Usfa(m), Some(c)) => act_gpi(m, &obs, w_prime, c, ctx.epsilon, rng)?,
            (AgentModel::Exact(o), Some(c)) => act_gpi(o.as_ref(), &obs, w_prime, c, ctx.epsilon, rng)?,
            (AgentModel::Uvfa(m), _) => act_greedy_q(m, &obs, w_prime, ctx.epsilon, rng)?,
            _ => return Err(Error::EmptyCandidateSet),
        };
        let step = env.step(action, rng)?;
        total += reward(&step.phi, w_prime)?;
        if step.done || step.truncated {
            break;
        }
        obs = step.observation;
    }
    Ok(total)
}

/// Evaluates `agent` on every `(task, regime)` pair. Each pair gets its own
/// random stream derived from `(seed, step, task index, regime index)`.
/// UVFA agents ignore `regimes` and produce one record per task.
pub fn evaluate(
    agent: &AgentModel,
    ctx: &EvalContext<'_>,
    tasks: &[TaskVector],
    regimes: &[Regime],
    seed: u64,
    step: u64,
) -> Result<Vec<EvalRecord>> {
    if tasks.is_empty() {
        return Err(Error::Config(vec!["evaluation needs at least one task".into()]));
    }
    if ctx.episodes == 0 {
        return Err(Error::Config(vec!["evaluation needs at least one episode".into()]));
    }
    let plan: Vec<(usize, Option<&Regime>, String)> = match agent {
        AgentModel::Uvfa(_) => vec![(0, None, UVFA_REGIME.to_string())],
        _ => {
            if regimes.is_empty() {
                return Err(Error::EmptyCandidateSet);
            }
            regimes.iter().enumerate().map(|(i, r)| (i, Some(r), r.label())).collect()
        }
    };
    let per_task: Vec<Vec<EvalRecord>> = tasks
        .par_iter()
        .enumerate()
        .map(|(ti, w)| {
            plan.iter()
                .map(|(ri, regime, label)| {
                    let stream = derive_seed(derive_seed(derive_seed(seed, step), ti as u64), *ri as u64);
                    let mut rng = seeded_rng(stream);
                    let returns = (0..ctx.episodes)
                        .map(|_| run_episode(agent, ctx, w, *regime, &mut rng))
                        .collect::<Result<Vec<_>>>()?;
                    let (mean_return, std_return) = mean_std(&returns);
                    Ok(EvalRecord {
                        step,
                        seed,
                        task: w.clone(),
                        regime: label.clone(),
                        mean_return,
                        std_return,
                        n_episodes: ctx.episodes,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub step: u64,
    pub seed: u64,
    pub task: TaskVector,
    pub regime: String,
    pub optimal_return: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAggregate {
    pub step: u64,
    pub regime: String,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    /// Per `(step, regime)`, over tasks and seeds.
    pub aggregates: Vec<GapAggregate>,
}

impl GapReport {
    pub fn aggregate(&self, step: u64, regime: &str) -> Option<&GapAggregate> {
        self.aggregates.iter().find(|a| a.step == step && a.regime == regime)
    }

    pub fn final_step(&self) -> Option<u64> {
        self.aggregates.iter().map(|a| a.step).max()
    }
}

/// `gap = optimal return - mean return` per record, with mean and max per
/// `(step, regime)`. Needs an undiscounted tabular environment so that the
/// oracle measures the same quantity as the evaluation.
pub fn optimality_gap_report(env: &EnvConfig, records: &[EvalRecord]) -> Result<GapReport> {
    let (mdp, start) = env
        .tabular()?
        .ok_or_else(|| Error::MissingOracle(env.name().to_string()))?;
    if mdp.gamma() != 1.0 {
        return Err(Error::MissingOracle(format!(
            "{} (discounted; evaluation returns are undiscounted)",
            env.name()
        )));
    }
    let mut optimal: Vec<(TaskVector, f64)> = Vec::new();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let opt = match optimal.iter().find(|(w, _)| *w == r.task) {
            Some((_, v)) => *v,
            None => {
                let v = optimal_return(&mdp, &r.task, start)?;
                optimal.push((r.task.clone(), v));
                v
            }
        };
        rows.push(GapRow {
            step: r.step,
            seed: r.seed,
            task: r.task.clone(),
            regime: r.regime.clone(),
            optimal_return: opt,
            gap: opt - r.mean_return,
        });
    }
    let mut keys: Vec<(u64, String)> = rows.iter().map(|r| (r.step, r.regime.clone())).collect();
    keys.sort();
    keys.dedup();
    let aggregates = keys
        .into_iter()
        .map(|(step, regime)| {
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.step == step && r.regime == regime)
                .map(|r| r.gap)
                .collect();
            GapAggregate {
                step,
                regime,
                mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
                max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                n: gaps.len(),
            }
        })
        .collect();
    Ok(GapReport { rows, aggregates })
}

pub fn write_learning_curve(path: &Path, records: &[EvalRecord]) -> Result<()> {
    write_records(fs::File::create(path)?, records)
}

/// Learning-curve CSV rows, header included.
pub fn write_records<W: std::io::Write>(writer: W, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(CsvRow {
            step: r.step,
            seed: r.seed,
            task: r.task.to_string(),
            regime: r.regime.clone(),
            mean_return: r.mean_return,
            std_return: r.std_return,
            n_episodes: r.n_episodes,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_learning_curve(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let expected = ["step", "seed", "task", "regime", "mean_return", "std_return", "n_episodes"];
    let headers = reader.headers()?.clone();
    if headers.iter().ne(expected) {
        return Err(Error::Config(vec![format!("unexpected learning curve columns: {headers:?}")]));
    }
    reader
        .deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            let task = row
                .task
                .split(';')
                .map(|x| {
                    x.parse::<f64>()
                        .map_err(|e| Error::Config(vec![format!("bad task {:?}: {e}", row.task)]))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalRecord {
                step: row.step,
                seed: row.seed,
                task: TaskVector::new(task)?,
                regime: row.regime,
                mean_return: row.mean_return,
                std_return: row.std_return,
                n_episodes: row.n_episodes,
            })
        })
        .collect()
}

/// A saved agent, tagged with its kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "agent", rename_all = "kebab-case")]
pub enum Checkpoint {
    Usfa { model: Usfa },
    Uvfa { model: Uvfa },
}

impl Checkpoint {
    pub fn into_agent(self) -> AgentModel {
        match self {
            Checkpoint::Usfa { model } => AgentModel::Usfa(model),
            Checkpoint::Uvfa { model } => AgentModel::Uvfa(model),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Serialize)]
struct CheckpointMeta<'a> {
    format: &'static str,
    version: u32,
    seed: u64,
    config_hash: &'a str,
    training: &'a TrainingConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub regime: String,
    pub step: u64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub spec: ExperimentSpec,
    pub config_hash: String,
    pub n_records: usize,
    pub seeds: Vec<SeedSummary>,
    /// Mean return per regime at the last snapshot, over tasks and seeds.
    pub final_returns: Vec<RegimeSummary>,
    pub gaps: Option<Vec<GapAggregate>>,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<EvalRecord>,
    pub summary: RunSummary,
    pub gaps: Option<GapReport>,
    pub models: Vec<(u64, AgentModel)>,
}

struct SeedResult {
    records: Vec<EvalRecord>,
    log: TrainingLog,
    model: AgentModel,
}

fn run_seed(spec: &ExperimentSpec, tasks: &[TaskVector], seed: u64) -> Result<SeedResult> {
    let mut training = spec.training.clone();
    training.seed = seed;
    let ctx = EvalContext {
        env: &spec.env,
        training_tasks: &training.tasks,
        episodes: spec.eval.episodes,
        epsilon: spec.eval.epsilon,
    };
    let make_env = || spec.env.build();
    let mut records = Vec::new();
    let (log, model) = match spec.agent {
        AgentKind::ExactSfGpi => {
            let (mdp, _) = spec.env.tabular()?.ok_or_else(|| Error::MissingOracle(spec.env.name().into()))?;
            let model = AgentModel::Exact(Arc::new(ExactSfOracle::new(mdp)));
            records.extend(evaluate(&model, &ctx, tasks, &spec.eval.regimes, seed, 0)?);
            (TrainingLog::default(), model)
        }
        AgentKind::Usfa => {
            let mut hook = |step: u64, m: &Usfa| -> Result<()> {
                let agent = AgentModel::Usfa(m.clone());
                records.extend(evaluate(&agent, &ctx, tasks, &spec.eval.regimes, seed, step)?);
                Ok(())
            };
            let (model, log) = train_usfa(&make_env, &training, &spec.sampler, &mut hook)?;
            (log, AgentModel::Usfa(model))
        }
        AgentKind::UvfaOn | AgentKind::UvfaOff => {
            let on_policy = spec.agent == AgentKind::UvfaOn;
            let mut hook = |step: u64, m: &Uvfa| -> Result<()> {
                let agent = AgentModel::Uvfa(m.clone());
                records.extend(evaluate(&agent, &ctx, tasks, &[], seed, step)?);
                Ok(())
            };
            let (model, log) = train_uvfa(&make_env, &training, on_policy, &mut hook)?;
            (log, AgentModel::Uvfa(model))
        }
    };
    Ok(SeedResult { records, log, model })
}

fn final_returns(records: &[EvalRecord], labels: &[String]) -> Vec<RegimeSummary> {
    let Some(step) = records.iter().map(|r| r.step).max() else {
        return Vec::new();
    };
    labels
        .iter()
        .filter_map(|label| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.step == step && &r.regime == label)
                .map(|r| r.mean_return)
                .collect();
            (!xs.is_empty()).then(|| RegimeSummary {
                regime: label.clone(),
                step,
                mean_return: xs.iter().sum::<f64>() / xs.len() as f64,
            })
        })
        .collect()
}

/// Trains and evaluates every seed without touching the filesystem.
pub fn run_in_memory(spec: &ExperimentSpec) -> Result<RunOutput> {
    let tasks = spec.validate()?;
    let config_hash = spec.config_hash()?;
    let results: Vec<(u64, SeedResult)> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, &tasks, seed).map(|r| (seed, r)))
        .collect::<Result<_>>()?;
    let labels = spec.regime_labels();
    let task_index = |w: &TaskVector| tasks.iter().position(|t| t == w).unwrap_or(usize::MAX);
    let regime_index = |r: &str| labels.iter().position(|l| l == r).unwrap_or(usize::MAX);
    let mut records: Vec<EvalRecord> = results.iter().flat_map(|(_, r)| r.records.clone()).collect();
    records.sort_by_key(|r| (r.step, r.seed, task_index(&r.task), regime_index(&r.regime)));
    let gaps = match optimality_gap_report(&spec.env, &records) {
        Ok(g) => Some(g),
        Err(Error::MissingOracle(_)) => None,
        Err(e) => return Err(e),
    };
    let summary = RunSummary {
        spec: spec.clone(),
        config_hash,
        n_records: records.len(),
        seeds: results
            .iter()
            .map(|(seed, r)| SeedSummary {
                seed: *seed,
                env_steps: r.log.env_steps,
                episodes: r.log.episodes,
                updates: r.log.updates,
            })
            .collect(),
        final_returns: final_returns(&records, &labels),
        gaps: gaps.as_ref().map(|g| g.aggregates.clone()),
    };
    Ok(RunOutput {
        records,
        summary,
        gaps,
        models: results.into_iter().map(|(seed, r)| (seed, r.model)).collect(),
    })
}

fn write_outputs(spec: &ExperimentSpec, out: &RunOutput) -> Result<()> {
    let dir = &spec.out_dir;
    write_learning_curve(&dir.join(LEARNING_CURVE), &out.records)?;
    fs::write(dir.join(SUMMARY), serde_json::to_string_pretty(&out.summary)? + "\n")?;
    let ckpt_dir = dir.join("checkpoints");
    for (seed, model) in &out.models {
        let checkpoint = match model {
            AgentModel::Usfa(m) => Checkpoint::Usfa { model: m.clone() },
            AgentModel::Uvfa(m) => Checkpoint::Uvfa { model: m.clone() },
            AgentModel::Exact(_) => continue,
        };
        fs::create_dir_all(&ckpt_dir)?;
        fs::write(ckpt_dir.join(format!("seed-{seed}.json")), serde_json::to_string(&checkpoint)?)?;
        let mut training = spec.training.clone();
        training.seed = *seed;
        let meta = CheckpointMeta {
            format: "usfa-checkpoint",
            version: 1,
            seed: *seed,
            config_hash: &out.summary.config_hash,
            training: &training,
        };
        fs::write(
            ckpt_dir.join(format!("seed-{seed}.meta.json")),
            serde_json::to_string_pretty(&meta)? + "\n",
        )?;
    }
    Ok(())
}

/// Validates, trains every seed, evaluates every snapshot and writes the
/// run directory. On failure after validation a `FAILED` marker holding the
/// error is left next to any partial output.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let marker = spec.out_dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let result = run_in_memory(spec).and_then(|out| write_outputs(spec, &out).map(|()| out));
    if let Err(e) = &result {
        fs::write(&marker, format!("{e}\n"))?;
    }
    result
}

/// Results of the randomised GPI checks on exact successor features.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub instances: usize,
    pub sources_per_instance: usize,
    /// `(s, a)` pairs where `Q^GPI < Q^{pi_i} - tol` for some source policy.
    pub dominance_violations: usize,
    pub max_dominance_violation: f64,
    /// Instances where `‖Q* - Q^GPI‖∞` exceeds the bound (with exact features).
    pub bound_violations: usize,
    pub max_gap: f64,
    pub max_bound: f64,
    /// Largest `gap / bound` over instances with a positive bound.
    pub max_gap_to_bound: f64,
    /// Largest difference between the two policy-evaluation routes.
    pub max_equivalence_error: f64,
}

impl BoundCheckReport {
    pub fn passed(&self) -> bool {
        self.dominance_violations == 0 && self.bound_violations == 0 && self.max_equivalence_error <= 1e-8
    }
}

/// Draws `instances` random MDPs with three random source tasks and a test
/// task each, and checks GPI dominance, the performance bound with exact
/// features, and agreement between vector and scalar policy evaluation.
pub fn bound_check(instances: usize, seed: u64) -> Result<BoundCheckReport> {
    const SOURCES: usize = 3;
    let shape = RandomMdpSpec::default();
    let mut report = BoundCheckReport {
        instances,
        sources_per_instance: SOURCES,
        ..Default::default()
    };
    for i in 0..instances {
        let mut rng = seeded_rng(derive_seed(seed, i as u64));
        let mdp = random_tabular_mdp(&mut rng, &shape);
        let d = mdp.feature_dim();
        let draw = |rng: &mut SeededRng| -> Result<TaskVector> {
            use rand::Rng;
            TaskVector::new((0..d).map(|_| rng.random_range(-1.0..=1.0)).collect())
        };
        let sources = (0..SOURCES).map(|_| draw(&mut rng)).collect::<Result<Vec<_>>>()?;
        let w_prime = draw(&mut rng)?;
        let mut tables = Vec::with_capacity(SOURCES);
        for z in &sources {
            let policy = optimal_policy(&mdp, z)?;
            let table = policy_evaluation_sf(&mdp, &policy)?;
            let via_sf = q_from_sf(&table, &w_prime)?;
            let direct = evaluate_policy_scalar(&mdp, &policy, &w_prime)?;
            report.max_equivalence_error = report.max_equivalence_error.max(via_sf.sup_distance(&direct));
            tables.push(table);
        }
        let dominance = gpi_dominance_check(&mdp, &w_prime, &tables)?;
        report.dominance_violations += dominance.violations;
        report.max_dominance_violation = report.max_dominance_violation.max(dominance.max_violation);
        let gap = gpi_optimality_gap(&mdp, &w_prime, &tables)?;
        let c = CandidateSet::new(sources)?;
        let bound = gpi_bound(&w_prime, &c, mdp.phi_sup(), mdp.gamma(), &[0.0; SOURCES], BoundForm::AsTypeset)?;
        if gap > bound + 1e-9 {
            report.bound_violations += 1;
        }
        report.max_gap = report.max_gap.max(gap);
        report.max_bound = report.max_bound.max(bound);
        if bound > 0.0 {
            report.max_gap_to_bound = report.max_gap_to_bound.max(gap / bound);
        }
    }
    Ok(report)
}

/// Exact quantities for one task on a tabular environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub env: String,
    pub task: TaskVector,
    pub gamma: f64,
    pub start_state: usize,
    pub optimal_return: f64,
    /// `q_star[s]` over the actions available at `s`.
    pub q_star: Vec<Vec<f64>>,
    pub greedy_policy: Vec<usize>,
    /// Successor features of the greedy policy, `psi[s][a]`.
    pub successor_features: Vec<Vec<Vec<f64>>>,
}

pub fn oracle_report(env: &EnvConfig, w: &TaskVector) -> Result<OracleReport> {
    let (mdp, start) = env.tabular()?.ok_or_else(|| Error::MissingOracle(env.name().into()))?;
    let q = value_iteration(&mdp, w, DEFAULT_TOL)?;
    let policy = q.greedy_policy(&mdp);
    let psi = policy_evaluation_sf(&mdp, &policy)?;
    Ok(OracleReport {
        env: env.name().into(),
        task: w.clone(),
        gamma: mdp.gamma(),
        start_state: start,
        optimal_return: optimal_return(&mdp, w, start)?,
        q_star: (0..mdp.n_states()).map(|s| q.row(s).to_vec()).collect(),
        greedy_policy: policy.actions().to_vec(),
        successor_features: (0..mdp.n_states())
            .map(|s| (0..mdp.n_available(s)).map(|a| psi.get(s, a).to_vec()).collect())
            .collect(),
    })
}

/// Evaluates a saved agent on the tasks and regimes of `spec`.
pub fn evaluate_checkpoint(spec: &ExperimentSpec, checkpoint: Checkpoint, seed: u64) -> Result<Vec<EvalRecord>> {
    let tasks = generate_tasks(&spec.eval.tasks)?;
    let ctx = EvalContext {
        env: &spec.env,
        training_tasks: &spec.training.tasks,
        episodes: spec.eval.episodes,
        epsilon: spec.eval.epsilon,
    };
    evaluate(&checkpoint.into_agent(), &ctx, &tasks, &spec.eval.regimes, seed, 0)
}
