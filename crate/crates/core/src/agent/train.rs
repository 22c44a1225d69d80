//! Actor/learner training loops for USFAs and UVFA baselines.
//!
//! Actors act with a read-only parameter snapshot and emit fixed-length
//! segments. The learner consumes `batch` segments at a time, in order,
//! applying one optimiser step per time step that pools the transitions of
//! every segment in the batch. With `actors = 0` everything runs on the
//! calling thread and the result is a pure function of the config.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampler::PolicySampler;
use super::td::{cut_trace, cut_trace_q, nstep_q_delta, nstep_td_delta};
use super::usfa::{SfBackend, SfUpdate, Usfa, UsfaLearner};
use super::uvfa::{QBackend, QUpdate, Uvfa, UvfaLearner};
use super::{act_gpi, act_greedy_q, TransitionSample};
use crate::error::{check_dim, Error, Result};
use crate::gpi::CandidateSet;
use crate::mdp::{derive_seed, euclidean_norm, reward, seeded_rng, Environment, Observation, SeededRng, TaskVector};

/// Training length, in environment steps or completed episodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Steps(u64),
    Episodes(u64),
}

impl Budget {
    pub fn total(&self) -> u64 {
        match *self {
            Budget::Steps(n) | Budget::Episodes(n) => n,
        }
    }

    pub fn with_total(&self, total: u64) -> Self {
        match self {
            Budget::Steps(_) => Budget::Steps(total),
            Budget::Episodes(_) => Budget::Episodes(total),
        }
    }
}

/// How actors pick their behaviour task.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskAssignment {
    /// Uniform over `M` at every redraw.
    #[default]
    Sampled,
    /// Actor `i` always pursues `M[i mod |M|]`.
    PerActor,
}

/// When the behaviour task `w` and the embeddings `z_i` are redrawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    #[default]
    PerStep,
    PerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Training tasks `M`.
    pub tasks: Vec<TaskVector>,
    pub budget: Budget,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_n_step")]
    pub n_step: usize,
    #[serde(default = "default_segment_length")]
    pub segment_length: usize,
    #[serde(default)]
    pub resample: Resample,
    #[serde(default)]
    pub assignment: TaskAssignment,
    #[serde(default = "default_true")]
    pub trace_cutting: bool,
    /// Successor-feature backend (USFA agents).
    #[serde(default)]
    pub backend: SfBackend,
    /// Value backend (UVFA agents).
    #[serde(default)]
    pub q_backend: QBackend,
    #[serde(default)]
    pub seed: u64,
    /// Number of evenly spaced snapshots handed to the snapshot hook.
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Worker threads generating experience; 0 runs single-threaded.
    #[serde(default)]
    pub actors: usize,
    /// Segments pooled into each learner step.
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_epsilon() -> f64 {
    0.1
}
fn default_n_step() -> usize {
    5
}
fn default_segment_length() -> usize {
    32
}
fn default_true() -> bool {
    true
}
fn default_snapshots() -> usize {
    20
}
fn default_batch() -> usize {
    1
}

impl TrainingConfig {
    pub fn new(tasks: Vec<TaskVector>, budget: Budget) -> Self {
        Self {
            tasks,
            budget,
            epsilon: default_epsilon(),
            n_step: default_n_step(),
            segment_length: default_segment_length(),
            resample: Resample::default(),
            assignment: TaskAssignment::default(),
            trace_cutting: true,
            backend: SfBackend::default(),
            q_backend: QBackend::default(),
            seed: 0,
            snapshots: default_snapshots(),
            actors: 0,
            batch: default_batch(),
        }
    }

    /// Every problem found, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.tasks.is_empty() {
            problems.push("training: tasks must be non-empty".to_string());
        } else if self.tasks.iter().any(|w| w.dim() != self.tasks[0].dim()) {
            problems.push("training: tasks differ in dimension".to_string());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            problems.push(format!("training: epsilon must be in [0, 1], got {}", self.epsilon));
        }
        if self.n_step == 0 {
            problems.push("training: n_step must be >= 1".to_string());
        }
        if self.segment_length == 0 {
            problems.push("training: segment_length must be >= 1".to_string());
        }
        if self.budget.total() == 0 {
            problems.push("training: budget must be > 0".to_string());
        }
        if self.batch == 0 {
            problems.push("training: batch must be >= 1".to_string());
        }
        if self.snapshots == 0 {
            problems.push("training: snapshots must be >= 1".to_string());
        }
        problems
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Budget values at which snapshots are taken.
    pub fn snapshot_points(&self) -> Vec<u64> {
        let total = self.budget.total();
        let k = self.snapshots.max(1) as u64;
        let mut points: Vec<u64> = (1..=k).map(|i| (i * total).div_ceil(k)).collect();
        points.dedup();
        points
    }
}

/// Consecutive transitions from one actor, with the behaviour task and
/// sampled embeddings in force at each step.
#[derive(Clone, Debug, Default)]
pub struct Segment {
    pub transitions: Vec<TransitionSample>,
    pub tasks: Vec<TaskVector>,
    pub policies: Vec<Vec<TaskVector>>,
    /// Undiscounted returns of episodes that finished inside the segment.
    pub episode_returns: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub episode_returns: Vec<f64>,
    /// Mean TD-error norm per segment.
    pub td_error_norms: Vec<f64>,
}

struct Actor {
    index: usize,
    env: Box<dyn Environment>,
    rng: SeededRng,
    obs: Observation,
    task: TaskVector,
    policies: Vec<TaskVector>,
    episode_return: f64,
    fresh: bool,
}

impl Actor {
    fn new(index: usize, mut env: Box<dyn Environment>, seed: u64, dim: usize) -> Self {
        let mut rng = seeded_rng(seed);
        let obs = env.reset(&mut rng);
        Self {
            index,
            env,
            rng,
            obs,
            task: TaskVector::zeros(dim),
            policies: Vec::new(),
            episode_return: 0.0,
            fresh: true,
        }
    }

    fn redraw(&mut self, config: &TrainingConfig, sampler: Option<&PolicySampler>) -> Result<()> {
        let tasks = &config.tasks;
        let i = match config.assignment {
            TaskAssignment::Sampled => self.rng.random_range(0..tasks.len()),
            TaskAssignment::PerActor => self.index % tasks.len(),
        };
        self.task = tasks[i].clone();
        self.policies = match sampler {
            Some(s) => s.sample(&self.task, &mut self.rng)?,
            None => Vec::new(),
        };
        Ok(())
    }
}

/// Runs `actor` for up to `max_len` steps, stopping early once
/// `max_episodes` episodes have finished.
fn collect_segment<F>(
    actor: &mut Actor,
    config: &TrainingConfig,
    sampler: Option<&PolicySampler>,
    max_len: usize,
    max_episodes: Option<u64>,
    mut act: F,
) -> Result<Segment>
where
    F: FnMut(&Observation, &TaskVector, &[TaskVector], &mut SeededRng) -> Result<usize>,
{
    let mut seg = Segment::default();
    while seg.transitions.len() < max_len {
        if actor.fresh || config.resample == Resample::PerStep {
            actor.redraw(config, sampler)?;
            actor.fresh = false;
        }
        let action = act(&actor.obs, &actor.task, &actor.policies, &mut actor.rng)?;
        let step = actor.env.step(action, &mut actor.rng)?;
        actor.episode_return += reward(&step.phi, &actor.task)?;
        let next = step.observation;
        let ended = step.done || step.truncated;
        seg.transitions.push(TransitionSample {
            observation: std::mem::replace(&mut actor.obs, next.clone()),
            action,
            phi: step.phi,
            next_observation: next,
            done: step.done,
            truncated: step.truncated,
        });
        seg.tasks.push(actor.task.clone());
        seg.policies.push(actor.policies.clone());
        if ended {
            seg.episode_returns.push(std::mem::take(&mut actor.episode_return));
            actor.obs = actor.env.reset(&mut actor.rng);
            actor.fresh = true;
            if max_episodes.is_some_and(|m| seg.episode_returns.len() as u64 >= m) {
                break;
            }
        }
    }
    Ok(seg)
}

/// What the generic loop needs from a learner.
trait Learner {
    type Snapshot: Clone + Send + Sync;

    fn snapshot(&self) -> Self::Snapshot;

    fn act(
        snapshot: &Self::Snapshot,
        obs: &Observation,
        w: &TaskVector,
        policies: &[TaskVector],
        epsilon: f64,
        rng: &mut SeededRng,
    ) -> Result<usize>;

    /// Learns from a batch of segments; returns the TD-error norms of every
    /// update.
    fn learn(&mut self, batch: &[Segment], config: &TrainingConfig, gamma: f64) -> Result<Vec<f64>>;
}

impl Learner for UsfaLearner {
    type Snapshot = Usfa;

    fn snapshot(&self) -> Usfa {
        self.model().clone()
    }

    fn act(
        snapshot: &Usfa,
        obs: &Observation,
        w: &TaskVector,
        policies: &[TaskVector],
        epsilon: f64,
        rng: &mut SeededRng,
    ) -> Result<usize> {
        let c = CandidateSet::new(policies.to_vec())?;
        act_gpi(snapshot, obs, w, &c, epsilon, rng)
    }

    fn learn(&mut self, batch: &[Segment], config: &TrainingConfig, gamma: f64) -> Result<Vec<f64>> {
        let mut norms = Vec::new();
        for t in 0..longest(batch) {
            let mut updates = Vec::new();
            for seg in batch.iter().filter(|s| t < s.transitions.len()) {
                let traj = &seg.transitions[t..];
                for z in &seg.policies[t] {
                    let n = if config.trace_cutting {
                        cut_trace(traj, z, self.model(), config.n_step)?
                    } else {
                        config.n_step
                    };
                    let delta = nstep_td_delta(traj, z, self.model(), n, gamma)?;
                    norms.push(euclidean_norm(&delta));
                    updates.push(SfUpdate {
                        observation: traj[0].observation.clone(),
                        action: traj[0].action,
                        z: z.clone(),
                        delta,
                    });
                }
            }
            self.apply(&updates)?;
        }
        Ok(norms)
    }
}

struct UvfaTrainer {
    learner: UvfaLearner,
    on_policy: bool,
}

impl Learner for UvfaTrainer {
    type Snapshot = Uvfa;

    fn snapshot(&self) -> Uvfa {
        self.learner.model().clone()
    }

    fn act(
        snapshot: &Uvfa,
        obs: &Observation,
        w: &TaskVector,
        _: &[TaskVector],
        epsilon: f64,
        rng: &mut SeededRng,
    ) -> Result<usize> {
        act_greedy_q(snapshot, obs, w, epsilon, rng)
    }

    fn learn(&mut self, batch: &[Segment], config: &TrainingConfig, gamma: f64) -> Result<Vec<f64>> {
        let mut norms = Vec::new();
        for t in 0..longest(batch) {
            let mut updates = Vec::new();
            for seg in batch.iter().filter(|s| t < s.transitions.len()) {
                let traj = &seg.transitions[t..];
                let targets = if self.on_policy {
                    std::slice::from_ref(&seg.tasks[t])
                } else {
                    &config.tasks[..]
                };
                for w in targets {
                    let model = self.learner.model();
                    let n = if config.trace_cutting {
                        cut_trace_q(traj, w, model, config.n_step)?
                    } else {
                        config.n_step
                    };
                    let delta = nstep_q_delta(traj, w, model, n, gamma)?;
                    norms.push(delta.abs());
                    updates.push(QUpdate {
                        observation: traj[0].observation.clone(),
                        action: traj[0].action,
                        w: w.clone(),
                        delta,
                    });
                }
            }
            self.learner.apply(&updates)?;
        }
        Ok(norms)
    }
}

fn longest(batch: &[Segment]) -> usize {
    batch.iter().map(|s| s.transitions.len()).max().unwrap_or(0)
}

/// Factory for independent environment instances, one per actor.
pub type EnvFactory<'a> = dyn Fn() -> Result<Box<dyn Environment>> + Sync + 'a;

fn record(log: &mut TrainingLog, batch: &[Segment], norms: &[f64]) {
    for seg in batch {
        log.env_steps += seg.transitions.len() as u64;
        log.episodes += seg.episode_returns.len() as u64;
        log.episode_returns.extend(&seg.episode_returns);
    }
    log.updates += longest(batch) as u64;
    if !norms.is_empty() {
        log.td_error_norms.push(norms.iter().sum::<f64>() / norms.len() as f64);
    }
}

fn progress(log: &TrainingLog, budget: Budget) -> u64 {
    match budget {
        Budget::Steps(_) => log.env_steps,
        Budget::Episodes(_) => log.episodes,
    }
}

fn run<L: Learner>(
    make_env: &EnvFactory<'_>,
    config: &TrainingConfig,
    sampler: Option<&PolicySampler>,
    learner: &mut L,
    hook: &mut dyn FnMut(u64, &L::Snapshot) -> Result<()>,
) -> Result<TrainingLog> {
    let probe = make_env()?;
    let gamma = probe.gamma();
    let dim = config.tasks[0].dim();
    drop(probe);
    let points = config.snapshot_points();
    let mut log = TrainingLog::default();
    let mut next_point = 0;

    if config.actors == 0 {
        let mut actors = (0..config.batch)
            .map(|i| Ok(Actor::new(i, make_env()?, derive_seed(config.seed, 1 + i as u64), dim)))
            .collect::<Result<Vec<_>>>()?;
        while next_point < points.len() {
            let mut remaining = points[next_point] - progress(&log, config.budget);
            let snapshot = learner.snapshot();
            let mut batch = Vec::with_capacity(actors.len());
            for actor in &mut actors {
                if remaining == 0 {
                    break;
                }
                let (max_len, max_episodes) = match config.budget {
                    Budget::Steps(_) => (config.segment_length.min(remaining as usize), None),
                    Budget::Episodes(_) => (config.segment_length, Some(remaining)),
                };
                let seg = collect_segment(actor, config, sampler, max_len, max_episodes, |o, w, zs, rng| {
                    L::act(&snapshot, o, w, zs, config.epsilon, rng)
                })?;
                remaining -= match config.budget {
                    Budget::Steps(_) => seg.transitions.len() as u64,
                    Budget::Episodes(_) => seg.episode_returns.len() as u64,
                };
                batch.push(seg);
            }
            let norms = learner.learn(&batch, config, gamma)?;
            record(&mut log, &batch, &norms);
            while next_point < points.len() && progress(&log, config.budget) >= points[next_point] {
                hook(points[next_point], &learner.snapshot())?;
                next_point += 1;
            }
        }
        return Ok(log);
    }

    let published = RwLock::new(Arc::new(learner.snapshot()));
    let stop = AtomicBool::new(false);
    let (tx, rx) = std::sync::mpsc::sync_channel::<Result<Segment>>(config.actors);
    std::thread::scope(|scope| -> Result<TrainingLog> {
        for i in 0..config.actors {
            let tx = tx.clone();
            let published = &published;
            let stop = &stop;
            scope.spawn(move || {
                let env = match make_env() {
                    Ok(env) => env,
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        return;
                    }
                };
                let mut actor = Actor::new(i, env, derive_seed(config.seed, 1 + i as u64), dim);
                while !stop.load(Ordering::Relaxed) {
                    let snapshot = Arc::clone(&published.read().expect("snapshot lock"));
                    let seg = collect_segment(&mut actor, config, sampler, config.segment_length, None, |o, w, zs, rng| {
                        L::act(&snapshot, o, w, zs, config.epsilon, rng)
                    });
                    let failed = seg.is_err();
                    if tx.send(seg).is_err() || failed {
                        return;
                    }
                }
            });
        }
        drop(tx);
        let outcome = (|| {
            while next_point < points.len() {
                let mut batch = Vec::with_capacity(config.batch);
                for _ in 0..config.batch {
                    batch.push(rx.recv().map_err(|_| Error::Config(vec!["all actors stopped".into()]))??);
                }
                let norms = learner.learn(&batch, config, gamma)?;
                record(&mut log, &batch, &norms);
                *published.write().expect("snapshot lock") = Arc::new(learner.snapshot());
                while next_point < points.len() && progress(&log, config.budget) >= points[next_point] {
                    hook(points[next_point], &learner.snapshot())?;
                    next_point += 1;
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::Relaxed);
        drop(rx);
        outcome.map(|()| std::mem::take(&mut log))
    })
}

fn check_env(make_env: &EnvFactory<'_>, config: &TrainingConfig) -> Result<(usize, usize, usize)> {
    config.validate()?;
    let env = make_env()?;
    check_dim(env.feature_dim(), config.tasks[0].dim())?;
    Ok((env.observation_dim(), env.n_actions(), env.feature_dim()))
}

/// Learns a USFA on the tasks in `config` with embeddings drawn from
/// `sampler`, calling `hook` at each snapshot point.
pub fn train_usfa(
    make_env: &EnvFactory<'_>,
    config: &TrainingConfig,
    sampler: &PolicySampler,
    hook: &mut dyn FnMut(u64, &Usfa) -> Result<()>,
) -> Result<(Usfa, TrainingLog)> {
    sampler.validate()?;
    let (obs_dim, n_actions, dim) = check_env(make_env, config)?;
    let mut init = seeded_rng(derive_seed(config.seed, 0));
    let mut learner = UsfaLearner::new(&config.backend, obs_dim, n_actions, dim, &mut init)?;
    let log = run(make_env, config, Some(sampler), &mut learner, hook)?;
    Ok((learner.into_model(), log))
}

/// Learns a UVFA. The on-policy variant updates only the behaviour task;
/// the off-policy one updates every task in `M` from the same transitions.
pub fn train_uvfa(
    make_env: &EnvFactory<'_>,
    config: &TrainingConfig,
    on_policy: bool,
    hook: &mut dyn FnMut(u64, &Uvfa) -> Result<()>,
) -> Result<(Uvfa, TrainingLog)> {
    let (obs_dim, n_actions, dim) = check_env(make_env, config)?;
    let mut init = seeded_rng(derive_seed(config.seed, 0));
    let mut trainer = UvfaTrainer {
        learner: UvfaLearner::new(&config.q_backend, obs_dim, n_actions, dim, &mut init)?,
        on_policy,
    };
    let log = run(make_env, config, None, &mut trainer, hook)?;
    Ok((trainer.learner.into_model(), log))
}
