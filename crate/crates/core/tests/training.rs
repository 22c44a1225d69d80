use statrs::distribution::{ChiSquared, ContinuousCDF};
use usfa_core::agent::*;
use usfa_core::envs::{random_tabular_mdp, EnvConfig, RandomMdpSpec, TripMdpConfig, LEAVE, STAY};
use usfa_core::exact::{optimal_policy, policy_evaluation_sf, value_iteration, DEFAULT_TOL};
use usfa_core::gpi::{CandidateSet, SfEvaluator};
use usfa_core::mdp::{seeded_rng, Environment, TabularEnv, TabularMdp, TaskVector};
use usfa_core::nn::OptimizerConfig;

fn task(v: &[f64]) -> TaskVector {
    TaskVector::new(v.to_vec()).unwrap()
}

fn basis(dim: usize) -> Vec<TaskVector> {
    (0..dim)
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            task(&v)
        })
        .collect()
}

fn trip_env() -> Box<dyn Environment> {
    EnvConfig::Trip(TripMdpConfig::default()).build().unwrap()
}

fn tabular(lr: f64) -> SfBackend {
    SfBackend::Tabular { lr, bucket: 0.1 }
}

/// States reachable from `start` under any action sequence.
fn reachable(mdp: &TabularMdp, start: usize) -> Vec<usize> {
    let mut seen = vec![false; mdp.n_states()];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(s) = stack.pop() {
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..mdp.n_available(s) {
            for o in mdp.outcomes(s, a) {
                if !seen[o.next_state] {
                    seen[o.next_state] = true;
                    stack.push(o.next_state);
                }
            }
        }
    }
    (0..mdp.n_states()).filter(|&s| seen[s] && !mdp.is_terminal(s)).collect()
}

#[test]
fn single_threaded_training_is_bitwise_reproducible() {
    let mut config = TrainingConfig::new(basis(2), Budget::Episodes(40));
    config.seed = 9;
    config.batch = 3;
    let sampler = PolicySampler::gaussian(0.3, 3);
    let a = train_usfa(&|| Ok(trip_env()), &config, &sampler, &mut |_, _| Ok(())).unwrap();
    let b = train_usfa(&|| Ok(trip_env()), &config, &sampler, &mut |_, _| Ok(())).unwrap();
    assert_eq!(a.0.parameters(), b.0.parameters());
    assert_eq!(a.1, b.1);
    config.seed = 10;
    let c = train_usfa(&|| Ok(trip_env()), &config, &sampler, &mut |_, _| Ok(())).unwrap();
    assert_ne!(a.0.parameters(), c.0.parameters());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut config = TrainingConfig::new(basis(2), Budget::Episodes(30));
    config.backend = SfBackend::Mlp {
        optimizer: OptimizerConfig::Sgd { lr: 0.0 },
    };
    let mut initial = None;
    let sampler = PolicySampler::gaussian(0.5, 2);
    let (trained, log) = train_usfa(&|| Ok(trip_env()), &config, &sampler, &mut |_, _| Ok(())).unwrap();
    config.budget = Budget::Episodes(1);
    config.snapshots = 1;
    train_usfa(&|| Ok(trip_env()), &config, &sampler, &mut |_, m| {
        initial.get_or_insert_with(|| m.parameters());
        Ok(())
    })
    .unwrap();
    assert!(log.updates > 0);
    // Same seed, same initialisation; no step may have moved anything.
    assert_eq!(trained.parameters(), initial.unwrap());
}

#[test]
fn fully_random_behaviour_is_uniform_over_actions() {
    let mut env = EnvConfig::GridCollect(Default::default()).build().unwrap();
    let mut rng = seeded_rng(3);
    let obs = env.reset(&mut rng);
    let model = Usfa::Mlp(UsfaModel::new(env.observation_dim(), 4, 4, &mut rng));
    let w = task(&[1.0, 0.0, 0.0, 0.0]);
    let c = CandidateSet::singleton(w.clone());
    let n = 8000;
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[act_gpi(&model, &obs, &w, &c, 1.0, &mut rng).unwrap()] += 1;
    }
    let expected = n as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&k| (k as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
    assert!(p > 1e-3, "counts {counts:?}, p = {p}");
}

#[test]
fn tabular_sfs_on_two_state_match_exact_values() {
    let env_config = EnvConfig::TwoState { gamma: 0.9, step_cap: 20 };
    let tasks = vec![task(&[-1.0]), task(&[1.0])];
    let mut config = TrainingConfig::new(tasks.clone(), Budget::Steps(20_000));
    config.backend = tabular(0.1);
    let (model, _) = train_usfa(&|| env_config.build(), &config, &PolicySampler::degenerate(), &mut |_, _| Ok(())).unwrap();
    let (mdp, start) = env_config.tabular().unwrap().unwrap();
    let view = TabularEnv::new(mdp.clone(), start, None);
    for z in &tasks {
        let exact = policy_evaluation_sf(&mdp, &optimal_policy(&mdp, z).unwrap()).unwrap();
        let got = model.successor_features(&view.observe(0), z).unwrap();
        for a in [STAY, LEAVE] {
            let err = (got.row(a)[0] - exact.get(0, a)[0]).abs();
            assert!(err <= 1e-2, "z = {z}, action {a}: error {err}");
        }
    }
}

#[test]
fn on_policy_tabular_uvfa_reaches_optimal_values_on_trip() {
    let w = task(&[0.3, 0.8]);
    let mut config = TrainingConfig::new(vec![w.clone()], Budget::Episodes(5_000));
    config.q_backend = QBackend::Tabular { lr: 0.1, bucket: 0.1 };
    config.epsilon = 1.0;
    let (model, _) = train_uvfa(&|| Ok(trip_env()), &config, true, &mut |_, _| Ok(())).unwrap();
    let (mdp, start) = EnvConfig::Trip(TripMdpConfig::default()).tabular().unwrap().unwrap();
    let exact = value_iteration(&mdp, &w, DEFAULT_TOL).unwrap();
    let view = TabularEnv::new(mdp.clone(), start, None);
    let Uvfa::Tabular(table) = &model else { panic!("expected a tabular model") };
    let gap = table.sup_distance(&w, &exact, |s| view.observe(s)).unwrap();
    assert!(gap <= 1e-3, "sup gap {gap}");
}

#[test]
fn off_policy_uvfa_equals_on_policy_with_one_task() {
    let mut config = TrainingConfig::new(vec![task(&[0.6, 0.4])], Budget::Episodes(50));
    config.seed = 4;
    let on = train_uvfa(&|| Ok(trip_env()), &config, true, &mut |_, _| Ok(())).unwrap();
    let off = train_uvfa(&|| Ok(trip_env()), &config, false, &mut |_, _| Ok(())).unwrap();
    assert_eq!(on.0.parameters(), off.0.parameters());
}

#[test]
fn trace_cutting_converges_on_random_deterministic_mdps() {
    let spec = RandomMdpSpec {
        max_states: 6,
        max_actions: 3,
        max_dim: 2,
        gamma_range: (0.5, 0.8),
        deterministic: true,
        terminal_prob: 0.2,
    };
    let mut rng = seeded_rng(21);
    let mut checked = 0;
    while checked < 3 {
        let mdp = random_tabular_mdp(&mut rng, &spec);
        let states = reachable(&mdp, 0);
        if mdp.is_terminal(0) || states.len() < 2 {
            continue;
        }
        checked += 1;
        let dim = mdp.feature_dim();
        let z = task(&vec![1.0; dim]);
        let mut config = TrainingConfig::new(vec![z.clone()], Budget::Steps(60_000));
        config.backend = tabular(0.1);
        config.epsilon = 0.3;
        config.n_step = 5;
        let make = || -> usfa_core::error::Result<Box<dyn Environment>> {
            Ok(Box::new(TabularEnv::new(mdp.clone(), 0, Some(30))))
        };
        let (model, _) = train_usfa(&make, &config, &PolicySampler::degenerate(), &mut |_, _| Ok(())).unwrap();
        let exact = policy_evaluation_sf(&mdp, &optimal_policy(&mdp, &z).unwrap()).unwrap();
        let view = TabularEnv::new(mdp.clone(), 0, None);
        let mut worst = 0.0f64;
        for &s in &states {
            let got = model.successor_features(&view.observe(s), &z).unwrap();
            for a in 0..mdp.n_available(s) {
                for (x, y) in got.row(a).iter().zip(exact.get(s, a)) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        assert!(worst <= 1e-3, "cut traces: sup error {worst}");
    }
}

#[test]
fn threaded_actors_learn_trip() {
    let mut config = TrainingConfig::new(basis(2), Budget::Episodes(300));
    config.actors = 2;
    config.backend = tabular(0.2);
    config.resample = Resample::PerEpisode;
    let (model, log) = train_usfa(&|| Ok(trip_env()), &config, &PolicySampler::degenerate(), &mut |_, _| Ok(())).unwrap();
    assert!(log.episodes >= 300);
    let (mdp, start) = EnvConfig::Trip(TripMdpConfig::default()).tabular().unwrap().unwrap();
    let view = TabularEnv::new(mdp.clone(), start, None);
    for z in basis(2) {
        let exact = policy_evaluation_sf(&mdp, &optimal_policy(&mdp, &z).unwrap()).unwrap();
        let got = model.successor_features(&view.observe(start), &z).unwrap();
        let q = got.q_values(&z).unwrap();
        let best = (0..q.len()).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap();
        assert!((exact.q(start, best, &z).unwrap() - 1.0).abs() < 1e-9, "z = {z}");
    }
}

#[test]
fn snapshot_hook_sees_every_point_once() {
    let mut config = TrainingConfig::new(basis(2), Budget::Steps(1000));
    config.snapshots = 7;
    config.batch = 2;
    let mut seen = Vec::new();
    let (_, log) = train_usfa(&|| Ok(trip_env()), &config, &PolicySampler::degenerate(), &mut |step, _| {
        seen.push(step);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, config.snapshot_points());
    assert_eq!(log.env_steps, 1000);
}

#[test]
fn invalid_config_lists_every_problem() {
    let mut config = TrainingConfig::new(Vec::new(), Budget::Steps(0));
    config.n_step = 0;
    config.epsilon = 2.0;
    config.batch = 0;
    assert_eq!(config.problems().len(), 5);
    let err = train_usfa(&|| Ok(trip_env()), &config, &PolicySampler::degenerate(), &mut |_, _| Ok(())).unwrap_err();
    assert!(err.to_string().contains("n_step"));
}

