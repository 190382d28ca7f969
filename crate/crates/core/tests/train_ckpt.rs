use bptts::env::{RewardMode, UniformAgent};
use bptts::gradcheck::random_params;
use bptts::policy::{PolicyParams, Shape};
use bptts::train::{self, Adam, TrainConfig};
use proptest::prelude::*;

fn small(dir: Option<&std::path::Path>, seed: u64) -> TrainConfig {
    TrainConfig {
        ics: vec!["standing_sine".into(), "rarefaction".into()],
        n: 32,
        steps: 12,
        episodes: 12,
        eval_every: 4,
        hidden: 16,
        seed,
        out_dir: dir.map(|d| d.to_path_buf()),
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), hidden in 1usize..24) {
        let p = random_params(Shape::with_hidden(hidden), seed);
        let back = PolicyParams::from_bytes(&p.to_bytes()).unwrap();
        prop_assert_eq!(back.shape(), p.shape());
        prop_assert!(back.values().iter().zip(p.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn first_adam_step_is_lr_times_sign(g in prop::collection::vec(-5.0..5.0f64, 1..20), lr in 1e-4..1e-1f64) {
        // After one step the bias-corrected moments are g and g^2.
        let mut x = vec![0.0; g.len()];
        let mut adam = Adam::new(g.len(), lr);
        prop_assert!(adam.step(&mut x, &g));
        for (xi, gi) in x.iter().zip(&g) {
            let want = lr * gi / (gi.abs() + adam.eps);
            prop_assert!((xi - want).abs() <= 1e-15 + 1e-12 * want.abs());
        }
    }
}

#[test]
fn saved_checkpoint_loads_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    let p = random_params(Shape::default(), 5);
    p.save(&path).unwrap();
    assert_eq!(PolicyParams::load(&path).unwrap().to_bytes(), p.to_bytes());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = random_params(Shape::with_hidden(4), 1).to_bytes();
    for cut in [0, 3, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(PolicyParams::from_bytes(&bytes[..cut]), Err(bptts::Error::Checkpoint(_))));
    }
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(PolicyParams::from_bytes(&bad).is_err());
}

#[test]
fn adam_ascends_a_concave_quadratic() {
    let target = [1.5, -0.5, 3.0];
    let mut x = vec![0.0; 3];
    let mut adam = Adam::new(3, 0.05);
    for _ in 0..2000 {
        let g: Vec<f64> = x.iter().zip(&target).map(|(xi, t)| -2.0 * (xi - t)).collect();
        adam.step(&mut x, &g);
    }
    for (xi, t) in x.iter().zip(&target) {
        assert!((xi - t).abs() < 1e-3, "{x:?}");
    }
    assert_eq!(adam.steps_taken(), 2000);
}

#[test]
fn bptts_gradient_matches_central_differences() {
    let cfg = TrainConfig { n: 12, steps: 4, hidden: 6, ..small(None, 0) };
    for reward in [RewardMode::Markovian, RewardMode::FixedWeno, RewardMode::FixedTrue] {
        let cfg = TrainConfig { reward, ..cfg.clone() };
        let batch = cfg.episodes_for(reward).unwrap();
        let opts = cfg.rollout_options();
        let params = random_params(Shape::with_hidden(6), 3);
        let (_, grad) = train::bptts_gradient(&batch, &params, &opts).unwrap();
        let grad = grad.into_vec();
        let objective = |p: &PolicyParams| -> f64 {
            batch.iter().map(|ep| train::rollout(ep, p, &opts).unwrap().total).sum()
        };
        let h = 1e-6;
        for k in (0..params.len()).step_by(7) {
            let mut plus = params.clone();
            plus.values_mut()[k] += h;
            let mut minus = params.clone();
            minus.values_mut()[k] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!(
                (grad[k] - fd).abs() <= 1e-9 + 1e-5 * fd.abs().max(grad[k].abs()),
                "{reward:?} param {k}: {} vs {fd}",
                grad[k]
            );
        }
    }
}

#[test]
fn training_writes_log_checkpoints_and_best() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Some(dir.path()), 2);
    let out = train::train(&cfg).unwrap();
    let log = std::fs::read_to_string(dir.path().join(train::LOG_FILE)).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some(train::LOG_HEADER));
    // Six optimizer iterations of two episodes, plus four evals of two ICs.
    assert_eq!(lines.count(), 12 + 4 * 2);
    assert_eq!(out.evals.iter().map(|e| e.0).collect::<Vec<_>>(), [0, 4, 8, 12]);
    for (episode, _) in &out.evals {
        assert!(dir.path().join(train::checkpoint_name(*episode)).exists());
    }
    let best: usize = std::fs::read_to_string(dir.path().join(train::BEST_FILE)).unwrap().trim().parse().unwrap();
    assert_eq!(best, out.best_episode);
    let best_eval = out.evals.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best_eval, best_eval);
}

#[test]
fn reloaded_best_checkpoint_reproduces_its_eval_reward() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Some(dir.path()), 4);
    let out = train::train(&cfg).unwrap();
    let p = PolicyParams::load(&dir.path().join(train::checkpoint_name(out.best_episode))).unwrap();
    assert_eq!(p.to_bytes(), out.best.to_bytes());
    let opts = cfg.rollout_options();
    let total: f64 = cfg
        .episodes_for(RewardMode::Markovian)
        .unwrap()
        .iter()
        .map(|ep| train::rollout(ep, &p, &opts).unwrap().total)
        .sum();
    assert_eq!(total, out.best_eval);
}

#[test]
fn training_is_deterministic_in_the_seed() {
    let a = train::train(&small(None, 9)).unwrap();
    let b = train::train(&small(None, 9)).unwrap();
    let c = train::train(&small(None, 10)).unwrap();
    assert_eq!(a.final_params.to_bytes(), b.final_params.to_bytes());
    assert_eq!(a.evals, b.evals);
    assert_ne!(a.final_params.to_bytes(), c.final_params.to_bytes());
}

#[test]
fn baseline_agent_has_zero_markovian_reward() {
    let cfg = small(None, 0);
    for ep in cfg.episodes_for(RewardMode::Markovian).unwrap() {
        let r = train::rollout_agent(&ep, &bptts::env::WenoAgent::default(), &cfg.rollout_options()).unwrap();
        assert_eq!(r.total, 0.0);
        let u = train::rollout_agent(&ep, &UniformAgent, &cfg.rollout_options()).unwrap();
        assert!(u.total < 0.0);
    }
}

#[test]
fn invalid_training_configs_are_rejected() {
    let bad = [
        TrainConfig { ics: vec![], ..small(None, 0) },
        TrainConfig { episodes: 0, ..small(None, 0) },
        TrainConfig { eval_every: 0, ..small(None, 0) },
        TrainConfig { ics: vec!["sod".into()], ..small(None, 0) },
    ];
    for cfg in bad {
        assert!(matches!(train::train(&cfg), Err(bptts::Error::Config(_))), "{cfg:?}");
    }
}
