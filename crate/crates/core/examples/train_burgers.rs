//! Desk-scale BPTTS training on the standing sine: N=64, T=100.
//!
//! Writes the training log and checkpoints to the output directory, then
//! compares the best checkpoint's per-interface reward with an untrained
//! uniform-weights policy.
//!
//! Usage: `cargo run --release --example train_burgers [episodes] [out_dir]`

use std::path::PathBuf;

use bptts::env::UniformAgent;
use bptts::train::{self, TrainConfig};

pub fn run_example(args: &[String]) -> Result<(), Box<dyn std::error::Error>> {
    let mut args = args.iter().cloned();
    let episodes: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let out_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bptts_train_burgers"));
    let cfg = TrainConfig {
        ics: vec!["standing_sine".into()],
        n: 64,
        steps: 100,
        episodes,
        eval_every: (episodes / 10).max(1),
        out_dir: Some(out_dir.clone()),
        ..TrainConfig::default()
    };
    let outcome = train::train(&cfg)?;
    for (episode, r) in &outcome.evals {
        println!("episode {episode:>5}  eval reward {r:.4e}");
    }

    let ep = &cfg.episodes_for(cfg.reward)?[0];
    let opts = cfg.rollout_options();
    let best = train::rollout(ep, &outcome.best, &opts)?;
    let uniform = train::rollout_agent(ep, &UniformAgent, &opts)?;
    println!(
        "best checkpoint (episode {}): mean |r| {:.3e}, uniform weights {:.3e}",
        outcome.best_episode,
        best.mean_abs_reward(),
        uniform.mean_abs_reward()
    );
    println!("log and checkpoints in {}", out_dir.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example(&std::env::args().skip(1).collect::<Vec<_>>())
}
