use std::path::PathBuf;
use std::process::ExitCode;

use bptts::config::{self, Command, RunConfig};
use bptts::env::{RewardMode, System};
use bptts::eval::Integrator;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bptts", about = "Learned WENO policies trained by backpropagation through time and space")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Train a policy; writes checkpoints and a training log.
    Train,
    /// Final-time errors of a policy and WENO on each IC at one grid size.
    Eval,
    /// Error table over ICs and grid sizes.
    Table,
    /// Per-step error series.
    Series,
    /// Errors over randomly generated environments.
    RandomSuite,
    /// Policy and WENO weights at one step.
    Actions,
    /// Finite-difference check of the BPTTS gradient.
    Gradcheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Command {
        match c {
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Table => Command::Table,
            Cmd::Series => Command::Series,
            Cmd::RandomSuite => Command::RandomSuite,
            Cmd::Actions => Command::Actions,
            Cmd::Gradcheck => Command::Gradcheck,
        }
    }
}

/// Overrides on top of the config file. Flags win.
#[derive(Args)]
struct Flags {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    #[arg(long, global = true)]
    system: Option<System>,
    #[arg(long, global = true, value_delimiter = ',')]
    ics: Option<Vec<String>>,
    #[arg(short, long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    grids: Option<Vec<usize>>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    #[arg(long, global = true)]
    eval_every: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    reward: Option<RewardMode>,
    #[arg(long, global = true)]
    normalize_obs: Option<bool>,
    #[arg(long, global = true)]
    stop_anchor_grad: Option<bool>,
    #[arg(long, global = true)]
    clip_norm: Option<f64>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    cfl: Option<f64>,
    #[arg(long, global = true)]
    reference_factor: Option<usize>,
    #[arg(long, global = true)]
    reference_integrator: Option<Integrator>,
    /// Checkpoint file or training output directory.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Use the classical WENO weights instead of a checkpoint.
    #[arg(long, global = true)]
    baseline: bool,
    /// Step to dump: an index, `last` or `second_to_last`.
    #[arg(long = "t", global = true)]
    t_query: Option<String>,
    #[arg(long, global = true)]
    count: Option<usize>,
    #[arg(long, global = true)]
    max_n: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long = "gc-steps", global = true, value_delimiter = ',')]
    gc_steps: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, global = true)]
    max_per_group: Option<usize>,
    /// Sign-flip one node kind's adjoint rule.
    #[arg(long, global = true)]
    inject_fault: Option<String>,
    #[arg(short, long, global = true)]
    verbose: bool,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build(cli: Cli) -> bptts::Result<(RunConfig, bool)> {
    let f = cli.flags;
    let mut c = match &f.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    c.command = cli.command.into();
    set(&mut c.system, f.system);
    set(&mut c.ics, f.ics);
    set(&mut c.n, f.n);
    set(&mut c.grids, f.grids);
    c.steps = f.steps.or(c.steps);
    c.dt = f.dt.or(c.dt);
    set(&mut c.episodes, f.episodes);
    set(&mut c.eval_every, f.eval_every);
    set(&mut c.learning_rate, f.lr);
    set(&mut c.reward, f.reward);
    set(&mut c.normalize_obs, f.normalize_obs);
    set(&mut c.stop_anchor_grad, f.stop_anchor_grad);
    c.clip_norm = f.clip_norm.or(c.clip_norm);
    set(&mut c.hidden, f.hidden);
    set(&mut c.seed, f.seed);
    set(&mut c.out_dir, f.out);
    set(&mut c.cfl, f.cfl);
    set(&mut c.reference_factor, f.reference_factor);
    set(&mut c.reference_integrator, f.reference_integrator);
    c.checkpoint = f.checkpoint.or(c.checkpoint);
    c.baseline |= f.baseline;
    set(&mut c.t_query, f.t_query);
    set(&mut c.suite_count, f.count);
    c.suite_max_n = f.max_n.or(c.suite_max_n);
    set(&mut c.gradcheck_sizes, f.sizes);
    set(&mut c.gradcheck_steps, f.gc_steps);
    set(&mut c.gradcheck_seeds, f.seeds);
    c.gradcheck_max_per_group = f.max_per_group.or(c.gradcheck_max_per_group);
    c.inject_fault = f.inject_fault.or(c.inject_fault);
    c.verbose |= f.verbose;
    c.resolve();
    c.validate()?;
    Ok((c, f.dump_config))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = build(cli).and_then(|(cfg, dump)| {
        if dump {
            print!("{}", cfg.to_toml()?);
            return Ok(None);
        }
        config::execute(&cfg).map(Some)
    });
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(out)) => {
            print!("{}", out.summary);
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            if out.gradcheck_passed == Some(false) {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
