//! Rollouts, backpropagation through time and space, Adam, and the
//! training loop with periodic evaluation and checkpointing.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::env::{self, Agent, DtMode, EnvSpec, RewardMode, System, WenoAgent};
use crate::error::{Error, Result};
use crate::eval::{Reference, ReferenceConfig};
use crate::grid::FieldState;
use crate::ic::{self, IcSpec};
use crate::policy::{PolicyAgent, PolicyParams, Shape, TapePolicyAgent};
use crate::scalar::Real;
use crate::tape::{GradientMap, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    pub reward: RewardMode,
    pub normalize_obs: bool,
    /// Treat the Markovian anchor `w^{t+1}` as a constant.
    pub stop_anchor_grad: bool,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        RolloutOptions {
            reward: RewardMode::Markovian,
            normalize_obs: true,
            stop_anchor_grad: false,
        }
    }
}

/// One episode's values.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `s^0 .. s^k`, where `k` is the number of completed steps.
    pub states: Vec<Vec<Vec<f64>>>,
    /// Per-step, per-interface rewards.
    pub rewards: Vec<Vec<f64>>,
    /// Per-step sums of `rewards`.
    pub step_rewards: Vec<f64>,
    /// The objective `R = Σ_t Σ_j r^t_j` over completed steps.
    pub total: f64,
    /// Step index at which the state became invalid, if it did.
    pub blowup: Option<usize>,
}

impl Rollout {
    pub fn steps(&self) -> usize {
        self.step_rewards.len()
    }

    /// Mean `|r|` over all recorded interface rewards.
    pub fn mean_abs_reward(&self) -> f64 {
        let n: usize = self.rewards.iter().map(Vec::len).sum();
        self.rewards.iter().flatten().map(|r| r.abs()).sum::<f64>() / n.max(1) as f64
    }
}

/// A training environment: spec, initial state and, for the fixed reward
/// variants, the precomputed anchor trajectory `w^1 .. w^T`.
#[derive(Debug, Clone)]
pub struct Episode {
    pub name: String,
    pub spec: EnvSpec,
    pub initial: FieldState,
    pub anchor: Option<Vec<Vec<Vec<f64>>>>,
}

impl Episode {
    pub fn new(
        ic: &IcSpec,
        n: usize,
        dt_mode: DtMode,
        steps: usize,
        reward: RewardMode,
        reference: &ReferenceConfig,
    ) -> Result<Episode> {
        let grid = ic.grid(n)?;
        let spec = EnvSpec::new(ic.system, grid, dt_mode, steps)?;
        let initial = ic.initial_state(n)?;
        let anchor = match reward {
            RewardMode::Markovian => None,
            RewardMode::FixedWeno => Some(weno_trajectory(&spec, &initial, steps)?.0),
            RewardMode::FixedTrue => {
                let (_, times) = weno_trajectory(&spec, &initial, steps)?;
                let mut r = Reference::new(ic, n, reference)?;
                Some(
                    times
                        .iter()
                        .map(|&t| r.advance_to(t).map(|s| s.components))
                        .collect::<Result<_>>()?,
                )
            }
        };
        Ok(Episode {
            name: ic.name.clone(),
            spec,
            initial,
            anchor,
        })
    }
}

/// WENO states after each of `steps` steps, with their times.
fn weno_trajectory(
    spec: &EnvSpec,
    initial: &FieldState,
    steps: usize,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<f64>)> {
    let mu = WenoAgent {
        constants: spec.weno,
    };
    let mut s = initial.components.clone();
    let mut t = 0.0;
    let mut states = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    for k in 0..steps {
        let obs = env::observe(spec, &s).map_err(|e| Error::Blowup(format!("anchor step {k}: {e}")))?;
        let dt = spec.compute_dt(obs.alpha);
        let a = mu.act(&obs)?;
        s = env::transition(spec, &s, &obs, &a, dt)?;
        if !env::all_finite(&s) {
            return Err(Error::Blowup(format!("anchor diverged at step {k}")));
        }
        t += dt;
        states.push(s.clone());
        times.push(t);
    }
    Ok((states, times))
}

struct Unrolled<T> {
    step_sums: Vec<T>,
    states: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<f64>>,
    blowup: Option<usize>,
}

fn values<T: Real>(s: &[Vec<T>]) -> Vec<Vec<f64>> {
    s.iter().map(|c| c.iter().map(|v| v.value()).collect()).collect()
}

fn is_blowup(e: &Error) -> bool {
    matches!(e, Error::Blowup(_) | Error::Physical(_))
}

/// The episode loop, written once for plain floats and tape nodes.
fn unroll<T: Real, A: Agent<T> + ?Sized>(
    ep: &Episode,
    mut s: Vec<Vec<T>>,
    agent: &A,
    opts: &RolloutOptions,
) -> Result<Unrolled<T>> {
    let spec = &ep.spec;
    if opts.reward != RewardMode::Markovian {
        match &ep.anchor {
            Some(a) if a.len() >= spec.steps => {}
            _ => {
                return Err(Error::Shape(
                    "fixed reward needs an anchor trajectory of length T".into(),
                ))
            }
        }
    }
    let mut out = Unrolled {
        step_sums: Vec::with_capacity(spec.steps),
        states: vec![values(&s)],
        rewards: Vec::with_capacity(spec.steps),
        blowup: None,
    };
    for t in 0..spec.steps {
        let obs = match env::observe(spec, &s) {
            Ok(o) => o,
            Err(e) if is_blowup(&e) => {
                out.blowup = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let dt = spec.compute_dt(obs.alpha.value());
        let actions = match agent.act(&obs) {
            Ok(a) => a,
            Err(e) if is_blowup(&e) => {
                out.blowup = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        let next = env::transition(spec, &s, &obs, &actions, dt)?;
        if !env::all_finite(&next) {
            out.blowup = Some(t);
            break;
        }
        let r = match opts.reward {
            RewardMode::Markovian => {
                env::reward_markovian(spec, &obs, &actions, dt, opts.stop_anchor_grad)?
            }
            _ => {
                let lift = next[0][0];
                let anchor: Vec<Vec<T>> = ep.anchor.as_ref().unwrap()[t]
                    .iter()
                    .map(|c| c.iter().map(|&v| lift.constant(v)).collect())
                    .collect();
                env::reward(&next, &anchor)?
            }
        };
        out.rewards.push(r.iter().map(|v| v.value()).collect());
        out.step_sums.push(T::sum(&r));
        out.states.push(values(&next));
        s = next;
    }
    Ok(out)
}

fn finish<T: Real>(u: Unrolled<T>, total: f64) -> Rollout {
    Rollout {
        states: u.states,
        step_rewards: u.step_sums.iter().map(|v| v.value()).collect(),
        rewards: u.rewards,
        total,
        blowup: u.blowup,
    }
}

/// Unrecorded rollout with any plain-float agent.
pub fn rollout_agent<A: Agent<f64> + ?Sized>(
    ep: &Episode,
    agent: &A,
    opts: &RolloutOptions,
) -> Result<Rollout> {
    let u = unroll(ep, ep.initial.components.clone(), agent, opts)?;
    let total = if u.step_sums.is_empty() {
        0.0
    } else {
        f64::sum(&u.step_sums)
    };
    Ok(finish(u, total))
}

/// Unrecorded policy rollout.
pub fn rollout(ep: &Episode, params: &PolicyParams, opts: &RolloutOptions) -> Result<Rollout> {
    let agent = PolicyAgent {
        params,
        normalize: opts.normalize_obs,
    };
    rollout_agent(ep, &agent, opts)
}

/// Recorded policy rollout followed by one reverse sweep. The gradient is
/// `dR/dθ` in the parameter layout of `params`.
pub fn rollout_recorded(
    ep: &Episode,
    params: &PolicyParams,
    opts: &RolloutOptions,
) -> Result<(Rollout, GradientMap)> {
    record_into(&Tape::new(), ep, params, opts)
}

/// [`rollout_recorded`] onto a caller-provided empty tape, which stays
/// available for inspection afterwards.
pub fn record_into(
    tape: &Tape,
    ep: &Episode,
    params: &PolicyParams,
    opts: &RolloutOptions,
) -> Result<(Rollout, GradientMap)> {
    let agent = TapePolicyAgent::new(tape, params, opts.normalize_obs);
    let u0 = ep
        .initial
        .components
        .iter()
        .map(|c| c.iter().map(|&v| tape.constant(v)).collect())
        .collect();
    let u = unroll(ep, u0, &agent, opts)?;
    let (total, grad) = if u.step_sums.is_empty() {
        (0.0, GradientMap::zeros(params.len()))
    } else {
        let objective = tape.sum(&u.step_sums);
        (objective.value(), tape.backward(objective)?)
    };
    Ok((finish(u, total), grad))
}

/// Sum of per-episode gradients in batch order.
pub fn bptts_gradient(
    batch: &[Episode],
    params: &PolicyParams,
    opts: &RolloutOptions,
) -> Result<(Vec<Rollout>, GradientMap)> {
    let mut grad = GradientMap::zeros(params.len());
    let mut rollouts = Vec::with_capacity(batch.len());
    for ep in batch {
        let (r, g) = rollout_recorded(ep, params, opts)?;
        grad.accumulate(&g);
        rollouts.push(r);
    }
    Ok((rollouts, grad))
}

/// Adam, ascending the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Applies one update. Returns `false`, leaving everything untouched,
    /// when the gradient is not finite.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> bool {
        assert_eq!(params.len(), self.m.len(), "adam state shape");
        if grad.iter().any(|g| !g.is_finite()) {
            return false;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] += self.lr * mh / (vh.sqrt() + self.eps);
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub system: System,
    pub ics: Vec<String>,
    pub n: usize,
    pub steps: usize,
    pub dt: f64,
    /// Total episodes, counted per initial condition.
    pub episodes: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub reward: RewardMode,
    pub normalize_obs: bool,
    pub stop_anchor_grad: bool,
    pub clip_norm: Option<f64>,
    pub hidden: usize,
    pub reference: ReferenceConfig,
    pub out_dir: Option<PathBuf>,
    pub verbose: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            system: System::Burgers,
            ics: ic::BURGERS_TRAINING.iter().map(|s| s.to_string()).collect(),
            n: 128,
            steps: 250,
            dt: 0.0004,
            episodes: 10_000,
            eval_every: 50,
            seed: 0,
            learning_rate: 3e-4,
            reward: RewardMode::Markovian,
            normalize_obs: true,
            stop_anchor_grad: false,
            clip_norm: None,
            hidden: crate::policy::HIDDEN,
            reference: ReferenceConfig::default(),
            out_dir: None,
            verbose: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ics.is_empty() {
            return bad("at least one training initial condition is required".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if self.eval_every == 0 || self.episodes % self.eval_every != 0 {
            return bad(format!(
                "eval_every ({}) must divide episodes ({})",
                self.eval_every, self.episodes
            ));
        }
        if self.episodes < self.ics.len() {
            return bad("fewer episodes than batch initial conditions".into());
        }
        if self.steps == 0 {
            return bad("steps must be >= 1".into());
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip norm must be > 0, got {c}"));
            }
        }
        Ok(())
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            reward: self.reward,
            normalize_obs: self.normalize_obs,
            stop_anchor_grad: self.stop_anchor_grad,
        }
    }

    /// Training environments for the batch, in batch order.
    pub fn episodes_for(&self, reward: RewardMode) -> Result<Vec<Episode>> {
        self.ics
            .iter()
            .map(|name| {
                let ic = ic::named(name)?;
                if ic.system != self.system {
                    return Err(Error::Config(format!(
                        "`{name}` is not a {} initial condition",
                        self.system.name()
                    )));
                }
                Episode::new(
                    &ic,
                    self.n,
                    DtMode::Fixed(self.dt),
                    self.steps,
                    reward,
                    &self.reference,
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub ic: String,
    pub total_reward: f64,
    pub eval: bool,
    pub wallclock: f64,
}

pub const LOG_HEADER: &str = "episode,ic_name,total_reward,eval_flag,wallclock";

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.16e},{},{:.6}",
            self.episode, self.ic, self.total_reward, self.eval as u8, self.wallclock
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: PolicyParams,
    pub best_episode: usize,
    pub best_eval: f64,
    pub final_params: PolicyParams,
    pub log: Vec<LogRow>,
    /// `(episode, summed evaluation reward)` at each evaluation.
    pub evals: Vec<(usize, f64)>,
    pub events: Vec<String>,
}

pub const LOG_FILE: &str = "train_log.csv";
pub const BEST_FILE: &str = "best";

pub fn checkpoint_name(episode: usize) -> String {
    format!("ckpt_{episode:06}.bin")
}

struct Output {
    dir: PathBuf,
    log: std::fs::File,
}

impl Output {
    fn open(dir: &Path) -> Result<Output> {
        std::fs::create_dir_all(dir)?;
        let mut log = std::fs::File::create(dir.join(LOG_FILE))?;
        writeln!(log, "{LOG_HEADER}")?;
        Ok(Output {
            dir: dir.to_path_buf(),
            log,
        })
    }
}

/// Runs the training loop. One optimizer step per batch; the batch holds
/// every configured initial condition once.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let opts = cfg.rollout_options();
    let batch = cfg.episodes_for(cfg.reward)?;
    let eval_batch = if cfg.reward == RewardMode::Markovian {
        batch.clone()
    } else {
        cfg.episodes_for(RewardMode::Markovian)?
    };
    let eval_opts = RolloutOptions {
        reward: RewardMode::Markovian,
        ..opts
    };
    let mut params = PolicyParams::init_with_shape(Shape::with_hidden(cfg.hidden), cfg.seed);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut out = match &cfg.out_dir {
        Some(d) => Some(Output::open(d)?),
        None => None,
    };
    let start = Instant::now();
    let b = batch.len();
    let iterations = cfg.episodes / b;
    let mut outcome = TrainOutcome {
        best: params.clone(),
        best_episode: 0,
        best_eval: f64::NEG_INFINITY,
        final_params: params.clone(),
        log: Vec::new(),
        evals: Vec::new(),
        events: Vec::new(),
    };
    let mut all_blown = 0usize;

    let emit = |row: LogRow, out: &mut Option<Output>, log: &mut Vec<LogRow>| -> Result<()> {
        if let Some(o) = out {
            writeln!(o.log, "{}", row.to_csv())?;
        }
        log.push(row);
        Ok(())
    };

    for iter in 0..=iterations {
        let episode = iter * b;
        let due = iter == 0
            || iter == iterations
            || episode / cfg.eval_every > (episode - b) / cfg.eval_every;
        if due {
            let mut summed = 0.0;
            for ep in &eval_batch {
                let r = rollout(ep, &params, &eval_opts)?;
                summed += r.total;
                let row = LogRow {
                    episode,
                    ic: ep.name.clone(),
                    total_reward: r.total,
                    eval: true,
                    wallclock: start.elapsed().as_secs_f64(),
                };
                emit(row, &mut out, &mut outcome.log)?;
            }
            outcome.evals.push((episode, summed));
            if let Some(o) = &out {
                params.save(&o.dir.join(checkpoint_name(episode)))?;
            }
            if summed > outcome.best_eval {
                outcome.best_eval = summed;
                outcome.best_episode = episode;
                outcome.best = params.clone();
                if let Some(o) = &out {
                    std::fs::write(o.dir.join(BEST_FILE), format!("{episode}\n"))?;
                }
            }
            if cfg.verbose {
                eprintln!("episode {episode}: eval reward {summed:.6e}");
            }
        }
        if iter == iterations {
            break;
        }

        let (rollouts, grad) = bptts_gradient(&batch, &params, &opts)?;
        for (k, (ep, r)) in batch.iter().zip(&rollouts).enumerate() {
            let row = LogRow {
                episode: episode + k,
                ic: ep.name.clone(),
                total_reward: r.total,
                eval: false,
                wallclock: start.elapsed().as_secs_f64(),
            };
            emit(row, &mut out, &mut outcome.log)?;
        }
        if rollouts.iter().all(|r| r.blowup.is_some()) {
            all_blown += 1;
            if all_blown >= 10 {
                let detail: Vec<String> = batch
                    .iter()
                    .zip(&rollouts)
                    .map(|(ep, r)| format!("{} at step {}", ep.name, r.blowup.unwrap()))
                    .collect();
                return Err(Error::Blowup(format!(
                    "every batch episode blew up for 10 consecutive iterations (last: {})",
                    detail.join(", ")
                )));
            }
        } else {
            all_blown = 0;
        }
        let mut g = grad.into_vec();
        if let Some(c) = cfg.clip_norm {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > c {
                g.iter_mut().for_each(|v| *v *= c / norm);
            }
        }
        if !adam.step(params.values_mut(), &g) {
            let mut msg = String::new();
            let _ = write!(msg, "episode {episode}: non-finite gradient, step skipped");
            if cfg.verbose {
                eprintln!("{msg}");
            }
            outcome.events.push(msg);
        }
    }
    if let Some(o) = &out {
        if !outcome.events.is_empty() {
            std::fs::write(o.dir.join("events.log"), outcome.events.join("\n") + "\n")?;
        }
    }
    outcome.final_params = params;
    Ok(outcome)
}
