//! Flat run configuration and the commands built on it.
//!
//! A run is described by one TOML table of scalar knobs. Fields left unset
//! in the file take the Burgers training defaults; `resolve` then fills the
//! system-dependent ones (initial conditions, step count, dt) so that the
//! dumped form of a resolved config reproduces the same run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Agent, RewardMode, System, WenoAgent};
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig, Integrator, ReferenceConfig, StepQuery};
use crate::gradcheck::{self, GradcheckConfig};
use crate::ic::{self, IcSpec};
use crate::policy::{PolicyAgent, PolicyParams};
use crate::tape::OpKind;
use crate::train::{self, RolloutOptions, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Train,
    Eval,
    Table,
    Series,
    RandomSuite,
    Actions,
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Table => "table",
            Command::Series => "series",
            Command::RandomSuite => "random-suite",
            Command::Actions => "actions",
            Command::Gradcheck => "gradcheck",
        }
    }

    /// Stem used in output file names.
    fn stem(self) -> &'static str {
        match self {
            Command::RandomSuite => "random_suite",
            c => c.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub system: System,
    /// Empty means the system's default set for the command.
    pub ics: Vec<String>,
    pub n: usize,
    pub grids: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub episodes: usize,
    pub eval_every: usize,
    pub learning_rate: f64,
    pub reward: RewardMode,
    pub normalize_obs: bool,
    pub stop_anchor_grad: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    pub hidden: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cfl: f64,
    pub reference_factor: usize,
    pub reference_cfl: f64,
    pub reference_integrator: Integrator,
    /// A checkpoint file, or a training output directory (its best one).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Score the classical WENO weights in place of a checkpoint.
    pub baseline: bool,
    pub t_query: String,
    pub suite_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite_max_n: Option<usize>,
    pub gradcheck_sizes: Vec<usize>,
    pub gradcheck_steps: Vec<usize>,
    pub gradcheck_seeds: Vec<u64>,
    pub gradcheck_dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradcheck_max_per_group: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_fault: Option<String>,
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let g = GradcheckConfig::default();
        RunConfig {
            command: Command::Train,
            system: System::Burgers,
            ics: Vec::new(),
            n: t.n,
            grids: vec![64, 128, 256],
            steps: None,
            dt: None,
            episodes: t.episodes,
            eval_every: t.eval_every,
            learning_rate: t.learning_rate,
            reward: t.reward,
            normalize_obs: t.normalize_obs,
            stop_anchor_grad: t.stop_anchor_grad,
            clip_norm: t.clip_norm,
            hidden: t.hidden,
            seed: t.seed,
            out_dir: PathBuf::from("runs"),
            cfl: 0.5,
            reference_factor: t.reference.factor,
            reference_cfl: t.reference.cfl,
            reference_integrator: t.reference.integrator,
            checkpoint: None,
            baseline: false,
            t_query: "second_to_last".into(),
            suite_count: 1200,
            suite_max_n: None,
            gradcheck_sizes: vec![8, 16],
            gradcheck_steps: vec![2, 5],
            gradcheck_seeds: g.seeds,
            gradcheck_dt: g.dt,
            gradcheck_max_per_group: None,
            inject_fault: None,
            verbose: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills the system-dependent defaults.
    pub fn resolve(&mut self) {
        let euler = self.system == System::Euler;
        if self.ics.is_empty() {
            let names: &[&str] = match (self.command, euler) {
                (Command::Train, false) => &ic::BURGERS_TRAINING,
                (Command::Train, true) => &["sod"],
                (_, false) => &ic::BURGERS_NAMED,
                (_, true) => &ic::EULER_NAMED,
            };
            self.ics = names.iter().map(|s| s.to_string()).collect();
        }
        if self.steps.is_none() {
            self.steps = Some(if euler { 1000 } else { 250 });
        }
        if self.dt.is_none() {
            self.dt = Some(if euler { 1e-4 } else { 4e-4 });
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for name in &self.ics {
            let spec = ic::named(name)?;
            if spec.system != self.system {
                return bad(format!("`{name}` is not a {} initial condition", self.system.name()));
            }
        }
        if self.n < 7 || self.grids.iter().any(|&g| g < 7) {
            return bad("grids need at least 7 cells".into());
        }
        if !(self.cfl > 0.0) || !(self.reference_cfl > 0.0) || self.reference_factor == 0 {
            return bad("cfl numbers and the reference factor must be positive".into());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return bad(format!("dt must be > 0, got {dt}"));
            }
        }
        self.t_query.parse::<StepQuery>()?;
        if let Some(k) = &self.inject_fault {
            if OpKind::from_name(k).is_none() {
                return bad(format!("unknown node kind `{k}`"));
            }
        }
        match self.command {
            Command::Train => self.train_config()?.validate(),
            Command::Gradcheck => {
                if self.gradcheck_sizes.is_empty()
                    || self.gradcheck_steps.is_empty()
                    || self.gradcheck_seeds.is_empty()
                {
                    return bad("gradcheck needs sizes, steps and seeds".into());
                }
                Ok(())
            }
            _ => {
                if !self.baseline && self.checkpoint.is_none() {
                    return bad(format!(
                        "`{}` needs a checkpoint or the baseline flag",
                        self.command.name()
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn reference(&self) -> ReferenceConfig {
        ReferenceConfig {
            factor: self.reference_factor,
            cfl: self.reference_cfl,
            integrator: self.reference_integrator,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            cfl: self.cfl,
            reference: self.reference(),
            normalize_obs: self.normalize_obs,
        }
    }

    fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            reward: self.reward,
            normalize_obs: self.normalize_obs,
            stop_anchor_grad: self.stop_anchor_grad,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = self.clone();
        c.resolve();
        Ok(TrainConfig {
            system: c.system,
            ics: c.ics,
            n: c.n,
            steps: c.steps.unwrap_or(250),
            dt: c.dt.unwrap_or(4e-4),
            episodes: c.episodes,
            eval_every: c.eval_every,
            seed: c.seed,
            learning_rate: c.learning_rate,
            reward: c.reward,
            normalize_obs: c.normalize_obs,
            stop_anchor_grad: c.stop_anchor_grad,
            clip_norm: c.clip_norm,
            hidden: c.hidden,
            reference: self.reference(),
            out_dir: Some(c.out_dir),
            verbose: c.verbose,
        })
    }

    /// One gradcheck configuration per (size, steps) pair.
    pub fn gradcheck_configs(&self) -> Vec<GradcheckConfig> {
        let mut out = Vec::new();
        for &n in &self.gradcheck_sizes {
            for &steps in &self.gradcheck_steps {
                out.push(GradcheckConfig {
                    n,
                    steps,
                    dt: self.gradcheck_dt,
                    seeds: self.gradcheck_seeds.clone(),
                    hidden: self.hidden,
                    max_per_group: self.gradcheck_max_per_group,
                    options: self.rollout_options(),
                    inject: self.inject_fault.as_deref().and_then(OpKind::from_name),
                    ..GradcheckConfig::default()
                });
            }
        }
        out
    }

    fn ic_specs(&self) -> Result<Vec<IcSpec>> {
        self.ics.iter().map(|n| ic::named(n)).collect()
    }

    /// Policy parameters for the evaluation commands; `None` in baseline mode.
    pub fn load_policy(&self) -> Result<Option<PolicyParams>> {
        if self.baseline {
            return Ok(None);
        }
        let path = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Config("no checkpoint given".into()))?;
        let file = if path.is_dir() {
            let best = std::fs::read_to_string(path.join(train::BEST_FILE))?;
            let episode: usize = best
                .trim()
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad `best` marker in {}", path.display())))?;
            path.join(train::checkpoint_name(episode))
        } else {
            path.clone()
        };
        PolicyParams::load(&file).map(Some)
    }

    fn output_path(&self, ic: &str, n: &str) -> PathBuf {
        self.out_dir.join(format!("{}_{ic}_{n}.csv", self.command.stem()))
    }
}

/// What a command produced: human-readable summary, files written, and for
/// `gradcheck` whether it passed.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub gradcheck_passed: Option<bool>,
}

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => "diverged".into(),
    }
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Runs the configured command. The config is resolved and validated first.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    cfg.resolve();
    cfg.validate()?;
    match cfg.command {
        Command::Train => run_train(&cfg),
        Command::Gradcheck => run_gradcheck(&cfg),
        _ => {
            let params = cfg.load_policy()?;
            match &params {
                Some(p) => {
                    let agent = PolicyAgent {
                        params: p,
                        normalize: cfg.normalize_obs,
                    };
                    run_eval(&cfg, &agent)
                }
                None => run_eval(&cfg, &WenoAgent::default()),
            }
        }
    }
}

fn run_train(cfg: &RunConfig) -> Result<Outcome> {
    let tc = cfg.train_config()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let config_path = cfg.out_dir.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()?)?;
    let out = train::train(&tc)?;
    let mut summary = String::new();
    for (episode, r) in &out.evals {
        let _ = writeln!(summary, "eval episode {episode}: total reward {r:.16e}");
    }
    let _ = writeln!(
        summary,
        "best checkpoint: episode {} (reward {:.16e})",
        out.best_episode, out.best_eval
    );
    for e in &out.events {
        let _ = writeln!(summary, "event: {e}");
    }
    let mut files = vec![config_path, cfg.out_dir.join(train::LOG_FILE)];
    files.extend(out.evals.iter().map(|(e, _)| cfg.out_dir.join(train::checkpoint_name(*e))));
    Ok(Outcome {
        summary,
        files,
        gradcheck_passed: None,
    })
}

fn run_gradcheck(cfg: &RunConfig) -> Result<Outcome> {
    let mut summary = String::new();
    let mut passed = true;
    let mut worst = 0.0f64;
    for gc in cfg.gradcheck_configs() {
        let report = gradcheck::run(&gc)?;
        let _ = writeln!(summary, "N={} T={}", gc.n, gc.steps);
        summary.push_str(&report.render());
        passed &= report.passed;
        worst = worst.max(report.max_rel);
    }
    let _ = writeln!(
        summary,
        "max relative error {worst:.3e}: {}",
        if passed { "PASS" } else { "FAIL" }
    );
    Ok(Outcome {
        summary,
        files: Vec::new(),
        gradcheck_passed: Some(passed),
    })
}

fn run_eval<A: Agent<f64> + ?Sized>(cfg: &RunConfig, agent: &A) -> Result<Outcome> {
    let ec = cfg.eval_config();
    let ics = cfg.ic_specs()?;
    let mut summary = String::new();
    let mut files = Vec::new();
    match cfg.command {
        Command::Eval => {
            for ic in &ics {
                let rows = eval::error_table(agent, std::slice::from_ref(ic), &[cfg.n], &ec)?;
                let r = &rows[0];
                let line = format!("{},{},{},{}", r.ic, r.n, num(r.rl_error), num(r.weno_error));
                let _ = writeln!(summary, "{line}");
                let path = cfg.output_path(&ic.name, &cfg.n.to_string());
                write_csv(&path, "ic,n,rl_error,weno_error", &[line])?;
                files.push(path);
            }
        }
        Command::Table => {
            let rows = eval::error_table(agent, &ics, &cfg.grids, &ec)?;
            let mut header = String::from("ic");
            for g in &cfg.grids {
                let _ = write!(header, ",rl_{g},weno_{g}");
            }
            let lines: Vec<String> = rows
                .chunks(cfg.grids.len())
                .map(|chunk| {
                    let mut l = chunk[0].ic.clone();
                    for r in chunk {
                        let _ = write!(l, ",{},{}", num(r.rl_error), num(r.weno_error));
                    }
                    l
                })
                .collect();
            let _ = writeln!(summary, "{header}");
            for l in &lines {
                let _ = writeln!(summary, "{l}");
            }
            let path = cfg.output_path(cfg.system.name(), "all");
            write_csv(&path, &header, &lines)?;
            files.push(path);
        }
        Command::Series => {
            for ic in &ics {
                let c = eval::compare(ic, cfg.n, agent, &ec, None)?;
                let lines: Vec<String> = c
                    .times
                    .iter()
                    .enumerate()
                    .map(|(k, t)| {
                        format!(
                            "{k},{t:.16e},{},{}",
                            num(c.rl_error.get(k).copied().filter(|v| v.is_finite())),
                            num(c.weno_error.get(k).copied().filter(|v| v.is_finite()))
                        )
                    })
                    .collect();
                let _ = writeln!(
                    summary,
                    "{} N={}: {} steps, final rl {} weno {}",
                    ic.name,
                    cfg.n,
                    c.times.len() - 1,
                    num(c.final_rl()),
                    num(c.final_weno())
                );
                let path = cfg.output_path(&ic.name, &cfg.n.to_string());
                write_csv(&path, "step,t,rl_error,weno_error", &lines)?;
                files.push(path);
            }
        }
        Command::RandomSuite => {
            let rows = eval::random_suite(agent, cfg.suite_count, cfg.seed, &ec, cfg.suite_max_n)?;
            let lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},\"{}\",{},{}",
                        r.index,
                        r.family,
                        r.n,
                        r.params,
                        num(r.rl_error),
                        num(r.weno_error)
                    )
                })
                .collect();
            let paired: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| Some((r.rl_error?, r.weno_error?)))
                .collect();
            let diverged = rows.len() - paired.len();
            let (a, b): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
            let _ = writeln!(
                summary,
                "{} environments, {diverged} diverged, spearman {:.4}",
                rows.len(),
                eval::spearman(&a, &b)
            );
            let path = cfg.output_path(&format!("seed{}", cfg.seed), &cfg.suite_count.to_string());
            write_csv(&path, "index,family,n,params,rl_error,weno_error", &lines)?;
            files.push(path);
        }
        Command::Actions => {
            let query: StepQuery = cfg.t_query.parse()?;
            for ic in &ics {
                let d = eval::action_dump(ic, cfg.n, agent, &ec, query)?;
                let lines: Vec<String> = d
                    .rows
                    .iter()
                    .map(|r| {
                        let mut l = format!("{},{},{:.16e}", r.component, r.interface, r.x);
                        for w in [r.rl_plus, r.rl_minus, r.weno_plus, r.weno_minus] {
                            for v in w {
                                let _ = write!(l, ",{v:.16e}");
                            }
                        }
                        l
                    })
                    .collect();
                let _ = writeln!(summary, "{} N={}: step {} at t={:.6}", ic.name, cfg.n, d.step, d.time);
                let path = cfg.output_path(&ic.name, &cfg.n.to_string());
                write_csv(
                    &path,
                    "component,interface,x,rl_plus_0,rl_plus_1,rl_plus_2,rl_minus_0,rl_minus_1,rl_minus_2,\
                     weno_plus_0,weno_plus_1,weno_plus_2,weno_minus_0,weno_minus_1,weno_minus_2",
                    &lines,
                )?;
                files.push(path);
            }
        }
        Command::Train | Command::Gradcheck => unreachable!(),
    }
    Ok(Outcome {
        summary,
        files,
        gradcheck_passed: None,
    })
}
