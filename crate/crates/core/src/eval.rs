//! Scoring against a reference solution: error tables, per-step error
//! series, the random suite and action dumps.
//!
//! The reference is the classical WENO scheme on a grid `factor` times finer,
//! averaged back onto the coarse cells. Coarse solvers are stepped in
//! lockstep with a shared CFL timestep, and the reference is advanced to the
//! same instants exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{self, Agent, DtMode, EnvSpec, Observations, WenoAgent};
use crate::error::{Error, Result};
use crate::grid::{l2_error, FieldState, Grid};
use crate::ic::{self, IcSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ForwardEuler,
    SspRk3,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward_euler" => Ok(Integrator::ForwardEuler),
            "ssp_rk3" => Ok(Integrator::SspRk3),
            other => Err(Error::Config(format!("unknown integrator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub factor: usize,
    pub cfl: f64,
    pub integrator: Integrator,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            factor: 8,
            cfl: 0.5,
            integrator: Integrator::SspRk3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// CFL number shared by the coarse solvers.
    pub cfl: f64,
    pub reference: ReferenceConfig,
    pub normalize_obs: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            cfl: 0.5,
            reference: ReferenceConfig::default(),
            normalize_obs: true,
        }
    }
}

fn spec_for(ic: &IcSpec, grid: Grid, cfl: f64) -> Result<EnvSpec> {
    EnvSpec::new(ic.system, grid, DtMode::Cfl(cfl), 0)
}

/// One classical WENO step of size `dt`.
pub fn weno_step(
    spec: &EnvSpec,
    comps: &[Vec<f64>],
    dt: f64,
    integrator: Integrator,
) -> Result<Vec<Vec<f64>>> {
    let mu = WenoAgent {
        constants: spec.weno,
    };
    let euler = |u: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        let obs = env::observe(spec, u)?;
        let a = mu.act(&obs)?;
        env::transition(spec, u, &obs, &a, dt)
    };
    let blend = |a: &[Vec<f64>], wa: f64, b: &[Vec<f64>], wb: f64| -> Vec<Vec<f64>> {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| wa * p + wb * q).collect())
            .collect()
    };
    match integrator {
        Integrator::ForwardEuler => euler(comps),
        Integrator::SspRk3 => {
            let u1 = euler(comps)?;
            let u2 = blend(comps, 0.75, &euler(&u1)?, 0.25);
            Ok(blend(comps, 1.0 / 3.0, &euler(&u2)?, 2.0 / 3.0))
        }
    }
}

/// Fine-grid WENO solution viewed on a coarse grid.
#[derive(Debug, Clone)]
pub struct Reference {
    fine: EnvSpec,
    factor: usize,
    integrator: Integrator,
    cfl: f64,
    state: Vec<Vec<f64>>,
    time: f64,
    initial: FieldState,
}

impl Reference {
    pub fn new(ic: &IcSpec, n: usize, cfg: &ReferenceConfig) -> Result<Reference> {
        if cfg.factor == 0 {
            return Err(Error::Config("reference factor must be >= 1".into()));
        }
        let fine_grid = ic.grid(n * cfg.factor)?;
        let fine = spec_for(ic, fine_grid, cfg.cfl)?;
        Ok(Reference {
            fine,
            factor: cfg.factor,
            integrator: cfg.integrator,
            cfl: cfg.cfl,
            state: ic.cell_averages(n * cfg.factor, 8)?.components,
            time: 0.0,
            initial: ic.initial_state(n)?,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Advances to `t` (never backwards) and returns the coarse view. At
    /// `t = 0` the coarse initial condition itself is returned.
    pub fn advance_to(&mut self, t: f64) -> Result<FieldState> {
        if t < self.time {
            return Err(Error::Config(format!(
                "reference cannot go back from {} to {t}",
                self.time
            )));
        }
        if t == 0.0 {
            return Ok(self.initial.clone());
        }
        while self.time < t {
            let alpha = env::max_wavespeed(self.fine.system, &self.state, self.fine.gamma)
                .map_err(|e| Error::Blowup(format!("reference: {e}")))?;
            let mut dt = self.cfl * self.fine.grid.dx() / alpha.max(1e-12);
            let last = self.time + dt >= t;
            if last {
                dt = t - self.time;
            }
            self.state = weno_step(&self.fine, &self.state, dt, self.integrator)?;
            if !env::all_finite(&self.state) {
                return Err(Error::Blowup(format!("reference diverged at t={}", self.time)));
            }
            self.time = if last { t } else { self.time + dt };
        }
        Ok(self.coarse())
    }

    fn coarse(&self) -> FieldState {
        let f = self.factor;
        let comps = self
            .state
            .iter()
            .map(|c| c.chunks(f).map(|w| w.iter().sum::<f64>() / f as f64).collect())
            .collect();
        FieldState {
            components: comps,
            time: self.time,
        }
    }
}

/// Error of the agent and of the WENO baseline along a shared timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub times: Vec<f64>,
    /// `NaN` once the agent has diverged.
    pub rl_error: Vec<f64>,
    pub weno_error: Vec<f64>,
    pub rl_diverged_at: Option<usize>,
    pub weno_diverged_at: Option<usize>,
}

impl Comparison {
    pub fn final_rl(&self) -> Option<f64> {
        self.rl_diverged_at.is_none().then(|| *self.rl_error.last().unwrap())
    }

    pub fn final_weno(&self) -> Option<f64> {
        self.weno_diverged_at
            .is_none()
            .then(|| *self.weno_error.last().unwrap())
    }
}

fn alpha_of(spec: &EnvSpec, s: &[Vec<f64>]) -> Option<f64> {
    env::max_wavespeed(spec.system, s, spec.gamma).ok()
}

fn fe_step<A: Agent<f64> + ?Sized>(
    spec: &EnvSpec,
    s: &[Vec<f64>],
    agent: &A,
    dt: f64,
) -> Option<Vec<Vec<f64>>> {
    let obs = env::observe(spec, s).ok()?;
    let a = agent.act(&obs).ok()?;
    let next = env::transition(spec, s, &obs, &a, dt).ok()?;
    env::all_finite(&next).then_some(next)
}

/// Evolves the agent and the WENO baseline to `t_end` (default: the IC's
/// `t_max`) and scores both against the reference after every step.
pub fn compare<A: Agent<f64> + ?Sized>(
    ic: &IcSpec,
    n: usize,
    agent: &A,
    cfg: &EvalConfig,
    t_end: Option<f64>,
) -> Result<Comparison> {
    let grid = ic.grid(n)?;
    let spec = spec_for(ic, grid, cfg.cfl)?;
    let t_end = t_end.unwrap_or(ic.t_max);
    let mu = WenoAgent {
        constants: spec.weno,
    };
    let mut reference = Reference::new(ic, n, &cfg.reference)?;
    let u0 = ic.initial_state(n)?;
    let mut rl = Some(u0.components.clone());
    let mut we = Some(u0.components);
    let mut out = Comparison {
        times: vec![0.0],
        rl_error: vec![0.0],
        weno_error: vec![0.0],
        rl_diverged_at: None,
        weno_diverged_at: None,
    };
    let mut time = 0.0;
    let mut step = 0;
    while time < t_end && (rl.is_some() || we.is_some()) {
        let a_rl = rl.as_ref().and_then(|s| alpha_of(&spec, s));
        let a_we = we.as_ref().and_then(|s| alpha_of(&spec, s));
        if rl.is_some() && a_rl.is_none() {
            rl = None;
            out.rl_diverged_at = Some(step);
        }
        if we.is_some() && a_we.is_none() {
            we = None;
            out.weno_diverged_at = Some(step);
        }
        let alpha = match (a_rl, a_we) {
            (Some(a), Some(b)) => a.max(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => break,
        };
        let mut dt = cfg.cfl * grid.dx() / alpha.max(1e-12);
        let last = time + dt >= t_end;
        if last {
            dt = t_end - time;
        }
        if let Some(s) = &rl {
            rl = fe_step(&spec, s, agent, dt);
            if rl.is_none() {
                out.rl_diverged_at = Some(step);
            }
        }
        if let Some(s) = &we {
            we = fe_step(&spec, s, &mu, dt);
            if we.is_none() {
                out.weno_diverged_at = Some(step);
            }
        }
        time = if last { t_end } else { time + dt };
        step += 1;
        let r = reference.advance_to(time)?;
        let score = |s: &Option<Vec<Vec<f64>>>| -> Result<f64> {
            match s {
                Some(c) => l2_error(
                    &FieldState {
                        components: c.clone(),
                        time,
                    },
                    &r,
                    &grid,
                ),
                None => Ok(f64::NAN),
            }
        };
        out.times.push(time);
        out.rl_error.push(score(&rl)?);
        out.weno_error.push(score(&we)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub ic: String,
    pub n: usize,
    /// `None` when the run diverged.
    pub rl_error: Option<f64>,
    pub weno_error: Option<f64>,
}

pub fn error_table<A: Agent<f64> + ?Sized>(
    agent: &A,
    ics: &[IcSpec],
    grids: &[usize],
    cfg: &EvalConfig,
) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for ic in ics {
        for &n in grids {
            let c = compare(ic, n, agent, cfg, None)?;
            rows.push(TableRow {
                ic: ic.name.clone(),
                n,
                rl_error: c.final_rl(),
                weno_error: c.final_weno(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRow {
    pub index: usize,
    pub family: String,
    pub n: usize,
    pub params: String,
    pub rl_error: Option<f64>,
    pub weno_error: Option<f64>,
}

/// Evaluates `count` seeded random environments. Diverged runs are kept
/// with a `None` error.
pub fn random_suite<A: Agent<f64> + ?Sized>(
    agent: &A,
    count: usize,
    seed: u64,
    cfg: &EvalConfig,
    max_n: Option<usize>,
) -> Result<Vec<SuiteRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let envs = ic::random_suite(count, &mut rng);
    let mut rows = Vec::with_capacity(count);
    for (index, (ic, n)) in envs.into_iter().enumerate() {
        let n = max_n.map_or(n, |m| n.min(m));
        let (rl_error, weno_error) = match compare(&ic, n, agent, cfg, None) {
            Ok(c) => (c.final_rl(), c.final_weno()),
            Err(Error::Blowup(_)) => (None, None),
            Err(e) => return Err(e),
        };
        rows.push(SuiteRow {
            index,
            family: ic.name.clone(),
            n,
            params: format!("{:?}", ic.profile),
            rl_error,
            weno_error,
        });
    }
    Ok(rows)
}

/// Spearman rank correlation of paired samples (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < idx.len() {
            let mut m = k;
            while m + 1 < idx.len() && v[idx[m + 1]] == v[idx[k]] {
                m += 1;
            }
            let avg = (k + m) as f64 / 2.0;
            for &i in &idx[k..=m] {
                r[i] = avg;
            }
            k = m + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Which step to dump actions from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepQuery {
    Index(usize),
    SecondToLast,
    Last,
}

impl std::str::FromStr for StepQuery {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "second_to_last" => Ok(StepQuery::SecondToLast),
            "last" => Ok(StepQuery::Last),
            other => other
                .parse()
                .map(StepQuery::Index)
                .map_err(|_| Error::Config(format!("bad step query `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub component: usize,
    pub interface: usize,
    pub x: f64,
    pub rl_plus: [f64; 3],
    pub rl_minus: [f64; 3],
    pub weno_plus: [f64; 3],
    pub weno_minus: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDump {
    pub step: usize,
    pub time: f64,
    pub rows: Vec<ActionRow>,
}

fn dump_rows<A: Agent<f64> + ?Sized>(
    spec: &EnvSpec,
    obs: &Observations<f64>,
    agent: &A,
) -> Result<Vec<ActionRow>> {
    let rl = agent.act(obs)?;
    let mu = env::weno_equivalent_policy(obs, &spec.weno);
    let n_if = obs.n_interfaces;
    let dx = spec.grid.dx();
    Ok((0..obs.len())
        .map(|k| ActionRow {
            component: k / n_if,
            interface: k % n_if,
            x: spec.grid.x_min() + (k % n_if) as f64 * dx,
            rl_plus: rl.plus[k],
            rl_minus: rl.minus[k],
            weno_plus: mu.plus[k],
            weno_minus: mu.minus[k],
        })
        .collect())
}

/// Runs the agent alone with CFL steps to the IC's `t_max` and records its
/// weights and the WENO weights on the same observation at the queried step.
pub fn action_dump<A: Agent<f64> + ?Sized>(
    ic: &IcSpec,
    n: usize,
    agent: &A,
    cfg: &EvalConfig,
    query: StepQuery,
) -> Result<ActionDump> {
    let grid = ic.grid(n)?;
    let spec = spec_for(ic, grid, cfg.cfl)?;
    let mut s = ic.initial_state(n)?.components;
    let mut time = 0.0;
    let mut history: Vec<(usize, f64, Observations<f64>)> = Vec::new();
    let mut step = 0;
    while time < ic.t_max {
        let obs = env::observe(&spec, &s)
            .map_err(|e| Error::Blowup(format!("step {step}: {e}")))?;
        let mut dt = spec.compute_dt(obs.alpha);
        let last = time + dt >= ic.t_max;
        if last {
            dt = ic.t_max - time;
        }
        let a = agent.act(&obs)?;
        let next = env::transition(&spec, &s, &obs, &a, dt)?;
        if !env::all_finite(&next) {
            return Err(Error::Blowup(format!("non-finite state at step {step}")));
        }
        match query {
            StepQuery::Index(k) if k == step => {
                return Ok(ActionDump {
                    step,
                    time,
                    rows: dump_rows(&spec, &obs, agent)?,
                })
            }
            StepQuery::Index(_) => {}
            _ => {
                history.push((step, time, obs));
                if history.len() > 2 {
                    history.remove(0);
                }
            }
        }
        s = next;
        time = if last { ic.t_max } else { time + dt };
        step += 1;
    }
    let pick = match query {
        StepQuery::Index(k) => {
            return Err(Error::Config(format!(
                "step {k} out of range, episode has {step} steps"
            )))
        }
        StepQuery::Last => history.last(),
        StepQuery::SecondToLast => {
            if history.len() < 2 {
                None
            } else {
                history.first()
            }
        }
    };
    let (step, time, obs) =
        pick.ok_or_else(|| Error::Config("episode too short for query".into()))?;
    Ok(ActionDump {
        step: *step,
        time: *time,
        rows: dump_rows(&spec, obs, agent)?,
    })
}
