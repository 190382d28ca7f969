//! Burgers and Euler environments: observations, the forward-Euler
//! transition, the WENO-equivalent policy and the rewards.
//!
//! Storage convention: a state has `N` cells and `N+1` interfaces. Interface
//! `i` is the face between cells `i-1` and `i`; interfaces `0` and `N` are the
//! domain edges. Observations, actions and rewards are laid out
//! component-major, `index = c * (N+1) + i`.

use crate::error::{Error, Result};
use crate::grid::{ghost_extend, Boundary, FieldState, Grid};
use crate::scalar::Real;
use crate::weno::{
    interface_stencils, lax_friedrichs_split, smoothness_indicators, spatial_rhs,
    standard_weno_weights, substencil_reconstruct, weighted_interface_flux, WenoConstants, GHOST,
};

pub const GAMMA: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Burgers,
    Euler,
}

impl System {
    pub fn components(self) -> usize {
        match self {
            System::Burgers => 1,
            System::Euler => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            System::Burgers => "burgers",
            System::Euler => "euler",
        }
    }
}

impl std::str::FromStr for System {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burgers" => Ok(System::Burgers),
            "euler" => Ok(System::Euler),
            other => Err(Error::Config(format!("unknown system `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtMode {
    Fixed(f64),
    Cfl(f64),
}

/// Which trajectory the reward compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// One WENO step from the current state.
    Markovian,
    /// A WENO trajectory evolved once from the initial condition.
    FixedWeno,
    /// A reference solution evolved once from the initial condition.
    FixedTrue,
}

impl std::str::FromStr for RewardMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markovian" => Ok(RewardMode::Markovian),
            "fixed_weno" => Ok(RewardMode::FixedWeno),
            "fixed_true" => Ok(RewardMode::FixedTrue),
            other => Err(Error::Config(format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvSpec {
    pub system: System,
    pub grid: Grid,
    pub gamma: f64,
    pub dt_mode: DtMode,
    pub steps: usize,
    pub weno: WenoConstants,
}

impl EnvSpec {
    pub fn new(system: System, grid: Grid, dt_mode: DtMode, steps: usize) -> Result<EnvSpec> {
        match dt_mode {
            DtMode::Fixed(dt) if !(dt > 0.0) || !dt.is_finite() => {
                return Err(Error::Config(format!("fixed dt must be > 0, got {dt}")))
            }
            DtMode::Cfl(c) if !(c > 0.0 && c <= 1.0) => {
                return Err(Error::Config(format!("cfl number must be in (0, 1], got {c}")))
            }
            _ => {}
        }
        Ok(EnvSpec {
            system,
            grid,
            gamma: GAMMA,
            dt_mode,
            steps,
            weno: WenoConstants::default(),
        })
    }

    pub fn n_interfaces(&self) -> usize {
        self.grid.n() + 1
    }

    /// `dt` for a state with global wavespeed `alpha`.
    pub fn compute_dt(&self, alpha: f64) -> f64 {
        match self.dt_mode {
            DtMode::Fixed(dt) => dt,
            DtMode::Cfl(c) => c * self.grid.dx() / alpha.max(1e-12),
        }
    }
}

/// Raw split-flux stencils at every interface of every component.
#[derive(Debug, Clone)]
pub struct Observations<T> {
    pub n_components: usize,
    pub n_interfaces: usize,
    pub plus: Vec<[T; 5]>,
    pub minus: Vec<[T; 5]>,
    /// Global Lax-Friedrichs speed used for the split.
    pub alpha: T,
}

impl<T: Real> Observations<T> {
    pub fn len(&self) -> usize {
        self.plus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plus.is_empty()
    }

    /// Policy inputs `(plus, minus)`, optionally scaled per stencil by its
    /// max absolute entry.
    pub fn features(&self, normalize: bool) -> Vec<[T; 10]> {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| {
                let (p, m) = if normalize {
                    (normalize_stencil(p), normalize_stencil(m))
                } else {
                    (*p, *m)
                };
                std::array::from_fn(|k| if k < 5 { p[k] } else { m[k - 5] })
            })
            .collect()
    }
}

/// Divides a stencil by its max absolute entry; identity when all zero.
pub fn normalize_stencil<T: Real>(s: &[T; 5]) -> [T; 5] {
    let mut m = s[0].abs();
    for v in &s[1..] {
        m = m.max(v.abs());
    }
    if m.value() == 0.0 {
        *s
    } else {
        std::array::from_fn(|k| s[k] / m)
    }
}

/// Per-interface convex weights for both flux signs, laid out like
/// [`Observations`].
#[derive(Debug, Clone)]
pub struct Actions<T> {
    pub plus: Vec<[T; 3]>,
    pub minus: Vec<[T; 3]>,
}

/// Anything that maps observations to convex sub-stencil weights.
pub trait Agent<T: Real> {
    fn act(&self, obs: &Observations<T>) -> Result<Actions<T>>;
}

/// The classical WENO weights, computed on raw stencils.
#[derive(Debug, Clone, Copy, Default)]
pub struct WenoAgent {
    pub constants: WenoConstants,
}

impl<T: Real> Agent<T> for WenoAgent {
    fn act(&self, obs: &Observations<T>) -> Result<Actions<T>> {
        Ok(weno_equivalent_policy(obs, &self.constants))
    }
}

/// `(1/3, 1/3, 1/3)` everywhere; the untrained policy's output.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformAgent;

impl<T: Real> Agent<T> for UniformAgent {
    fn act(&self, obs: &Observations<T>) -> Result<Actions<T>> {
        let third = obs.alpha.constant(1.0 / 3.0);
        Ok(Actions {
            plus: vec![[third; 3]; obs.len()],
            minus: vec![[third; 3]; obs.len()],
        })
    }
}

pub fn weno_equivalent_policy<T: Real>(obs: &Observations<T>, c: &WenoConstants) -> Actions<T> {
    let w = |s: &[T; 5]| standard_weno_weights(&smoothness_indicators(s), c);
    Actions {
        plus: obs.plus.iter().map(w).collect(),
        minus: obs.minus.iter().map(w).collect(),
    }
}

pub fn primitive_to_conserved(rho: f64, u: f64, p: f64, gamma: f64) -> Result<[f64; 3]> {
    if !(rho > 0.0) || !(p > 0.0) {
        return Err(Error::Physical(format!(
            "non-positive density {rho} or pressure {p}"
        )));
    }
    let e = p / (rho * (gamma - 1.0));
    Ok([rho, rho * u, rho * (e + 0.5 * u * u)])
}

pub fn conserved_to_primitive(q: [f64; 3], gamma: f64) -> Result<[f64; 3]> {
    let [rho, m, big_e] = q;
    if !(rho > 0.0) {
        return Err(Error::Physical(format!("non-positive density {rho}")));
    }
    let u = m / rho;
    let p = (gamma - 1.0) * (big_e - 0.5 * rho * u * u);
    if !(p > 0.0) {
        return Err(Error::Physical(format!("non-positive pressure {p}")));
    }
    Ok([rho, u, p])
}

/// Euler flux `(ρu, ρu² + p, u(E + p))` of one conserved cell.
pub fn euler_flux<T: Real>(rho: T, m: T, big_e: T, gamma: f64) -> [T; 3] {
    let u = m / rho;
    let p = (big_e - m * u * 0.5) * (gamma - 1.0);
    [m, m * u + p, (big_e + p) * u]
}

fn check_euler(comps: &[Vec<impl Real>], gamma: f64) -> Result<()> {
    for j in 0..comps[0].len() {
        let rho = comps[0][j].value();
        let m = comps[1][j].value();
        let e = comps[2][j].value();
        let p = (gamma - 1.0) * (e - 0.5 * m * m / rho);
        if !(rho > 0.0) || !(p > 0.0) {
            return Err(Error::Physical(format!(
                "cell {j}: density {rho}, pressure {p}"
            )));
        }
    }
    Ok(())
}

/// Global Lax-Friedrichs speed `max|f'(u)|`.
pub fn max_wavespeed<T: Real>(system: System, comps: &[Vec<T>], gamma: f64) -> Result<T> {
    match system {
        System::Burgers => {
            let u = &comps[0];
            let mut a = u[0].abs();
            for v in &u[1..] {
                a = a.max(v.abs());
            }
            Ok(a)
        }
        System::Euler => {
            check_euler(comps, gamma)?;
            let speed = |j: usize| {
                let (rho, m, e) = (comps[0][j], comps[1][j], comps[2][j]);
                let u = m / rho;
                let p = (e - m * u * 0.5) * (gamma - 1.0);
                u.abs() + (p * gamma / rho).sqrt()
            };
            let mut a = speed(0);
            for j in 1..comps[0].len() {
                a = a.max(speed(j));
            }
            Ok(a)
        }
    }
}

/// Cell-wise physical flux per component.
pub fn physical_flux<T: Real>(system: System, comps: &[Vec<T>], gamma: f64) -> Vec<Vec<T>> {
    match system {
        System::Burgers => vec![comps[0].iter().map(|u| u.square() * 0.5).collect()],
        System::Euler => {
            let n = comps[0].len();
            let mut out = vec![Vec::with_capacity(n); 3];
            for j in 0..n {
                let f = euler_flux(comps[0][j], comps[1][j], comps[2][j], gamma);
                for c in 0..3 {
                    out[c].push(f[c]);
                }
            }
            out
        }
    }
}

fn check_shape<T>(spec: &EnvSpec, comps: &[Vec<T>]) -> Result<()> {
    let n = spec.grid.n();
    if comps.len() != spec.system.components() || comps.iter().any(|c| c.len() != n) {
        return Err(Error::Shape(format!(
            "{} state needs {}x{} values",
            spec.system.name(),
            spec.system.components(),
            n
        )));
    }
    Ok(())
}

pub fn observe<T: Real>(spec: &EnvSpec, comps: &[Vec<T>]) -> Result<Observations<T>> {
    check_shape(spec, comps)?;
    let alpha = max_wavespeed(spec.system, comps, spec.gamma)?;
    let flux = physical_flux(spec.system, comps, spec.gamma);
    let n_if = spec.n_interfaces();
    let mut plus = Vec::with_capacity(n_if * comps.len());
    let mut minus = Vec::with_capacity(n_if * comps.len());
    let boundary = spec.grid.boundary();
    for (f, u) in flux.iter().zip(comps) {
        let (fp, fm): (Vec<T>, Vec<T>) = f
            .iter()
            .zip(u)
            .map(|(&f, &u)| lax_friedrichs_split(f, u, alpha))
            .unzip();
        let fp = ghost_extend(&fp, boundary, GHOST)?;
        let fm = ghost_extend(&fm, boundary, GHOST)?;
        for i in 0..n_if {
            let (p, m) = interface_stencils(&fp, &fm, i);
            plus.push(p);
            minus.push(m);
        }
    }
    Ok(Observations {
        n_components: comps.len(),
        n_interfaces: n_if,
        plus,
        minus,
        alpha,
    })
}

/// Semi-discrete right-hand side `-(F_{j+1/2} - F_{j-1/2}) / dx` per
/// component for the given weights.
pub fn rhs<T: Real>(
    spec: &EnvSpec,
    obs: &Observations<T>,
    actions: &Actions<T>,
) -> Result<Vec<Vec<T>>> {
    if actions.plus.len() != obs.len() || actions.minus.len() != obs.len() {
        return Err(Error::Shape(format!(
            "{} actions for {} observations",
            actions.plus.len(),
            obs.len()
        )));
    }
    let n_if = obs.n_interfaces;
    let dx = spec.grid.dx();
    (0..obs.n_components)
        .map(|c| {
            let fluxes: Vec<T> = (c * n_if..(c + 1) * n_if)
                .map(|k| {
                    weighted_interface_flux(
                        &obs.plus[k],
                        &obs.minus[k],
                        &actions.plus[k],
                        &actions.minus[k],
                    )
                })
                .collect();
            spatial_rhs(&fluxes, dx)
        })
        .collect()
}

/// One forward-Euler step `u + dt * rhs` with the given weights. Does not
/// check finiteness; see [`all_finite`].
pub fn transition<T: Real>(
    spec: &EnvSpec,
    comps: &[Vec<T>],
    obs: &Observations<T>,
    actions: &Actions<T>,
    dt: f64,
) -> Result<Vec<Vec<T>>> {
    check_shape(spec, comps)?;
    let r = rhs(spec, obs, actions)?;
    Ok(comps
        .iter()
        .zip(r)
        .map(|(u, r)| u.iter().zip(r).map(|(&u, r)| u + r * dt).collect())
        .collect())
}

pub fn all_finite<T: Real>(comps: &[Vec<T>]) -> bool {
    comps.iter().flatten().all(|v| v.value().is_finite())
}

/// Per-interface reward `-(|Δ_left| + |Δ_right|) / 2` with
/// `Δ = next - anchor`, averaged over components.
pub fn reward<T: Real>(next: &[Vec<T>], anchor: &[Vec<T>]) -> Result<Vec<T>> {
    if next.len() != anchor.len() || next.iter().zip(anchor).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Shape("reward branches differ in shape".into()));
    }
    let delta: Vec<Vec<T>> = next
        .iter()
        .zip(anchor)
        .map(|(u, w)| u.iter().zip(w).map(|(&a, &b)| a - b).collect())
        .collect();
    Ok(reward_from_difference(&delta))
}

/// `u_next - w_next` for two weight sets applied to the same observation,
/// computed from the weight differences so the O(1) state values never
/// cancel: `Δ_j = -dt/dx (D_{j+1/2} - D_{j-1/2})`,
/// `D = Σ_k (ω_k - μ_k) f̂_k` summed over both flux signs.
pub fn branch_difference<T: Real>(
    spec: &EnvSpec,
    obs: &Observations<T>,
    actions: &Actions<T>,
    anchor: &Actions<T>,
    dt: f64,
) -> Result<Vec<Vec<T>>> {
    if actions.plus.len() != obs.len() || anchor.plus.len() != obs.len() {
        return Err(Error::Shape("actions and observations differ in length".into()));
    }
    let n_if = obs.n_interfaces;
    let scale = -1.0 / spec.grid.dx();
    let diff = |s: &[T; 5], w: &[T; 3], m: &[T; 3]| {
        let f = substencil_reconstruct(s);
        (w[0] - m[0]) * f[0] + (w[1] - m[1]) * f[1] + (w[2] - m[2]) * f[2]
    };
    Ok((0..obs.n_components)
        .map(|c| {
            let d: Vec<T> = (c * n_if..(c + 1) * n_if)
                .map(|k| {
                    diff(&obs.plus[k], &actions.plus[k], &anchor.plus[k])
                        + diff(&obs.minus[k], &actions.minus[k], &anchor.minus[k])
                })
                .collect();
            d.windows(2).map(|w| (w[1] - w[0]) * scale * dt).collect()
        })
        .collect())
}

/// Per-interface reward from per-cell differences `Δ`, averaged over
/// components. Edge interfaces keep only their single interior cell term.
pub fn reward_from_difference<T: Real>(delta: &[Vec<T>]) -> Vec<T> {
    let n = delta[0].len();
    let per_comp: Vec<Vec<T>> = delta
        .iter()
        .map(|c| {
            let d: Vec<T> = c.iter().map(|v| v.abs()).collect();
            (0..=n)
                .map(|i| {
                    if i == 0 {
                        -(d[0] * 0.5)
                    } else if i == n {
                        -(d[n - 1] * 0.5)
                    } else {
                        -((d[i - 1] + d[i]) * 0.5)
                    }
                })
                .collect()
        })
        .collect();
    if per_comp.len() == 1 {
        return per_comp.into_iter().next().unwrap();
    }
    let k = 1.0 / per_comp.len() as f64;
    (0..=n)
        .map(|i| {
            let mut s = per_comp[0][i];
            for c in &per_comp[1..] {
                s = s + c[i];
            }
            s * k
        })
        .collect()
}

/// Markovian reward of `actions` against one WENO step from the same state.
pub fn reward_markovian<T: Real>(
    spec: &EnvSpec,
    obs: &Observations<T>,
    actions: &Actions<T>,
    dt: f64,
    stop_anchor_grad: bool,
) -> Result<Vec<T>> {
    let mut mu = weno_equivalent_policy(obs, &spec.weno);
    if stop_anchor_grad {
        for w in mu.plus.iter_mut().chain(mu.minus.iter_mut()) {
            *w = w.map(|v| v.detach());
        }
    }
    let delta = branch_difference(spec, obs, actions, &mu, dt)?;
    Ok(reward_from_difference(&delta))
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct Step<T> {
    pub next: Vec<Vec<T>>,
    /// One WENO step from the same state, always computed.
    pub weno_next: Vec<Vec<T>>,
    pub actions: Actions<T>,
    pub dt: f64,
    pub alpha: f64,
}

/// Observes, acts and advances once; also advances the WENO branch.
pub fn step<T: Real, A: Agent<T> + ?Sized>(
    spec: &EnvSpec,
    comps: &[Vec<T>],
    agent: &A,
    dt_override: Option<f64>,
) -> Result<Step<T>> {
    let obs = observe(spec, comps)?;
    let alpha = obs.alpha.value();
    let dt = dt_override.unwrap_or_else(|| spec.compute_dt(alpha));
    let actions = agent.act(&obs)?;
    let next = transition(spec, comps, &obs, &actions, dt)?;
    let mu = weno_equivalent_policy(&obs, &spec.weno);
    let weno_next = transition(spec, comps, &obs, &mu, dt)?;
    Ok(Step {
        next,
        weno_next,
        actions,
        dt,
        alpha,
    })
}

/// Evolves a plain state with an agent for `steps` steps.
pub fn evolve<A: Agent<f64> + ?Sized>(
    spec: &EnvSpec,
    initial: &FieldState,
    agent: &A,
    steps: usize,
) -> Result<FieldState> {
    let mut comps = initial.components.clone();
    let mut time = initial.time;
    for t in 0..steps {
        let obs = observe(spec, &comps).map_err(|e| Error::Blowup(format!("step {t}: {e}")))?;
        let dt = spec.compute_dt(obs.alpha);
        let actions = agent.act(&obs)?;
        comps = transition(spec, &comps, &obs, &actions, dt)?;
        if !all_finite(&comps) {
            return Err(Error::Blowup(format!("non-finite state at step {t}")));
        }
        time += dt;
    }
    FieldState::new(comps, time)
}

/// Convenience: the spec's boundary.
pub fn boundary_of(spec: &EnvSpec) -> Boundary {
    spec.grid.boundary()
}
