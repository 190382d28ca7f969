//! Named and randomized initial conditions.

use std::f64::consts::PI;

use rand::Rng;

use crate::env::{primitive_to_conserved, System, GAMMA};
use crate::error::{Error, Result};
use crate::grid::{Boundary, FieldState, Grid};

#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    StandingSine,
    Rarefaction,
    AcceleratingShock,
    DoubleSine,
    Gaussian,
    Tophat,
    RandomSine { a: f64, k: u32 },
    RandomShock { c: f64, a: f64, phi: f64 },
    RandomRarefaction { c: f64, a: f64, b: f64 },
    /// `mean + Σ_k amp_k sin(2π k x + phase_k)`, periodic on [0, 1].
    Fourier { mean: f64, modes: Vec<(f64, f64)> },
    Constant(f64),
    /// Shock tube: primitive `(ρ, u, p)` left of the midpoint, right beyond.
    Riemann { left: [f64; 3], right: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcSpec {
    pub name: String,
    pub system: System,
    pub profile: Profile,
    pub boundary: Boundary,
    pub x_min: f64,
    pub x_max: f64,
    pub t_max: f64,
}

pub const BURGERS_NAMED: [&str; 6] = [
    "standing_sine",
    "rarefaction",
    "accelerating_shock",
    "double_sine",
    "gaussian",
    "tophat",
];

pub const BURGERS_TRAINING: [&str; 3] = ["standing_sine", "rarefaction", "accelerating_shock"];

pub const EULER_NAMED: [&str; 4] = ["sod", "sod2", "lax", "sonic_rarefaction"];

/// Burgers evaluation horizon: twice a 250 x 0.0004 s training episode.
pub const BURGERS_T_MAX: f64 = 0.2;

fn burgers(name: &str, profile: Profile, boundary: Boundary) -> IcSpec {
    IcSpec {
        name: name.to_string(),
        system: System::Burgers,
        profile,
        boundary,
        x_min: 0.0,
        x_max: 1.0,
        t_max: BURGERS_T_MAX,
    }
}

fn tube(name: &str, left: [f64; 3], right: [f64; 3], x: (f64, f64), t_max: f64) -> IcSpec {
    IcSpec {
        name: name.to_string(),
        system: System::Euler,
        profile: Profile::Riemann { left, right },
        boundary: Boundary::Outflow,
        x_min: x.0,
        x_max: x.1,
        t_max,
    }
}

/// Looks up a named initial condition.
pub fn named(name: &str) -> Result<IcSpec> {
    use Boundary::*;
    let ic = match name {
        "standing_sine" => burgers(name, Profile::StandingSine, Periodic),
        "rarefaction" => burgers(name, Profile::Rarefaction, Outflow),
        "accelerating_shock" => burgers(name, Profile::AcceleratingShock, Outflow),
        "double_sine" => burgers(name, Profile::DoubleSine, Periodic),
        "gaussian" => burgers(name, Profile::Gaussian, Outflow),
        "tophat" => burgers(name, Profile::Tophat, Outflow),
        "sod" => tube(name, [1.0, 0.0, 1.0], [0.125, 0.0, 0.1], (-0.5, 0.5), 0.2),
        "sod2" => tube(name, [1.0, 0.0, 1.0], [0.01, 0.0, 0.01], (-0.5, 0.5), 0.2),
        "lax" => tube(
            name,
            [0.445, 0.689, 3.528],
            [0.5, 0.0, 0.571],
            (-0.5, 0.5),
            0.14,
        ),
        "sonic_rarefaction" => tube(
            name,
            [3.857, 0.92, 10.333],
            [1.0, 3.55, 1.0],
            (-5.0, 5.0),
            0.7,
        ),
        other => return Err(Error::Config(format!("unknown initial condition `{other}`"))),
    };
    Ok(ic)
}

impl IcSpec {
    pub fn grid(&self, n: usize) -> Result<Grid> {
        Grid::new(n, self.x_min, self.x_max, self.boundary)
    }

    /// Pointwise value(s) at `x`: one entry for Burgers, conserved triple
    /// for Euler.
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        let u = match &self.profile {
            Profile::StandingSine => 0.1 * (1.0 / (2.0 * PI)) * (2.0 * PI * x).sin(),
            Profile::Rarefaction => {
                if x <= 0.5 {
                    1.0
                } else {
                    2.0
                }
            }
            Profile::AcceleratingShock => {
                if x <= 0.25 {
                    3.0
                } else {
                    3.0 * (x - 1.0)
                }
            }
            Profile::DoubleSine => 0.25 + 0.5 * (4.0 * PI * x).sin(),
            Profile::Gaussian => 1.0 + (-60.0 * (x - 0.5) * (x - 0.5)).exp(),
            Profile::Tophat => {
                if x > 1.0 / 3.0 && x < 2.0 / 3.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::RandomSine { a, k } => 3.5 - a.abs() + a * (*k as f64 * PI * x).sin(),
            Profile::RandomShock { c, a, phi } => {
                if x <= *phi {
                    *c
                } else {
                    a * (x - 1.0)
                }
            }
            Profile::RandomRarefaction { c, a, b } => c + a * (b * (x - 0.5)).tanh(),
            Profile::Fourier { mean, modes } => {
                mean + modes
                    .iter()
                    .enumerate()
                    .map(|(k, (amp, ph))| amp * (2.0 * PI * (k + 1) as f64 * x + ph).sin())
                    .sum::<f64>()
            }
            Profile::Constant(c) => *c,
            Profile::Riemann { left, right } => {
                let mid = 0.5 * (self.x_min + self.x_max);
                let s = if x <= mid { left } else { right };
                return Ok(primitive_to_conserved(s[0], s[1], s[2], GAMMA)?.to_vec());
            }
        };
        Ok(vec![u])
    }

    /// Point values at the cell centres of an `n`-cell grid.
    pub fn initial_state(&self, n: usize) -> Result<FieldState> {
        let grid = self.grid(n)?;
        let mut comps = vec![Vec::with_capacity(n); self.system.components()];
        for x in grid.centers() {
            for (c, v) in comps.iter_mut().zip(self.eval(x)?) {
                c.push(v);
            }
        }
        FieldState::new(comps, 0.0)
    }

    /// Cell averages over an `n`-cell grid by `sub`-point midpoint rule.
    pub fn cell_averages(&self, n: usize, sub: usize) -> Result<FieldState> {
        let grid = self.grid(n)?;
        let h = grid.dx() / sub as f64;
        let mut comps = vec![Vec::with_capacity(n); self.system.components()];
        for j in 0..n {
            let mut acc = vec![0.0; comps.len()];
            for s in 0..sub {
                let x = grid.x_min() + j as f64 * grid.dx() + (s as f64 + 0.5) * h;
                for (a, v) in acc.iter_mut().zip(self.eval(x)?) {
                    *a += v;
                }
            }
            for (c, a) in comps.iter_mut().zip(acc) {
                c.push(a / sub as f64);
            }
        }
        FieldState::new(comps, 0.0)
    }
}

/// Smooth periodic Burgers profile with three random modes, bounded away
/// from zero so `|u|` stays differentiable. Used by gradient checks.
pub fn random_fourier<R: Rng>(rng: &mut R) -> IcSpec {
    let modes = (0..3)
        .map(|_| (rng.random_range(-0.3..0.3), rng.random_range(0.0..2.0 * PI)))
        .collect();
    burgers(
        "random_fourier",
        Profile::Fourier {
            mean: rng.random_range(1.0..2.0),
            modes,
        },
        Boundary::Periodic,
    )
}

pub const RANDOM_FAMILIES: [&str; 3] = ["random_sine", "random_shock", "random_rarefaction"];

/// Draws one member of a random family.
pub fn random_family<R: Rng>(family: usize, rng: &mut R) -> IcSpec {
    match family {
        0 => {
            let mag = rng.random_range(0.2..=1.0);
            let a = if rng.random_bool(0.5) { -mag } else { mag };
            let k = 2 * rng.random_range(1..=5u32);
            burgers(RANDOM_FAMILIES[0], Profile::RandomSine { a, k }, Boundary::Periodic)
        }
        1 => {
            let c = rng.random_range(0.5..=5.0);
            let a = rng.random_range(0.0..=5.0);
            let phi = rng.random_range(0.0..=0.5);
            burgers(
                RANDOM_FAMILIES[1],
                Profile::RandomShock { c, a, phi },
                Boundary::Outflow,
            )
        }
        _ => {
            let c = rng.random_range(-1.0..=1.0);
            let a = rng.random_range(0.25..=1.5);
            let b = rng.random_range(20.0..=100.0);
            burgers(
                RANDOM_FAMILIES[2],
                Profile::RandomRarefaction { c, a, b },
                Boundary::Outflow,
            )
        }
    }
}

/// `N = round(2^U)`, `U ~ Uniform[6, 10]`.
pub fn sample_grid_size<R: Rng>(rng: &mut R) -> usize {
    let u: f64 = rng.random_range(6.0..=10.0);
    2f64.powf(u).round() as usize
}

/// One random evaluation environment: a family drawn uniformly and a
/// log-uniform grid size.
pub fn sample_random_env<R: Rng>(rng: &mut R) -> (IcSpec, usize) {
    let family = rng.random_range(0..3usize);
    let ic = random_family(family, rng);
    (ic, sample_grid_size(rng))
}

/// The standard random suite: `count / 3` members of each family (the
/// remainder filled round-robin), each with its own grid size, in a fixed
/// interleaved order.
pub fn random_suite<R: Rng>(count: usize, rng: &mut R) -> Vec<(IcSpec, usize)> {
    (0..count)
        .map(|i| {
            let ic = random_family(i % 3, rng);
            (ic, sample_grid_size(rng))
        })
        .collect()
}
