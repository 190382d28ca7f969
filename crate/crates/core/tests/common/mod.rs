//! Shared test support: an independently written WENO5 step and random
//! states.

#![allow(dead_code)]

use bptts::env::{EnvSpec, DtMode, System, GAMMA};
use bptts::grid::{Boundary, Grid};
use rand::Rng;

/// Classical WENO5-JS with global Lax-Friedrichs splitting and one forward
/// Euler step, written out in full without the library's building blocks.
pub fn monolithic_weno_step(
    system: System,
    u: &[Vec<f64>],
    periodic: bool,
    dx: f64,
    dt: f64,
) -> Vec<Vec<f64>> {
    let n = u[0].len();
    let m = u.len();
    let flux: Vec<Vec<f64>> = match system {
        System::Burgers => vec![u[0].iter().map(|v| 0.5 * v * v).collect()],
        System::Euler => {
            let mut f = vec![vec![0.0; n]; 3];
            for j in 0..n {
                let (rho, mom, e) = (u[0][j], u[1][j], u[2][j]);
                let vel = mom / rho;
                let p = (GAMMA - 1.0) * (e - 0.5 * rho * vel * vel);
                f[0][j] = mom;
                f[1][j] = mom * vel + p;
                f[2][j] = (e + p) * vel;
            }
            f
        }
    };
    let mut alpha = 0.0f64;
    for j in 0..n {
        let s = match system {
            System::Burgers => u[0][j].abs(),
            System::Euler => {
                let rho = u[0][j];
                let vel = u[1][j] / rho;
                let p = (GAMMA - 1.0) * (u[2][j] - 0.5 * rho * vel * vel);
                vel.abs() + (GAMMA * p / rho).sqrt()
            }
        };
        alpha = alpha.max(s);
    }
    let cell = |j: isize| -> usize {
        if periodic {
            j.rem_euclid(n as isize) as usize
        } else {
            j.clamp(0, n as isize - 1) as usize
        }
    };
    let reconstruct = |v: [f64; 5]| -> f64 {
        let [v1, v2, v3, v4, v5] = v;
        let q0 = (2.0 * v1 - 7.0 * v2 + 11.0 * v3) / 6.0;
        let q1 = (-v2 + 5.0 * v3 + 2.0 * v4) / 6.0;
        let q2 = (2.0 * v3 + 5.0 * v4 - v5) / 6.0;
        let b0 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3).powi(2) + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3).powi(2);
        let b1 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4).powi(2) + 0.25 * (v2 - v4).powi(2);
        let b2 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5).powi(2) + 0.25 * (3.0 * v3 - 4.0 * v4 + v5).powi(2);
        let eps = 1e-6;
        let a0 = 0.1 / (eps + b0).powi(2);
        let a1 = 0.6 / (eps + b1).powi(2);
        let a2 = 0.3 / (eps + b2).powi(2);
        (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
    };
    let mut out = u.to_vec();
    for c in 0..m {
        let fp = |j: isize| 0.5 * (flux[c][cell(j)] + alpha * u[c][cell(j)]);
        let fm = |j: isize| 0.5 * (flux[c][cell(j)] - alpha * u[c][cell(j)]);
        // Face k sits between cells k-1 and k.
        let face: Vec<f64> = (0..=n as isize)
            .map(|k| {
                let plus = reconstruct([fp(k - 3), fp(k - 2), fp(k - 1), fp(k), fp(k + 1)]);
                let minus = reconstruct([fm(k + 2), fm(k + 1), fm(k), fm(k - 1), fm(k - 2)]);
                plus + minus
            })
            .collect();
        for j in 0..n {
            out[c][j] = u[c][j] - dt / dx * (face[j + 1] - face[j]);
        }
    }
    out
}

pub fn spec(system: System, n: usize, boundary: Boundary) -> EnvSpec {
    let grid = Grid::new(n, 0.0, 1.0, boundary).unwrap();
    EnvSpec::new(system, grid, DtMode::Fixed(1e-3), 1).unwrap()
}

pub fn random_burgers<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let base: f64 = rng.random_range(-1.0..1.0);
    vec![(0..n)
        .map(|_| {
            // Mix smooth-ish values with occasional jumps.
            if rng.random_bool(0.1) {
                base + rng.random_range(-2.0..2.0)
            } else {
                base + rng.random_range(-0.1..0.1)
            }
        })
        .collect()]
}

pub fn random_euler<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec<f64>> {
    let mut comps = vec![Vec::with_capacity(n); 3];
    for _ in 0..n {
        let rho: f64 = rng.random_range(0.1..2.0);
        let vel: f64 = rng.random_range(-1.0..1.0);
        let p: f64 = rng.random_range(0.1..2.0);
        comps[0].push(rho);
        comps[1].push(rho * vel);
        comps[2].push(p / (GAMMA - 1.0) + 0.5 * rho * vel * vel);
    }
    comps
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
