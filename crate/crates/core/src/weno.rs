//! Fifth-order WENO kernels: flux splitting, smoothness indicators,
//! sub-stencil reconstruction and the classical nonlinear weights.
//!
//! Everything here is generic over [`Real`] so the same code records onto a
//! tape or runs on plain floats. The minus-side stencil is stored mirrored,
//! `(f-_{j+3}, .., f-_{j-1})`, so one reconstruction routine serves both
//! signs.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ghost cells per side needed by a 5-point stencil at every interface.
pub const GHOST: usize = 3;

/// Optimal linear weights of the three sub-stencils.
pub const D: [f64; 3] = [0.1, 0.6, 0.3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WenoConstants {
    pub d: [f64; 3],
    pub epsilon: f64,
    pub p: u32,
}

impl Default for WenoConstants {
    fn default() -> Self {
        WenoConstants {
            d: D,
            epsilon: 1e-6,
            p: 2,
        }
    }
}

impl WenoConstants {
    pub fn new(epsilon: f64, p: u32) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Config(format!("weno epsilon must be > 0, got {epsilon}")));
        }
        if p < 1 {
            return Err(Error::Config("weno exponent p must be >= 1".into()));
        }
        Ok(WenoConstants {
            d: D,
            epsilon,
            p,
        })
    }
}

/// `f± = (f ± α u) / 2`.
#[inline]
pub fn lax_friedrichs_split<T: Real>(f: T, u: T, alpha: T) -> (T, T) {
    let au = alpha * u;
    ((f + au) * 0.5, (f - au) * 0.5)
}

#[inline]
pub fn smoothness_indicators<T: Real>(s: &[T; 5]) -> [T; 3] {
    const C: f64 = 13.0 / 12.0;
    let b0 = (s[0] - s[1] * 2.0 + s[2]).square() * C + (s[0] - s[1] * 4.0 + s[2] * 3.0).square() * 0.25;
    let b1 = (s[1] - s[2] * 2.0 + s[3]).square() * C + (s[1] - s[3]).square() * 0.25;
    let b2 = (s[2] - s[3] * 2.0 + s[4]).square() * C + (s[2] * 3.0 - s[3] * 4.0 + s[4]).square() * 0.25;
    [b0, b1, b2]
}

#[inline]
pub fn substencil_reconstruct<T: Real>(s: &[T; 5]) -> [T; 3] {
    const SIXTH: f64 = 1.0 / 6.0;
    [
        (s[0] * 2.0 - s[1] * 7.0 + s[2] * 11.0) * SIXTH,
        (-s[1] + s[2] * 5.0 + s[3] * 2.0) * SIXTH,
        (s[2] * 2.0 + s[3] * 5.0 - s[4]) * SIXTH,
    ]
}

/// `ω_k = α_k / Σ α_m`, `α_k = d_k / (ε + β_k)^p`.
pub fn standard_weno_weights<T: Real>(beta: &[T; 3], c: &WenoConstants) -> [T; 3] {
    let alpha: [T; 3] = std::array::from_fn(|k| {
        let base = beta[k] + c.epsilon;
        let mut denom = base;
        for _ in 1..c.p {
            denom = denom * base;
        }
        base.constant(c.d[k]) / denom
    });
    let total = alpha[0] + alpha[1] + alpha[2];
    [alpha[0] / total, alpha[1] / total, alpha[2] / total]
}

/// Convex combination of the three sub-stencil reconstructions.
#[inline]
pub fn combine<T: Real>(s: &[T; 5], w: &[T; 3]) -> T {
    let f = substencil_reconstruct(s);
    w[0] * f[0] + w[1] * f[1] + w[2] * f[2]
}

/// `Σ ω+_k f̂+_k + Σ ω-_k f̂-_k`.
pub fn weighted_interface_flux<T: Real>(
    plus: &[T; 5],
    minus: &[T; 5],
    w_plus: &[T; 3],
    w_minus: &[T; 3],
) -> T {
    combine(plus, w_plus) + combine(minus, w_minus)
}

/// Interface flux with the classical weights on both sides.
pub fn weno_interface_flux<T: Real>(plus: &[T; 5], minus: &[T; 5], c: &WenoConstants) -> T {
    let wp = standard_weno_weights(&smoothness_indicators(plus), c);
    let wm = standard_weno_weights(&smoothness_indicators(minus), c);
    weighted_interface_flux(plus, minus, &wp, &wm)
}

/// Split-flux stencils at storage interface `i` (the face between cells
/// `i-1` and `i`), read from arrays padded with [`GHOST`] cells per side.
/// Cell `j` lives at padded index `j + GHOST`.
#[inline]
pub fn interface_stencils<T: Copy>(f_plus: &[T], f_minus: &[T], i: usize) -> ([T; 5], [T; 5]) {
    let plus = [
        f_plus[i],
        f_plus[i + 1],
        f_plus[i + 2],
        f_plus[i + 3],
        f_plus[i + 4],
    ];
    let minus = [
        f_minus[i + 5],
        f_minus[i + 4],
        f_minus[i + 3],
        f_minus[i + 2],
        f_minus[i + 1],
    ];
    (plus, minus)
}

/// Cell indices `(plus, mirrored minus)` read at storage interface `i`,
/// resolved through the boundary. Diagnostic helper.
pub fn stencil_cells(n: usize, i: usize, periodic: bool) -> ([usize; 5], [usize; 5]) {
    let cell = |k: isize| -> usize {
        if periodic {
            k.rem_euclid(n as isize) as usize
        } else {
            k.clamp(0, n as isize - 1) as usize
        }
    };
    let i = i as isize;
    (
        std::array::from_fn(|k| cell(i - 3 + k as isize)),
        std::array::from_fn(|k| cell(i + 2 - k as isize)),
    )
}

/// Per-cell `-(F_{j+1/2} - F_{j-1/2}) / dx` from `N+1` interface fluxes.
pub fn spatial_rhs<T: Real>(fluxes: &[T], dx: f64) -> Result<Vec<T>> {
    if fluxes.len() < 2 {
        return Err(Error::Shape(format!(
            "spatial_rhs needs N+1 >= 2 fluxes, got {}",
            fluxes.len()
        )));
    }
    let scale = -1.0 / dx;
    Ok(fluxes.windows(2).map(|w| (w[1] - w[0]) * scale).collect())
}
