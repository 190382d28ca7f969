//! Uniform 1-D grid, ghost cells and the error norm.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum cell count: one 5-point stencil plus both interface offsets.
pub const MIN_CELLS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Outflow,
}

impl std::str::FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "outflow" => Ok(Boundary::Outflow),
            other => Err(Error::Config(format!("unknown boundary `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    x_min: f64,
    x_max: f64,
    boundary: Boundary,
}

impl Grid {
    pub fn new(n: usize, x_min: f64, x_max: f64, boundary: Boundary) -> Result<Grid> {
        if n < MIN_CELLS {
            return Err(Error::Config(format!(
                "grid needs at least {MIN_CELLS} cells, got {n}"
            )));
        }
        if !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::Config(format!("bad domain [{x_min}, {x_max}]")));
        }
        Ok(Grid {
            n,
            x_min,
            x_max,
            boundary,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Cell centres `x_min + (j + 1/2) dx`.
    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n)
            .map(|j| self.x_min + (j as f64 + 0.5) * dx)
            .collect()
    }

    /// Same domain and boundary with a different cell count.
    pub fn with_cells(&self, n: usize) -> Result<Grid> {
        Grid::new(n, self.x_min, self.x_max, self.boundary)
    }
}

/// Per-cell conserved quantities at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub components: Vec<Vec<f64>>,
    pub time: f64,
}

impl FieldState {
    pub fn new(components: Vec<Vec<f64>>, time: f64) -> Result<FieldState> {
        let n = components.first().map_or(0, Vec::len);
        if components.is_empty() || components.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("ragged or empty components".into()));
        }
        Ok(FieldState { components, time })
    }

    pub fn scalar(values: Vec<f64>) -> FieldState {
        FieldState {
            components: vec![values],
            time: 0.0,
        }
    }

    pub fn n(&self) -> usize {
        self.components[0].len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    /// `Σ_j u_j dx` per component.
    pub fn integral(&self, dx: f64) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().sum::<f64>() * dx)
            .collect()
    }
}

/// Pads one component with `width` ghost cells on each side.
pub fn ghost_extend<T: Copy>(values: &[T], boundary: Boundary, width: usize) -> Result<Vec<T>> {
    let n = values.len();
    if width == 0 || width >= n {
        return Err(Error::Config(format!(
            "ghost width {width} must be in 1..{n}"
        )));
    }
    let mut out = Vec::with_capacity(n + 2 * width);
    match boundary {
        Boundary::Periodic => {
            out.extend_from_slice(&values[n - width..]);
            out.extend_from_slice(values);
            out.extend_from_slice(&values[..width]);
        }
        Boundary::Outflow => {
            out.extend(std::iter::repeat_n(values[0], width));
            out.extend_from_slice(values);
            out.extend(std::iter::repeat_n(values[n - 1], width));
        }
    }
    Ok(out)
}

/// `sqrt(dx Σ_j (a_j - b_j)^2)` per component, averaged over components.
pub fn l2_error(a: &FieldState, b: &FieldState, grid: &Grid) -> Result<f64> {
    if a.n_components() != b.n_components() || a.n() != b.n() || a.n() != grid.n() {
        return Err(Error::Shape(format!(
            "l2_error: {}x{} vs {}x{} on N={}",
            a.n_components(),
            a.n(),
            b.n_components(),
            b.n(),
            grid.n()
        )));
    }
    let dx = grid.dx();
    let total: f64 = a
        .components
        .iter()
        .zip(&b.components)
        .map(|(ca, cb)| {
            let ss: f64 = ca.iter().zip(cb).map(|(x, y)| (x - y) * (x - y)).sum();
            (dx * ss).sqrt()
        })
        .sum();
    Ok(total / a.n_components() as f64)
}

/// Mean of `|v|` over all entries, used for reward summaries.
pub fn mean_abs<T: Real>(values: &[T]) -> f64 {
    values.iter().map(|v| v.value().abs()).sum::<f64>() / values.len() as f64
}
