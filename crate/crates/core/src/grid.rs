//! Uniform midpoint grids on an interval and real fields over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryMode {
    /// Kernel sees the signed difference `xᵢ - xⱼ`; the domain is cut off.
    Truncated,
    /// Differences are wrapped to the minimal image on the circle of length `b - a`.
    Periodic,
}

/// Midpoint grid `xⱼ = a + (j + 1/2) h`, `h = (b - a) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    h: f64,
    boundary: BoundaryMode,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize, boundary: BoundaryMode) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidDomain(format!("need finite a < b, got [{a}, {b}]")));
        }
        if n == 0 {
            return Err(Error::InvalidDomain("node count must be >= 1".into()));
        }
        Ok(Self { a, b, n, h: (b - a) / n as f64, boundary })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn boundary(&self) -> BoundaryMode {
        self.boundary
    }

    pub fn node(&self, j: usize) -> f64 {
        self.a + (j as f64 + 0.5) * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Offset between nodes `i` and `j` as seen by the kernel.
    pub fn offset(&self, i: usize, j: usize) -> f64 {
        let d = (i as f64 - j as f64) * self.h;
        match self.boundary {
            BoundaryMode::Truncated => d,
            BoundaryMode::Periodic => {
                let l = self.length();
                d - l * (d / l).round()
            }
        }
    }

    /// `h · Σ fⱼ gⱼ`
    pub fn inner_raw(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h * f.iter().zip(g).map(|(x, y)| x * y).sum::<f64>()
    }

    pub fn norm_raw(&self, f: &[f64]) -> f64 {
        self.inner_raw(f, f).sqrt()
    }
}

/// A state `u ∈ H = L²(B)` sampled at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { left: values.len(), right: grid.len() });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c · other`
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + c * y).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(-1.0, other)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(1.0, other)
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn norm_h(&self) -> f64 {
        self.grid.norm_raw(&self.values)
    }
}

/// L² inner product by midpoint quadrature.
pub fn inner_h(f: &Field, g: &Field) -> Result<f64> {
    f.check_grid(g)?;
    Ok(f.grid.inner_raw(&f.values, &g.values))
}
