//! Uniform grids on [0, 1] and the functions and surfaces sampled on them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// `m` equally spaced points on [0, 1], both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    m: usize,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    m: usize,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        Grid::new(r.m)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr { m: g.m }
    }
}

impl Grid {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need m >= 2, got {m}")));
        }
        Ok(Grid { m })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m
    }

    /// Always false; a grid has at least two points.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / (self.m - 1) as f64
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        debug_assert!(i < self.m);
        if i == self.m - 1 {
            1.0
        } else {
            i as f64 / (self.m - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|i| self.point(i)).collect()
    }

    /// Composite trapezoid weights: `h/2` at the ends, `h` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.m];
        w[0] = 0.5 * h;
        w[self.m - 1] = 0.5 * h;
        w
    }

    /// Grid with `factor` times as many intervals, sharing every point of `self`.
    pub fn refined(&self, factor: usize) -> Grid {
        Grid {
            m: (self.m - 1) * factor.max(1) + 1,
        }
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: *self,
            values: (0..self.m).map(|i| f(self.point(i))).collect(),
        }
    }
}

/// Trapezoid rule over raw values sampled on `grid`.
pub fn trapezoid_values(grid: &Grid, values: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), grid.len());
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    grid.spacing() * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Zero-padded central second difference of `values` into `out`.
pub(crate) fn second_difference(values: &[f64], h: f64, out: &mut [f64]) {
    let n = values.len();
    let inv = 1.0 / (h * h);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = (values[i - 1] - 2.0 * values[i] + values[i + 1]) * inv;
    }
}

/// Adjoint of [`second_difference`]: accumulates `D^T g` into `out`.
pub(crate) fn second_difference_adjoint(g: &[f64], h: f64, out: &mut [f64]) {
    let n = g.len();
    let inv = 1.0 / (h * h);
    for i in 1..n - 1 {
        let v = g[i] * inv;
        out[i - 1] += v;
        out[i] -= 2.0 * v;
        out[i + 1] += v;
    }
}

/// A real function sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(shape_err!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid function value at index {i}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn trapezoid(&self) -> f64 {
        trapezoid_values(&self.grid, &self.values)
    }

    /// Central second difference, zero at both endpoints.
    pub fn second_derivative(&self) -> Result<GridFunction> {
        if self.grid.len() < 3 {
            return Err(Error::GridTooSmall {
                needed: 3,
                got: self.grid.len(),
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        second_difference(&self.values, self.grid.spacing(), &mut out);
        Ok(GridFunction {
            grid: self.grid,
            values: out,
        })
    }

    /// Piecewise-linear interpolation at an arbitrary `t` in [0, 1].
    pub fn interpolate(&self, t: f64) -> f64 {
        interpolate_values(&self.grid, &self.values, t)
    }

    /// Piecewise-linear resampling onto `target`.
    pub fn resample_linear(&self, target: &Grid) -> GridFunction {
        if *target == self.grid {
            return self.clone();
        }
        GridFunction {
            grid: *target,
            values: (0..target.len())
                .map(|i| self.interpolate(target.point(i)))
                .collect(),
        }
    }
}

pub(crate) fn interpolate_values(grid: &Grid, values: &[f64], t: f64) -> f64 {
    let m = grid.len();
    let x = t.clamp(0.0, 1.0) * (m - 1) as f64;
    let i = (x as usize).min(m - 2);
    let frac = x - i as f64;
    if frac == 0.0 {
        values[i]
    } else if frac == 1.0 {
        values[i + 1]
    } else {
        values[i] + frac * (values[i + 1] - values[i])
    }
}

/// A bivariate function on `row_grid x col_grid`, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSurface {
    pub row_grid: Grid,
    pub col_grid: Grid,
    pub values: Vec<f64>,
}

impl GridSurface {
    pub fn new(row_grid: Grid, col_grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_grid.len() * col_grid.len() {
            return Err(shape_err!(
                "{} values for a {}x{} surface",
                values.len(),
                row_grid.len(),
                col_grid.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("surface value at index {i}")));
        }
        Ok(GridSurface {
            row_grid,
            col_grid,
            values,
        })
    }

    pub fn sample(row_grid: Grid, col_grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(row_grid.len() * col_grid.len());
        for i in 0..row_grid.len() {
            let s = row_grid.point(i);
            for j in 0..col_grid.len() {
                values.push(f(s, col_grid.point(j)));
            }
        }
        GridSurface {
            row_grid,
            col_grid,
            values,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.col_grid.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.col_grid.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// Tensor-product trapezoid of the surface.
    pub fn trapezoid(&self) -> f64 {
        let qr = self.row_grid.trapezoid_weights();
        let qc = self.col_grid.trapezoid_weights();
        surface_quadrature(&self.values, &qr, &qc)
    }

    /// Five-point Laplacian on interior points; the whole border is zero.
    pub fn laplacian(&self) -> Result<GridSurface> {
        let (mr, mc) = (self.row_grid.len(), self.col_grid.len());
        if mr < 3 || mc < 3 {
            return Err(Error::GridTooSmall {
                needed: 3,
                got: mr.min(mc),
            });
        }
        let mut out = vec![0.0; mr * mc];
        laplacian_values(
            &self.values,
            mr,
            mc,
            self.row_grid.spacing(),
            self.col_grid.spacing(),
            &mut out,
        );
        Ok(GridSurface {
            row_grid: self.row_grid,
            col_grid: self.col_grid,
            values: out,
        })
    }
}

pub(crate) fn surface_quadrature(values: &[f64], qr: &[f64], qc: &[f64]) -> f64 {
    let mc = qc.len();
    qr.iter()
        .enumerate()
        .map(|(i, wr)| {
            let row = &values[i * mc..(i + 1) * mc];
            wr * row.iter().zip(qc).map(|(v, w)| v * w).sum::<f64>()
        })
        .sum()
}

pub(crate) fn laplacian_values(w: &[f64], mr: usize, mc: usize, hr: f64, hc: f64, out: &mut [f64]) {
    let (ir, ic) = (1.0 / (hr * hr), 1.0 / (hc * hc));
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for i in 1..mr - 1 {
        for j in 1..mc - 1 {
            let c = w[i * mc + j];
            let d_rows = (w[(i - 1) * mc + j] - 2.0 * c + w[(i + 1) * mc + j]) * ir;
            let d_cols = (w[i * mc + j - 1] - 2.0 * c + w[i * mc + j + 1]) * ic;
            out[i * mc + j] = d_rows + d_cols;
        }
    }
}

/// Accumulates `L^T g` into `out`, where `L` is [`laplacian_values`].
pub(crate) fn laplacian_adjoint(g: &[f64], mr: usize, mc: usize, hr: f64, hc: f64, out: &mut [f64]) {
    let (ir, ic) = (1.0 / (hr * hr), 1.0 / (hc * hc));
    for i in 1..mr - 1 {
        for j in 1..mc - 1 {
            let v = g[i * mc + j];
            if v == 0.0 {
                continue;
            }
            let (vr, vc) = (v * ir, v * ic);
            out[(i - 1) * mc + j] += vr;
            out[(i + 1) * mc + j] += vr;
            out[i * mc + j - 1] += vc;
            out[i * mc + j + 1] += vc;
            out[i * mc + j] -= 2.0 * (vr + vc);
        }
    }
}
