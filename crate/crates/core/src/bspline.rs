//! Clamped B-spline bases on [0, 1] with equally spaced interior knots.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent under `cfg(test)`, where std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg::Matrix;

pub const DEFAULT_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisRepr", into = "BasisRepr")]
pub struct BSplineBasis {
    num_basis: usize,
    order: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisRepr {
    num_basis: usize,
    order: usize,
}

impl TryFrom<BasisRepr> for BSplineBasis {
    type Error = Error;
    fn try_from(r: BasisRepr) -> Result<Self> {
        BSplineBasis::new(r.num_basis, r.order)
    }
}

impl From<BSplineBasis> for BasisRepr {
    fn from(b: BSplineBasis) -> Self {
        BasisRepr {
            num_basis: b.num_basis,
            order: b.order,
        }
    }
}

impl BSplineBasis {
    /// `num_basis` functions of the given order (degree + 1).
    pub fn new(num_basis: usize, order: usize) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidParameter(format!("spline order must be >= 1, got {order}")));
        }
        if num_basis < order {
            return Err(Error::InvalidParameter(format!(
                "num_basis ({num_basis}) must be >= order ({order})"
            )));
        }
        let interior = num_basis - order;
        let mut knots = Vec::with_capacity(num_basis + order);
        knots.extend(core::iter::repeat(0.0).take(order));
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend(core::iter::repeat(1.0).take(order));
        Ok(BSplineBasis {
            num_basis,
            order,
            knots,
        })
    }

    pub fn cubic(num_basis: usize) -> Result<Self> {
        Self::new(num_basis, DEFAULT_ORDER)
    }

    #[inline]
    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn degree(&self) -> usize {
        self.order - 1
    }

    /// Knot span containing `t`; the right endpoint belongs to the last span.
    fn span(&self, t: f64) -> usize {
        let p = self.degree();
        let n = self.num_basis;
        if t >= self.knots[n] {
            return n - 1;
        }
        if t <= self.knots[p] {
            return p;
        }
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions and their derivatives up to `max_deriv` at `t`.
    ///
    /// Returns the first basis index and `ders[k][r]` = k-th derivative of basis
    /// `first + r`.
    fn nonzero_derivatives(&self, t: f64, max_deriv: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree();
        let span = self.span(t);
        let k = &self.knots;
        // Triangular table of basis values (upper) and knot differences (lower).
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = t - k[span + 1 - j];
            right[j] = k[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let nd = max_deriv.min(p);
        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for kk in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - kk as isize;
                let pk = p - kk;
                if r >= kk {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { kk - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                    d += a[s2][kk] * ndu[r][pk];
                }
                ders[kk][r] = d;
                core::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut fac = p as f64;
        for kk in 1..=nd {
            for v in ders[kk].iter_mut() {
                *v *= fac;
            }
            fac *= (p - kk) as f64;
        }
        (span - p, ders)
    }

    /// All `num_basis` values of the `deriv`-th derivative at `t`.
    pub fn eval_derivative(&self, t: f64, deriv: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_basis];
        let (first, ders) = self.nonzero_derivatives(t, deriv);
        for (r, v) in ders[deriv].iter().enumerate() {
            out[first + r] = *v;
        }
        out
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.eval_derivative(t, 0)
    }

    /// `m x num_basis` matrix of basis values at the grid points.
    pub fn design(&self, grid: &Grid) -> Matrix {
        self.design_derivative(grid, 0)
    }

    pub fn design_derivative(&self, grid: &Grid, deriv: usize) -> Matrix {
        let mut out = Matrix::zeros(grid.len(), self.num_basis);
        for i in 0..grid.len() {
            let (first, ders) = self.nonzero_derivatives(grid.point(i), deriv);
            for (r, v) in ders[deriv].iter().enumerate() {
                out.set(i, first + r, *v);
            }
        }
        out
    }

    /// Components `∫ v_d(t) f(t) dt` by trapezoid on the function's grid.
    pub fn functional(&self, f: &GridFunction) -> Vec<f64> {
        let design = self.design(&f.grid);
        let q = f.grid.trapezoid_weights();
        let weighted: Vec<f64> = f.values.iter().zip(&q).map(|(v, w)| v * w).collect();
        let mut out = vec![0.0; self.num_basis];
        for (i, w) in weighted.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(design.row(i)) {
                *o += w * d;
            }
        }
        out
    }

    /// `G[a, b] = ∫ v_a^(da) v_b^(db)` over [0, 1], exact up to rounding: Gauss–Legendre with
    /// `order` nodes per knot span integrates the piecewise polynomial products exactly.
    pub fn gram(&self, da: usize, db: usize) -> Matrix {
        let (nodes, weights) = gauss_legendre(self.order);
        let n = self.num_basis;
        let mut g = Matrix::zeros(n, n);
        let deriv = da.max(db);
        for span in self.knots.windows(2).filter(|w| w[1] > w[0]) {
            let (half, mid) = ((span[1] - span[0]) / 2.0, (span[1] + span[0]) / 2.0);
            for (x, w) in nodes.iter().zip(&weights) {
                let (first, ders) = self.nonzero_derivatives(mid + half * x, deriv);
                let (ra, rb) = (&ders[da], &ders[db]);
                for (i, va) in ra.iter().enumerate() {
                    for (j, vb) in rb.iter().enumerate() {
                        g.data[(first + i) * n + first + j] += half * w * va * vb;
                    }
                }
            }
        }
        g
    }

    /// Evaluates `Σ_d coef[d] v_d` on `grid`.
    pub fn expand(&self, coef: &[f64], grid: &Grid) -> Result<GridFunction> {
        if coef.len() != self.num_basis {
            return Err(shape_err!("{} coefficients for {} basis functions", coef.len(), self.num_basis));
        }
        let design = self.design(grid);
        Ok(GridFunction {
            grid: *grid,
            values: design.matvec(coef),
        })
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Newton iteration on P_n from the Chebyshev-like initial guess.
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if n == 0 { (1.0, 0.0) } else if n == 1 { (x, 1.0) } else { (p1, p0) };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
