//! Matérn covariance and zero-mean Gaussian-process sampling on grids.

use alloc::format;
use alloc::vec::Vec;
#[allow(unused_imports)] // inherent under `cfg(test)`, where std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::linalg::{Cholesky, Matrix};
use crate::rng;

/// Matérn parameters. Only the ν = 5/2 member is supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub rho: f64,
    pub nu: f64,
}

impl Default for MaternParams {
    fn default() -> Self {
        MaternParams {
            sigma2: 1.0,
            rho: 0.5,
            nu: 2.5,
        }
    }
}

impl MaternParams {
    pub fn new(sigma2: f64, rho: f64) -> Result<Self> {
        let p = MaternParams {
            sigma2,
            rho,
            nu: 2.5,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Matérn needs sigma2 > 0 and rho > 0, got sigma2={} rho={}",
                self.sigma2, self.rho
            )));
        }
        if self.nu != 2.5 {
            return Err(Error::InvalidParameter(format!("only nu = 5/2 is supported, got {}", self.nu)));
        }
        Ok(())
    }
}

/// `σ²(1 + √5 d/ρ + 5d²/(3ρ²)) exp(−√5 d/ρ)` with `d = |t − s|`.
pub fn matern_cov(t: f64, s: f64, p: &MaternParams) -> Result<f64> {
    p.validate()?;
    Ok(matern52(t - s, p))
}

#[inline]
fn matern52(diff: f64, p: &MaternParams) -> f64 {
    let r = 5.0f64.sqrt() * diff.abs() / p.rho;
    p.sigma2 * (1.0 + r + r * r / 3.0) * (-r).exp()
}

pub fn covariance_matrix(grid: &Grid, p: &MaternParams) -> Result<Matrix> {
    p.validate()?;
    let pts = grid.points();
    Ok(Matrix::from_fn(grid.len(), grid.len(), |i, j| matern52(pts[i] - pts[j], p)))
}

/// Jitter schedule tried in order until the Cholesky factorization succeeds.
pub const JITTER_SCHEDULE: [f64; 5] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Cholesky factor of the covariance plus the smallest diagonal jitter that worked.
pub fn covariance_factor(grid: &Grid, p: &MaternParams) -> Result<(Cholesky, f64)> {
    let cov = covariance_matrix(grid, p)?;
    factor_with_jitter(&cov, p.sigma2)
}

pub(crate) fn factor_with_jitter(cov: &Matrix, scale: f64) -> Result<(Cholesky, f64)> {
    let mut jittered = cov.clone();
    let mut applied = 0.0;
    for &j in JITTER_SCHEDULE.iter() {
        let add = j * scale - applied;
        for i in 0..cov.rows {
            jittered.data[i * cov.cols + i] += add;
        }
        applied = j * scale;
        if let Ok(ch) = Cholesky::new(&jittered) {
            return Ok((ch, applied));
        }
    }
    Err(Error::FactorizationFailed {
        jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1] * scale,
    })
}

/// Draws `n` zero-mean curves on `grid`. Deterministic given `seed`.
pub fn gp_sample(grid: &Grid, p: &MaternParams, n: usize, seed: u64) -> Result<Vec<GridFunction>> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let (ch, _) = covariance_factor(grid, p)?;
    let mut rng = rng::stream(seed, rng::streams::PREDICTORS);
    let m = grid.len();
    let l = &ch.factor;
    let mut z = alloc::vec![0.0; m];
    Ok((0..n)
        .map(|_| {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let values = (0..m)
                .map(|i| crate::linalg::dot(&l.data[i * m..i * m + i + 1], &z[..i + 1]))
                .collect();
            GridFunction { grid: *grid, values }
        })
        .collect())
}
