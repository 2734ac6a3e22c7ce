//! Common interface for everything that maps predictor curves to a response curve.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::grid::Grid;

/// Smoothing parameters for intercept functions (`b`) and weight surfaces (`w`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lambda {
    pub b: f64,
    pub w: f64,
}

impl Lambda {
    pub const ZERO: Lambda = Lambda { b: 0.0, w: 0.0 };

    pub fn new(b: f64, w: f64) -> Result<Self> {
        let l = Lambda { b, w };
        l.validate()?;
        Ok(l)
    }

    /// Same value for both terms.
    pub fn both(v: f64) -> Self {
        Lambda { b: v, w: v }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0) || !(self.w >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothing parameters must be >= 0, got b={} w={}",
                self.b, self.w
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.b == 0.0 && self.w == 0.0
    }
}

/// Unweighted roughness terms: `Σ∫(b'')²` and `Σ∫∫(Δw)²`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Roughness {
    pub intercept: f64,
    pub weight: f64,
}

/// Maps `n` samples of `R` curves on the input grid to `n` curves on the output grid.
///
/// Inputs are `n x R x m_in` row-major, outputs `n x m_out`.
pub trait Predictor {
    fn input_grid(&self) -> Grid;
    fn input_count(&self) -> usize;
    fn output_grid(&self) -> Grid;
    fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>>;

    fn check_inputs(&self, x: &[f64], n: usize) -> Result<()> {
        let expect = n * self.input_count() * self.input_grid().len();
        if x.len() != expect {
            return Err(shape_err!(
                "{} input values, expected {n} samples x {} curves x {} points",
                x.len(),
                self.input_count(),
                self.input_grid().len()
            ));
        }
        Ok(())
    }
}

/// A predictor with a flat parameter vector and hand-derived gradients.
pub trait Model: Predictor + Clone {
    fn num_params(&self) -> usize;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;

    /// Discretized quadratic loss on the batch and its exact gradient.
    fn loss_gradient(&self, x: &[f64], y: &[f64], n: usize) -> Result<(f64, Vec<f64>)>;

    /// Weighted roughness penalty and its exact gradient.
    fn penalty(&self, lambda: Lambda) -> Result<(f64, Vec<f64>)>;

    fn roughness(&self) -> Result<Roughness>;
}

/// `(1/N) Σ_i Σ_u q_u (ŷ_i(u) − y_i(u))²` over flat `n x m` arrays.
pub fn quadratic_loss_flat(pred: &[f64], truth: &[f64], grid: &Grid, n: usize) -> Result<f64> {
    let m = grid.len();
    if pred.len() != n * m || truth.len() != n * m {
        return Err(shape_err!(
            "loss over {} predictions and {} targets for {n} samples on {m} points",
            pred.len(),
            truth.len()
        ));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("loss over an empty batch".into()));
    }
    let q = grid.trapezoid_weights();
    let mut total = 0.0;
    for (p, t) in pred.chunks_exact(m).zip(truth.chunks_exact(m)) {
        for u in 0..m {
            let r = p[u] - t[u];
            total += q[u] * r * r;
        }
    }
    Ok(total / n as f64)
}

/// Loss and its gradient with respect to every predicted value.
pub fn loss_and_adjoint(pred: &[f64], truth: &[f64], grid: &Grid, n: usize) -> Result<(f64, Vec<f64>)> {
    let loss = quadratic_loss_flat(pred, truth, grid, n)?;
    let m = grid.len();
    let q = grid.trapezoid_weights();
    let scale = 2.0 / n as f64;
    let mut adj = vec![0.0; pred.len()];
    for (i, a) in adj.iter_mut().enumerate() {
        *a = scale * q[i % m] * (pred[i] - truth[i]);
    }
    Ok((loss, adj))
}

pub(crate) fn check_param_len(got: usize, expect: usize) -> Result<()> {
    if got != expect {
        return Err(shape_err!("{got} parameters, model has {expect}"));
    }
    Ok(())
}
