//! Function-on-function linear model
//!
//! ```text
//! Y(t) = α(t) + Σ_r ∫ β_r(s, t) X_r(s) ds
//! ```
//!
//! with `α` and every `β_r` in B-spline bases, fitted in closed form by penalized least
//! squares. The fitted model is stored as a single identity FBNN layer, so prediction,
//! roughness and the expansion to grid surfaces are shared with the networks.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::datagen::FuncDataset;
use crate::error::{Error, Result};
use crate::fbnn::{BasisSpec, FbnnConfig, FbnnNetwork};
use crate::fdnn::{FdnnConfig, FdnnNetwork};
use crate::grid::Grid;
use crate::linalg::{gemm, Cholesky, Matrix};
use crate::model::{Lambda, Model, Predictor, Roughness};
use crate::training::{evaluate_loss, fold_split, kfold};

/// Smallest accepted ratio of squared Cholesky pivots.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FflmModel {
    pub lambda: Lambda,
    /// One identity layer: intercept coefficients on `v*(t)`, surfaces on `v_c(t) v_d(s)`.
    pub net: FbnnNetwork,
}

impl FflmModel {
    pub fn to_fdnn(&self) -> FdnnNetwork {
        self.net.to_fdnn()
    }

    pub fn roughness(&self) -> Result<Roughness> {
        self.net.roughness()
    }
}

impl Predictor for FflmModel {
    fn input_grid(&self) -> Grid {
        self.net.input_grid()
    }

    fn input_count(&self) -> usize {
        self.net.input_count()
    }

    fn output_grid(&self) -> Grid {
        self.net.output_grid()
    }

    fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.net.predict(x, n)
    }
}

/// Dense matrix of the quadratic penalty `Σ λ · roughness` in the network's parameter order.
fn penalty_matrix(net: &FbnnNetwork, lambda: Lambda) -> Result<Matrix> {
    let p = net.num_params();
    let mut probe = net.clone();
    let mut out = Matrix::zeros(p, p);
    let mut e = vec![0.0; p];
    for i in 0..p {
        e[i] = 1.0;
        probe.set_params(&e)?;
        let (_, g) = probe.penalty(lambda)?;
        for (r, v) in g.iter().enumerate() {
            out.set(r, i, 0.5 * v);
        }
        e[i] = 0.0;
    }
    Ok(out)
}

/// Minimizes `(1/N) Σ ∫ (Y − Ŷ)² + λ_b ∫(α'')² + λ_w Σ_r ∫∫(Δβ_r)²` exactly.
pub fn fflm_fit(data: &FuncDataset, basis: BasisSpec, lambda: Lambda) -> Result<FflmModel> {
    lambda.validate()?;
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let r_count = data.predictors;
    let cfg = FbnnConfig {
        architecture: FdnnConfig::linear(data.x_grid, r_count, data.y_grid),
        basis,
    };
    let mut net = FbnnNetwork::zeros(&cfg)?;
    let layer = &net.layers[0];
    let (nb, nc, nd) = (basis.intercept, basis.s, basis.t);
    let (m, my) = (data.x_grid.len(), data.y_grid.len());
    let vstar = layer.intercept_basis.design(&data.y_grid);
    let vs = layer.s_basis.design(&data.y_grid);
    let vt = layer.t_basis.design(&data.x_grid);
    let (qx, qy) = (data.x_grid.trapezoid_weights(), data.y_grid.trapezoid_weights());

    // A[i, r, :] = ∫ X_ir v_d
    let xq: Vec<f64> = data.x.iter().enumerate().map(|(i, v)| v * qx[i % m]).collect();
    let mut a = vec![0.0; n * r_count * nd];
    gemm(n * r_count, m, nd, 1.0, &xq, (m, 1), &vt.data, (nd, 1), 0.0, &mut a, (nd, 1));
    let yq: Vec<f64> = data.y.iter().enumerate().map(|(i, v)| v * qy[i % my]).collect();
    let mut ys = vec![0.0; n * nc];
    gemm(n, my, nc, 1.0, &yq, (my, 1), &vs.data, (nc, 1), 0.0, &mut ys, (nc, 1));
    let mut ystar_sum = vec![0.0; my];
    for row in yq.chunks_exact(my) {
        for (s, v) in ystar_sum.iter_mut().zip(row) {
            *s += v;
        }
    }

    let weighted = |v: &Matrix| Matrix::from_fn(v.rows, v.cols, |i, j| qy[i] * v.get(i, j));
    let gstar = vstar.transpose().matmul(&weighted(&vstar));
    let gstar_v = vstar.transpose().matmul(&weighted(&vs));
    let gv = vs.transpose().matmul(&weighted(&vs));

    let blk = nc * nd;
    let p = nb + r_count * blk;
    let inv_n = 1.0 / n as f64;
    let mut lhs = penalty_matrix(&net, lambda)?;
    let mut rhs = vec![0.0; p];

    for b in 0..nb {
        for b2 in 0..nb {
            lhs.data[b * p + b2] += gstar.get(b, b2);
        }
        rhs[b] = inv_n * (0..my).map(|u| vstar.get(u, b) * ystar_sum[u]).sum::<f64>();
    }
    for r in 0..r_count {
        let mut sum_a = vec![0.0; nd];
        for i in 0..n {
            for (s, v) in sum_a.iter_mut().zip(&a[(i * r_count + r) * nd..(i * r_count + r + 1) * nd]) {
                *s += v;
            }
        }
        let off = nb + r * blk;
        for b in 0..nb {
            for c in 0..nc {
                for d in 0..nd {
                    let v = inv_n * gstar_v.get(b, c) * sum_a[d];
                    lhs.data[b * p + off + c * nd + d] += v;
                    lhs.data[(off + c * nd + d) * p + b] += v;
                }
            }
        }
        // rhs block = (1/N) Ysᵀ A_r
        let mut rb = vec![0.0; blk];
        gemm(nc, n, nd, inv_n, &ys, (1, nc), &a[r * nd..], (r_count * nd, 1), 0.0, &mut rb, (nd, 1));
        rhs[off..off + blk].copy_from_slice(&rb);
        for r2 in 0..r_count {
            let mut sa = vec![0.0; nd * nd];
            gemm(nd, n, nd, inv_n, &a[r * nd..], (1, r_count * nd), &a[r2 * nd..], (r_count * nd, 1), 0.0, &mut sa, (nd, 1));
            let off2 = nb + r2 * blk;
            for c in 0..nc {
                for c2 in 0..nc {
                    let g = gv.get(c, c2);
                    for d in 0..nd {
                        let row = (off + c * nd + d) * p + off2 + c2 * nd;
                        for d2 in 0..nd {
                            lhs.data[row + d2] += g * sa[d * nd + d2];
                        }
                    }
                }
            }
        }
    }
    let ch = Cholesky::new(&lhs).map_err(|_| Error::Singular)?;
    // pivots at rounding level mean the system is numerically rank deficient
    if ch.pivot_ratio() < SINGULAR_PIVOT_RATIO {
        return Err(Error::Singular);
    }
    let theta = ch.solve(&rhs);
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    net.set_params(&theta)?;
    Ok(FflmModel { lambda, net })
}

/// `k`-fold choice of λ by mean validation loss; ties go to the larger λ.
pub fn fflm_tune(data: &FuncDataset, basis: BasisSpec, grid: &[Lambda], k: usize, seed: u64) -> Result<(Lambda, Vec<(Lambda, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty smoothing-parameter grid".into()));
    }
    let folds = kfold(data.len(), k, seed)?;
    let splits: Vec<_> = (0..k).map(|f| fold_split(data, &folds, f)).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let mut total = 0.0;
        let mut ok = true;
        for (tr, va) in &splits {
            match fflm_fit(tr, basis, lambda) {
                Ok(m) => total += evaluate_loss(&m, va)?,
                Err(Error::Singular) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        scores.push((lambda, if ok { total / k as f64 } else { f64::INFINITY }));
    }
    let size = |l: &Lambda| l.b + l.w;
    let mut best = scores[0];
    for &(l, s) in &scores[1..] {
        let tie = (s - best.1).abs() <= 1e-12 * s.abs().max(best.1.abs());
        if (s < best.1 && !tie) || (tie && size(&l) > size(&best.0)) {
            best = (l, s);
        }
    }
    if !best.1.is_finite() {
        return Err(Error::Singular);
    }
    Ok((best.0, scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, GenerateSpec, Scenario, ScenarioKind};
    use crate::training::evaluate_rmse;

    fn small_spec(n: usize, noise: f64) -> GenerateSpec {
        GenerateSpec {
            n,
            m: 30,
            m_y: 20,
            noise_sd: noise,
            ..GenerateSpec::default()
        }
    }

    #[test]
    fn recovers_model_in_basis_span() {
        let d = generate(&Scenario::from(ScenarioKind::Linear), &small_spec(80, 0.0), 1).unwrap();
        let basis = BasisSpec::uniform(6);
        // responses from a known coefficient set
        let truth = {
            let cfg = FbnnConfig {
                architecture: FdnnConfig::linear(d.x_grid, 1, d.y_grid),
                basis,
            };
            let mut net = FbnnNetwork::init(&cfg, 3).unwrap();
            let mut p = net.params();
            p[..6].copy_from_slice(&[0.5, -1.0, 0.2, 0.0, 1.0, 0.3]);
            net.set_params(&p).unwrap();
            net
        };
        let mut d2 = d.clone();
        d2.y = truth.predict(&d.x, d.len()).unwrap();
        let fit = fflm_fit(&d2, basis, Lambda::ZERO).unwrap();
        assert!(evaluate_rmse(&fit, &d2).unwrap() < 1e-6);
    }

    #[test]
    fn heavy_penalty_flattens_surfaces() {
        let d = generate(&Scenario::from(ScenarioKind::Linear), &small_spec(60, 1.0), 2).unwrap();
        let basis = BasisSpec::uniform(7);
        let loose = fflm_fit(&d, basis, Lambda::both(1e-6)).unwrap().roughness().unwrap();
        let tight = fflm_fit(&d, basis, Lambda::both(1e8)).unwrap().roughness().unwrap();
        assert!(tight.weight < 1e-6 * loose.weight.max(1.0), "{tight:?} vs {loose:?}");
        assert!(tight.intercept < 1e-6 * loose.intercept.max(1.0));
    }

    #[test]
    fn deterministic_and_permutation_invariant() {
        let d = generate(&Scenario::from(ScenarioKind::Cam), &small_spec(50, 1.0), 3).unwrap();
        let basis = BasisSpec::uniform(6);
        let a = fflm_fit(&d, basis, Lambda::both(1e-3)).unwrap();
        let perm: Vec<usize> = (0..50).rev().collect();
        let b = fflm_fit(&d.subset(&perm), basis, Lambda::both(1e-3)).unwrap();
        for (x, y) in a.net.params().iter().zip(b.net.params()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
        assert_eq!(a, fflm_fit(&d, basis, Lambda::both(1e-3)).unwrap());
    }

    #[test]
    fn rank_deficient_problem_is_singular() {
        let d = generate(&Scenario::from(ScenarioKind::Linear), &small_spec(2, 1.0), 4).unwrap();
        assert_eq!(fflm_fit(&d, BasisSpec::uniform(8), Lambda::ZERO).unwrap_err(), Error::Singular);
    }

    #[test]
    fn expansion_matches_prediction() {
        let d = generate(&Scenario::from(ScenarioKind::Linear), &small_spec(40, 1.0), 5).unwrap();
        let fit = fflm_fit(&d, BasisSpec::uniform(6), Lambda::both(1e-4)).unwrap();
        let (a, b) = (fit.predict(&d.x, 40).unwrap(), fit.to_fdnn().predict(&d.x, 40).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn tuning_picks_a_grid_point() {
        let d = generate(&Scenario::from(ScenarioKind::Linear), &small_spec(60, 1.0), 6).unwrap();
        let grid = [Lambda::both(1e-4), Lambda::both(1e-2), Lambda::both(1.0)];
        let (best, scores) = fflm_tune(&d, BasisSpec::uniform(6), &grid, 3, 1).unwrap();
        assert!(grid.contains(&best));
        assert_eq!(scores.len(), 3);
        assert!(fflm_tune(&d, BasisSpec::uniform(6), &[], 3, 1).is_err());
    }
}
