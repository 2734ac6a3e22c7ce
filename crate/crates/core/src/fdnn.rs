//! Functional Direct Neural Network.
//!
//! Every continuous neuron computes
//!
//! ```text
//! H_k(s) = σ( b_k(s) + Σ_j ∫ w_{j,k}(s, t) H_j(t) dt )
//! ```
//!
//! with `b_k` sampled on the layer's output grid and `w_{j,k}` sampled on
//! `out_grid x in_grid`. Integrals use trapezoid weights, and all gradients are exact
//! gradients of the resulting discretized loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{shape_err, Error, Result};
use crate::grid::{
    laplacian_adjoint, laplacian_values, second_difference, second_difference_adjoint, Grid,
    GridFunction, GridSurface,
};
use crate::linalg::gemm;
use crate::model::{check_param_len, loss_and_adjoint, Lambda, Model, Predictor, Roughness};
use crate::rng;

/// One continuous layer: `out_count` neurons on `out_grid`, fed by `in_count` functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdnnLayer {
    pub in_count: usize,
    pub out_count: usize,
    pub in_grid: Grid,
    pub out_grid: Grid,
    pub activation: Activation,
    /// `out_count x m_out`.
    pub intercepts: Vec<f64>,
    /// Block `(k, j)` at offset `(k * in_count + j) * m_out * m_in`, each `m_out x m_in`.
    pub weights: Vec<f64>,
}

impl FdnnLayer {
    pub fn zeros(in_count: usize, out_count: usize, in_grid: Grid, out_grid: Grid, activation: Activation) -> Self {
        FdnnLayer {
            in_count,
            out_count,
            in_grid,
            out_grid,
            activation,
            intercepts: vec![0.0; out_count * out_grid.len()],
            weights: vec![0.0; out_count * in_count * out_grid.len() * in_grid.len()],
        }
    }

    #[inline]
    fn block_len(&self) -> usize {
        self.out_grid.len() * self.in_grid.len()
    }

    pub fn block(&self, k: usize, j: usize) -> &[f64] {
        let b = self.block_len();
        let o = (k * self.in_count + j) * b;
        &self.weights[o..o + b]
    }

    pub fn block_mut(&mut self, k: usize, j: usize) -> &mut [f64] {
        let b = self.block_len();
        let o = (k * self.in_count + j) * b;
        &mut self.weights[o..o + b]
    }

    pub fn intercept(&self, k: usize) -> GridFunction {
        let m = self.out_grid.len();
        GridFunction {
            grid: self.out_grid,
            values: self.intercepts[k * m..(k + 1) * m].to_vec(),
        }
    }

    pub fn weight_surface(&self, k: usize, j: usize) -> GridSurface {
        GridSurface {
            row_grid: self.out_grid,
            col_grid: self.in_grid,
            values: self.block(k, j).to_vec(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.intercepts.len() + self.weights.len()
    }

    fn validate(&self) -> Result<()> {
        if self.in_count == 0 || self.out_count == 0 {
            return Err(Error::InvalidParameter("layer needs at least one input and one neuron".into()));
        }
        if self.intercepts.len() != self.out_count * self.out_grid.len() {
            return Err(shape_err!("intercepts have {} values", self.intercepts.len()));
        }
        if self.weights.len() != self.out_count * self.in_count * self.block_len() {
            return Err(shape_err!("weights have {} values", self.weights.len()));
        }
        if self.intercepts.iter().chain(&self.weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(())
    }

    /// Pre-activations `n x K x m_out` for inputs `n x J x m_in`.
    fn pre_activation(&self, input: &[f64], n: usize) -> Vec<f64> {
        let (mi, mo) = (self.in_grid.len(), self.out_grid.len());
        let (jn, kn) = (self.in_count, self.out_count);
        let q = self.in_grid.trapezoid_weights();
        let hq: Vec<f64> = input.iter().enumerate().map(|(i, v)| v * q[i % mi]).collect();
        let mut pre = vec![0.0; n * kn * mo];
        for (row, chunk) in pre.chunks_exact_mut(mo).enumerate() {
            let k = row % kn;
            chunk.copy_from_slice(&self.intercepts[k * mo..(k + 1) * mo]);
        }
        for k in 0..kn {
            for j in 0..jn {
                // pre[:, k, :] += HQ[:, j, :] · W_kjᵀ
                gemm(
                    n,
                    mi,
                    mo,
                    1.0,
                    &hq[j * mi..],
                    (jn * mi, 1),
                    self.block(k, j),
                    (1, mi),
                    1.0,
                    &mut pre[k * mo..],
                    (kn * mo, 1),
                );
            }
        }
        pre
    }

    /// Accumulates parameter gradients; returns `∂L/∂input` when requested.
    fn backward(
        &self,
        input: &[f64],
        pre: &[f64],
        g_out: &[f64],
        n: usize,
        grad: &mut FdnnLayerGradients,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let (mi, mo) = (self.in_grid.len(), self.out_grid.len());
        let (jn, kn) = (self.in_count, self.out_count);
        let act = self.activation;
        let g_pre: Vec<f64> = g_out
            .iter()
            .zip(pre)
            .map(|(g, a)| g * act.derivative(*a))
            .collect();
        for (row, chunk) in g_pre.chunks_exact(mo).enumerate() {
            let k = row % kn;
            for (gb, g) in grad.intercepts[k * mo..(k + 1) * mo].iter_mut().zip(chunk) {
                *gb += g;
            }
        }
        let q = self.in_grid.trapezoid_weights();
        let hq: Vec<f64> = input.iter().enumerate().map(|(i, v)| v * q[i % mi]).collect();
        let blen = self.block_len();
        for k in 0..kn {
            for j in 0..jn {
                let off = (k * jn + j) * blen;
                // gW_kj += gA[:, k, :]ᵀ · HQ[:, j, :]
                gemm(
                    mo,
                    n,
                    mi,
                    1.0,
                    &g_pre[k * mo..],
                    (1, kn * mo),
                    &hq[j * mi..],
                    (jn * mi, 1),
                    1.0,
                    &mut grad.weights[off..off + blen],
                    (mi, 1),
                );
            }
        }
        if !want_input_grad {
            return None;
        }
        let mut g_in = vec![0.0; n * jn * mi];
        for k in 0..kn {
            for j in 0..jn {
                // gHQ[:, j, :] += gA[:, k, :] · W_kj
                gemm(
                    n,
                    mo,
                    mi,
                    1.0,
                    &g_pre[k * mo..],
                    (kn * mo, 1),
                    self.block(k, j),
                    (mi, 1),
                    1.0,
                    &mut g_in[j * mi..],
                    (jn * mi, 1),
                );
            }
        }
        for (i, g) in g_in.iter_mut().enumerate() {
            *g *= q[i % mi];
        }
        Some(g_in)
    }
}

/// Shape of one hidden layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HiddenSpec {
    pub neurons: usize,
    pub grid: Grid,
    pub activation: Activation,
}

/// Architecture: hidden layers followed by one identity neuron on the response grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdnnConfig {
    pub input_grid: Grid,
    pub input_count: usize,
    pub hidden: Vec<HiddenSpec>,
    pub output_grid: Grid,
}

impl FdnnConfig {
    /// Single identity layer: the discretized function-on-function linear model.
    pub fn linear(input_grid: Grid, input_count: usize, output_grid: Grid) -> Self {
        FdnnConfig {
            input_grid,
            input_count,
            hidden: Vec::new(),
            output_grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_count == 0 {
            return Err(Error::InvalidParameter("need at least one predictor".into()));
        }
        if let Some(h) = self.hidden.iter().find(|h| h.neurons == 0) {
            return Err(Error::InvalidParameter(format!("hidden layer with {} neurons", h.neurons)));
        }
        Ok(())
    }

    /// `(in_count, out_count, in_grid, out_grid, activation)` per layer.
    pub(crate) fn layer_shapes(&self) -> Vec<(usize, usize, Grid, Grid, Activation)> {
        let mut shapes = Vec::with_capacity(self.hidden.len() + 1);
        let (mut j, mut g) = (self.input_count, self.input_grid);
        for h in &self.hidden {
            shapes.push((j, h.neurons, g, h.grid, h.activation));
            j = h.neurons;
            g = h.grid;
        }
        shapes.push((j, 1, g, self.output_grid, Activation::Identity));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdnnNetwork {
    pub input_grid: Grid,
    pub input_count: usize,
    pub layers: Vec<FdnnLayer>,
}

/// Per-layer inputs and pre-activations saved by the forward pass.
#[derive(Debug, Clone)]
pub struct FdnnCache {
    pub n: usize,
    /// `inputs[l]` is the input of layer `l`; the last entry is the prediction.
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdnnLayerGradients {
    pub intercepts: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gradients shaped like the network's intercepts and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FdnnGradients {
    pub layers: Vec<FdnnLayerGradients>,
}

impl FdnnGradients {
    pub fn zeros_like(net: &FdnnNetwork) -> Self {
        FdnnGradients {
            layers: net
                .layers
                .iter()
                .map(|l| FdnnLayerGradients {
                    intercepts: vec![0.0; l.intercepts.len()],
                    weights: vec![0.0; l.weights.len()],
                })
                .collect(),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.intercepts);
            out.extend_from_slice(&l.weights);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.intercepts.iter().chain(&l.weights))
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl FdnnNetwork {
    /// Zero intercepts, weight values iid `Normal(0, 2/J)`.
    pub fn init(config: &FdnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, rng::streams::INIT);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(j, k, gi, go, act)| {
                let mut layer = FdnnLayer::zeros(j, k, gi, go, act);
                let normal = Normal::new(0.0, (2.0 / j as f64).sqrt()).expect("positive std");
                for w in layer.weights.iter_mut() {
                    *w = normal.sample(&mut rng);
                }
                layer
            })
            .collect();
        Ok(FdnnNetwork {
            input_grid: config.input_grid,
            input_count: config.input_count,
            layers,
        })
    }

    pub fn zeros(config: &FdnnConfig) -> Result<Self> {
        config.validate()?;
        Ok(FdnnNetwork {
            input_grid: config.input_grid,
            input_count: config.input_count,
            layers: config
                .layer_shapes()
                .into_iter()
                .map(|(j, k, gi, go, act)| FdnnLayer::zeros(j, k, gi, go, act))
                .collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let last = self.layers.last().ok_or_else(|| Error::InvalidParameter("network has no layers".into()))?;
        let (mut j, mut g) = (self.input_count, self.input_grid);
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.in_count != j || l.in_grid != g {
                return Err(shape_err!("layer {i} does not match the previous layer"));
            }
            j = l.out_count;
            g = l.out_grid;
        }
        if last.out_count != 1 {
            return Err(shape_err!("output layer must have one neuron, has {}", last.out_count));
        }
        Ok(())
    }

    /// Number of continuous layers, output layer included.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Result<(Vec<f64>, FdnnCache)> {
        self.check_inputs(x, n)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pres = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        for layer in &self.layers {
            let pre = layer.pre_activation(inputs.last().expect("input"), n);
            let act = layer.activation;
            let out = pre.iter().map(|a| act.apply(*a)).collect();
            pres.push(pre);
            inputs.push(out);
        }
        let pred = inputs.last().expect("output").clone();
        Ok((pred, FdnnCache { n, inputs, pre: pres }))
    }

    /// Backpropagates `output_adjoint = ∂L/∂ŷ` (`n x m_y`) through the cached pass.
    pub fn backward(&self, cache: &FdnnCache, output_adjoint: &[f64]) -> Result<FdnnGradients> {
        let n = cache.n;
        if cache.pre.len() != self.layers.len() || cache.inputs.len() != self.layers.len() + 1 {
            return Err(shape_err!("cache was produced by a different network"));
        }
        let out_len = n * self.output_grid().len();
        if output_adjoint.len() != out_len || cache.inputs[self.layers.len()].len() != out_len {
            return Err(shape_err!("adjoint has {} values, batch output {}", output_adjoint.len(), out_len));
        }
        let mut grads = FdnnGradients::zeros_like(self);
        let mut g = output_adjoint.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let next = layer.backward(&cache.inputs[l], &cache.pre[l], &g, n, &mut grads.layers[l], l > 0);
            if let Some(gi) = next {
                g = gi;
            }
        }
        Ok(grads)
    }

    /// `λ_b Σ∫(b'')² + λ_w Σ∫∫(Δw)²` with its exact gradient.
    pub fn penalty_terms(&self, lambda: Lambda) -> Result<(f64, FdnnGradients)> {
        lambda.validate()?;
        let mut grads = FdnnGradients::zeros_like(self);
        if lambda.is_zero() {
            return Ok((0.0, grads));
        }
        let mut value = 0.0;
        for (layer, g) in self.layers.iter().zip(grads.layers.iter_mut()) {
            if lambda.b > 0.0 {
                value += lambda.b * intercept_roughness(layer, Some((&mut g.intercepts, lambda.b)))?;
            }
            if lambda.w > 0.0 {
                value += lambda.w * weight_roughness(layer, Some((&mut g.weights, lambda.w)))?;
            }
        }
        Ok((value, grads))
    }

    pub fn to_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.intercepts);
            out.extend_from_slice(&l.weights);
        }
        out
    }
}

/// `Σ_k ∫(b_k'')²`; optionally accumulates `scale · ∂/∂b` into `grad`.
fn intercept_roughness(layer: &FdnnLayer, grad: Option<(&mut Vec<f64>, f64)>) -> Result<f64> {
    let g = layer.out_grid;
    let m = g.len();
    if m < 3 {
        return Err(Error::GridTooSmall { needed: 3, got: m });
    }
    let (h, q) = (g.spacing(), g.trapezoid_weights());
    let mut d = vec![0.0; m];
    let mut total = 0.0;
    let mut grad = grad;
    for k in 0..layer.out_count {
        let b = &layer.intercepts[k * m..(k + 1) * m];
        second_difference(b, h, &mut d);
        total += d.iter().zip(&q).map(|(v, w)| w * v * v).sum::<f64>();
        if let Some((gv, scale)) = grad.as_mut() {
            let qd: Vec<f64> = d.iter().zip(&q).map(|(v, w)| 2.0 * *scale * w * v).collect();
            second_difference_adjoint(&qd, h, &mut gv[k * m..(k + 1) * m]);
        }
    }
    Ok(total)
}

/// `Σ_{k,j} ∫∫(Δw_{j,k})²`; optionally accumulates `scale · ∂/∂w` into `grad`.
fn weight_roughness(layer: &FdnnLayer, grad: Option<(&mut Vec<f64>, f64)>) -> Result<f64> {
    let (mo, mi) = (layer.out_grid.len(), layer.in_grid.len());
    if mo < 3 || mi < 3 {
        return Err(Error::GridTooSmall { needed: 3, got: mo.min(mi) });
    }
    let (ho, hi) = (layer.out_grid.spacing(), layer.in_grid.spacing());
    let (qo, qi) = (layer.out_grid.trapezoid_weights(), layer.in_grid.trapezoid_weights());
    let blen = mo * mi;
    let mut lap = vec![0.0; blen];
    let mut weighted = vec![0.0; blen];
    let mut total = 0.0;
    let mut grad = grad;
    for b in 0..layer.out_count * layer.in_count {
        let w = &layer.weights[b * blen..(b + 1) * blen];
        laplacian_values(w, mo, mi, ho, hi, &mut lap);
        for s in 0..mo {
            for t in 0..mi {
                let idx = s * mi + t;
                let wq = qo[s] * qi[t];
                total += wq * lap[idx] * lap[idx];
                weighted[idx] = wq * lap[idx];
            }
        }
        if let Some((gv, scale)) = grad.as_mut() {
            for v in weighted.iter_mut() {
                *v *= 2.0 * *scale;
            }
            laplacian_adjoint(&weighted, mo, mi, ho, hi, &mut gv[b * blen..(b + 1) * blen]);
        }
    }
    Ok(total)
}

impl Predictor for FdnnNetwork {
    fn input_grid(&self) -> Grid {
        self.input_grid
    }

    fn input_count(&self) -> usize {
        self.input_count
    }

    fn output_grid(&self) -> Grid {
        self.layers.last().expect("validated network").out_grid
    }

    fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_inputs(x, n)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            let act = layer.activation;
            h = layer.pre_activation(&h, n).into_iter().map(|a| act.apply(a)).collect();
        }
        Ok(h)
    }
}

impl Model for FdnnNetwork {
    fn num_params(&self) -> usize {
        self.layers.iter().map(FdnnLayer::num_params).sum()
    }

    fn params(&self) -> Vec<f64> {
        self.to_params()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_param_len(params.len(), self.num_params())?;
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let (a, b) = (l.intercepts.len(), l.weights.len());
            l.intercepts.copy_from_slice(&params[off..off + a]);
            l.weights.copy_from_slice(&params[off + a..off + a + b]);
            off += a + b;
        }
        Ok(())
    }

    fn loss_gradient(&self, x: &[f64], y: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
        let (pred, cache) = self.forward(x, n)?;
        let (loss, adj) = loss_and_adjoint(&pred, y, &self.output_grid(), n)?;
        Ok((loss, self.backward(&cache, &adj)?.to_flat()))
    }

    fn penalty(&self, lambda: Lambda) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.penalty_terms(lambda)?;
        Ok((v, g.to_flat()))
    }

    fn roughness(&self) -> Result<Roughness> {
        let mut r = Roughness::default();
        for l in &self.layers {
            r.intercept += intercept_roughness(l, None)?;
            r.weight += weight_roughness(l, None)?;
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::quadratic_loss_flat;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};

    fn g(m: usize) -> Grid {
        Grid::new(m).unwrap()
    }

    fn small_config(act: Activation) -> FdnnConfig {
        FdnnConfig {
            input_grid: g(10),
            input_count: 1,
            hidden: vec![HiddenSpec {
                neurons: 2,
                grid: g(8),
                activation: act,
            }],
            output_grid: g(6),
        }
    }

    fn curves(n: usize, r: usize, grid: Grid, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for _ in 0..n * r {
            let (a, b, c): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
            out.extend(grid.points().iter().map(|t| a * (c * t).sin() + b * t));
        }
        out
    }

    /// Loop-based reimplementation of the continuous neuron, independent of the GEMM path.
    fn oracle_forward(net: &FdnnNetwork, x: &[f64], n: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..n {
            let m0 = net.input_grid.len() * net.input_count;
            let mut h: Vec<Vec<f64>> = (0..net.input_count)
                .map(|j| x[i * m0 + j * net.input_grid.len()..i * m0 + (j + 1) * net.input_grid.len()].to_vec())
                .collect();
            for l in &net.layers {
                let q = l.in_grid.trapezoid_weights();
                let mut next = Vec::new();
                for k in 0..l.out_count {
                    let mut hk = Vec::new();
                    for s in 0..l.out_grid.len() {
                        let mut a = l.intercepts[k * l.out_grid.len() + s];
                        for (j, hj) in h.iter().enumerate() {
                            let w = l.weight_surface(k, j);
                            for t in 0..l.in_grid.len() {
                                a += q[t] * w.get(s, t) * hj[t];
                            }
                        }
                        hk.push(l.activation.apply(a));
                    }
                    next.push(hk);
                }
                h = next;
            }
            out.extend_from_slice(&h[0]);
        }
        out
    }

    fn total_objective(net: &FdnnNetwork, x: &[f64], y: &[f64], n: usize, lambda: Lambda) -> f64 {
        let pred = net.predict(x, n).unwrap();
        quadratic_loss_flat(&pred, y, &net.output_grid(), n).unwrap() + net.penalty(lambda).unwrap().0
    }

    #[test]
    fn zero_network_predicts_zero() {
        let cfg = small_config(Activation::Tanh);
        let net = FdnnNetwork::zeros(&cfg).unwrap();
        let x = curves(3, 1, g(10), 1);
        assert!(net.predict(&x, 3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_weight_identity_layer_integrates() {
        let cfg = FdnnConfig::linear(g(21), 1, g(9));
        let mut net = FdnnNetwork::zeros(&cfg).unwrap();
        net.layers[0].weights.iter_mut().for_each(|w| *w = 1.0);
        let x = vec![1.0; 21];
        for v in net.predict(&x, 1).unwrap() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let cfg = FdnnConfig {
            input_grid: g(30),
            input_count: 1,
            hidden: vec![HiddenSpec {
                neurons: 2,
                grid: g(12),
                activation: Activation::Tanh,
            }],
            output_grid: g(9),
        };
        let mut net = FdnnNetwork::init(&cfg, 5).unwrap();
        for l in net.layers.iter_mut() {
            l.weights.iter_mut().for_each(|w| *w *= 0.3);
            l.intercepts.iter_mut().enumerate().for_each(|(i, b)| *b = 0.01 * i as f64);
        }
        let x: Vec<f64> = g(30).points().iter().map(|t| (2.0 * PI * t).sin()).collect();
        let fast = net.predict(&x, 1).unwrap();
        let slow = oracle_forward(&net, &x, 1);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
        let x3 = curves(3, 1, g(30), 9);
        let (p, cache) = net.forward(&x3, 3).unwrap();
        assert_eq!(p, net.predict(&x3, 3).unwrap());
        assert_eq!(cache.inputs.len(), 3);
    }

    #[test]
    fn zero_adjoint_gives_zero_gradients() {
        let net = FdnnNetwork::init(&small_config(Activation::Tanh), 3).unwrap();
        let x = curves(4, 1, g(10), 2);
        let (_, cache) = net.forward(&x, 4).unwrap();
        let grads = net.backward(&cache, &vec![0.0; 4 * 6]).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn single_layer_gradient_collapses_to_outer_product() {
        let cfg = FdnnConfig::linear(g(7), 1, g(5));
        let net = FdnnNetwork::init(&cfg, 4).unwrap();
        let x = curves(1, 1, g(7), 3);
        let y: Vec<f64> = g(5).points().iter().map(|t| t * t).collect();
        let (pred, cache) = net.forward(&x, 1).unwrap();
        let (_, adj) = loss_and_adjoint(&pred, &y, &g(5), 1).unwrap();
        let grads = net.backward(&cache, &adj).unwrap();
        let (qs, qt) = (g(5).trapezoid_weights(), g(7).trapezoid_weights());
        for s in 0..5 {
            for t in 0..7 {
                let expect = qs[s] * qt[t] * 2.0 * (pred[s] - y[s]) * x[t];
                assert!((grads.layers[0].weights[s * 7 + t] - expect).abs() < 1e-14);
            }
            assert!((grads.layers[0].intercepts[s] - qs[s] * 2.0 * (pred[s] - y[s])).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for act in [Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
            let cfg = small_config(act);
            let mut net = FdnnNetwork::init(&cfg, 17).unwrap();
            for l in net.layers.iter_mut() {
                l.intercepts.iter_mut().enumerate().for_each(|(i, b)| *b = 0.1 * ((i as f64) * 0.7).sin());
            }
            let n = 3;
            let x = curves(n, 1, g(10), 8);
            let y = curves(n, 1, g(6), 21);
            let lambda = Lambda { b: 1e-4, w: 1e-6 };
            let (_, lg) = net.loss_gradient(&x, &y, n).unwrap();
            let (_, pg) = net.penalty(lambda).unwrap();
            let params = net.params();
            let eps = 1e-5;
            let mut probe = net.clone();
            let mut worst = 0.0f64;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += eps;
                probe.set_params(&p).unwrap();
                let up = total_objective(&probe, &x, &y, n, lambda);
                p[i] -= 2.0 * eps;
                probe.set_params(&p).unwrap();
                let down = total_objective(&probe, &x, &y, n, lambda);
                let fd = (up - down) / (2.0 * eps);
                let an = lg[i] + pg[i];
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-4, "{act:?}: {worst}");
        }
    }

    #[test]
    fn init_is_deterministic_with_zero_intercepts() {
        let cfg = small_config(Activation::Relu);
        let a = FdnnNetwork::init(&cfg, 99).unwrap();
        assert_eq!(a, FdnnNetwork::init(&cfg, 99).unwrap());
        assert_ne!(a, FdnnNetwork::init(&cfg, 100).unwrap());
        assert!(a.layers.iter().all(|l| l.intercepts.iter().all(|&b| b == 0.0)));
        a.validate().unwrap();
    }

    #[test]
    fn init_variance_is_two_over_fan_in() {
        let cfg = FdnnConfig {
            input_grid: g(50),
            input_count: 4,
            hidden: vec![],
            output_grid: g(50),
        };
        let net = FdnnNetwork::init(&cfg, 7).unwrap();
        let w = &net.layers[0].weights[..10_000];
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        assert!((var - 0.5).abs() < 0.05, "{var}");
    }

    #[test]
    fn penalty_values() {
        let cfg = FdnnConfig::linear(g(11), 1, g(101));
        let mut net = FdnnNetwork::zeros(&cfg).unwrap();
        // constants have no roughness
        net.layers[0].intercepts.iter_mut().for_each(|b| *b = 2.0);
        net.layers[0].weights.iter_mut().for_each(|w| *w = -1.5);
        assert!(net.penalty(Lambda::both(1.0)).unwrap().0.abs() < 1e-12);

        let (v, grad) = net.penalty(Lambda::ZERO).unwrap();
        assert_eq!(v, 0.0);
        assert!(grad.iter().all(|&x| x == 0.0));

        let grid = g(101);
        net.layers[0].intercepts = grid.points().iter().map(|s| (2.0 * PI * s).sin()).collect();
        let (v, _) = net.penalty(Lambda { b: 1.0, w: 0.0 }).unwrap();
        let exact = 8.0 * PI.powi(4);
        assert!((v - exact).abs() < 0.01 * exact, "{v} vs {exact}");
        assert!(net.penalty(Lambda { b: -1.0, w: 0.0 }).is_err());
    }

    #[test]
    fn penalty_ignores_affine_shifts() {
        let cfg = small_config(Activation::Tanh);
        let net = FdnnNetwork::init(&cfg, 1).unwrap();
        let lambda = Lambda { b: 0.3, w: 0.7 };
        let base = net.penalty(lambda).unwrap().0;
        let mut shifted = net.clone();
        for l in shifted.layers.iter_mut() {
            let (mo, mi) = (l.out_grid, l.in_grid);
            for k in 0..l.out_count {
                for s in 0..mo.len() {
                    l.intercepts[k * mo.len() + s] += 1.0 - 2.0 * mo.point(s);
                }
                for j in 0..l.in_count {
                    let block = l.block_mut(k, j);
                    for s in 0..mo.len() {
                        for t in 0..mi.len() {
                            block[s * mi.len() + t] += 0.5 + 3.0 * mo.point(s) - mi.point(t);
                        }
                    }
                }
            }
        }
        let after = shifted.penalty(lambda).unwrap().0;
        assert!((after - base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn permuting_hidden_neurons_preserves_prediction() {
        let cfg = FdnnConfig {
            input_grid: g(15),
            input_count: 1,
            hidden: vec![HiddenSpec {
                neurons: 3,
                grid: g(11),
                activation: Activation::Tanh,
            }],
            output_grid: g(7),
        };
        let net = FdnnNetwork::init(&cfg, 23).unwrap();
        let mut perm = net.clone();
        let order = [2usize, 0, 1];
        let m = 11;
        for (new_k, &old_k) in order.iter().enumerate() {
            perm.layers[0].intercepts[new_k * m..(new_k + 1) * m]
                .copy_from_slice(&net.layers[0].intercepts[old_k * m..(old_k + 1) * m]);
            perm.layers[0].block_mut(new_k, 0).copy_from_slice(net.layers[0].block(old_k, 0));
            perm.layers[1].block_mut(0, new_k).copy_from_slice(net.layers[1].block(0, old_k));
        }
        let x = curves(2, 1, g(15), 4);
        let (a, b) = (net.predict(&x, 2).unwrap(), perm.predict(&x, 2).unwrap());
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let net = FdnnNetwork::init(&small_config(Activation::Tanh), 1).unwrap();
        assert!(net.predict(&[0.0; 9], 1).is_err());
        let (_, cache) = net.forward(&[0.0; 20], 2).unwrap();
        assert!(net.backward(&cache, &[0.0; 6]).is_err());
    }
}
