//! Functional Basis Neural Network.
//!
//! Same layered structure as [`crate::fdnn`], but every intercept is `Σ_b β_b v*_b(s)` and
//! every weight surface is `Σ_{c,d} W_{cd} v_c(s) v_d(t)`. Learning acts on `β` and `W`.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::OnceCell;
use core::fmt;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::bspline::{BSplineBasis, DEFAULT_ORDER};
use crate::error::{shape_err, Error, Result};
use crate::fdnn::{FdnnConfig, FdnnLayer, FdnnNetwork};
use crate::grid::Grid;
use crate::linalg::{gemm, Matrix};
use crate::model::{check_param_len, loss_and_adjoint, Lambda, Model, Predictor, Roughness};
use crate::rng;

/// Basis sizes shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    /// `B`: intercept basis size.
    pub intercept: usize,
    /// `C`: weight basis size along the output (s) axis.
    pub s: usize,
    /// `D`: weight basis size along the input (t) axis.
    pub t: usize,
    pub order: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec::uniform(15)
    }
}

impl BasisSpec {
    pub fn uniform(count: usize) -> Self {
        BasisSpec {
            intercept: count,
            s: count,
            t: count,
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbnnConfig {
    pub architecture: FdnnConfig,
    pub basis: BasisSpec,
}

/// Design and Gram matrices derived from a layer's bases and grids.
#[derive(Debug, Clone)]
struct Derived {
    /// `m_out x B`.
    vstar: Matrix,
    /// `m_out x C`.
    vs: Matrix,
    /// `m_in x D`.
    vt: Matrix,
    in_q: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Grams {
    g_intercept: Matrix,
    s00: Matrix,
    s20: Matrix,
    s22: Matrix,
    t00: Matrix,
    t02: Matrix,
    t22: Matrix,
}

/// Lazily computed values that never take part in equality or serialization.
#[derive(Clone)]
struct Memo<T>(OnceCell<T>);

impl<T> Default for Memo<T> {
    fn default() -> Self {
        Memo(OnceCell::new())
    }
}

impl<T> PartialEq for Memo<T> {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl<T> fmt::Debug for Memo<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Memo")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbnnLayer {
    pub in_count: usize,
    pub out_count: usize,
    pub in_grid: Grid,
    pub out_grid: Grid,
    pub activation: Activation,
    pub intercept_basis: BSplineBasis,
    pub s_basis: BSplineBasis,
    pub t_basis: BSplineBasis,
    /// `K x B`.
    pub intercepts: Vec<f64>,
    /// Block `(k, j)` at offset `(k * in_count + j) * C * D`, each `C x D`.
    pub weights: Vec<f64>,
    #[serde(skip)]
    derived: Memo<Derived>,
    #[serde(skip)]
    grams: Memo<Grams>,
}

impl FbnnLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn zeros(
        in_count: usize,
        out_count: usize,
        in_grid: Grid,
        out_grid: Grid,
        activation: Activation,
        intercept_basis: BSplineBasis,
        s_basis: BSplineBasis,
        t_basis: BSplineBasis,
    ) -> Self {
        let blen = s_basis.num_basis() * t_basis.num_basis();
        FbnnLayer {
            in_count,
            out_count,
            in_grid,
            out_grid,
            activation,
            intercepts: vec![0.0; out_count * intercept_basis.num_basis()],
            weights: vec![0.0; out_count * in_count * blen],
            intercept_basis,
            s_basis,
            t_basis,
            derived: Memo::default(),
            grams: Memo::default(),
        }
    }

    fn block_len(&self) -> usize {
        self.s_basis.num_basis() * self.t_basis.num_basis()
    }

    pub fn block(&self, k: usize, j: usize) -> &[f64] {
        let b = self.block_len();
        let o = (k * self.in_count + j) * b;
        &self.weights[o..o + b]
    }

    pub fn num_params(&self) -> usize {
        self.intercepts.len() + self.weights.len()
    }

    fn derived(&self) -> &Derived {
        self.derived.0.get_or_init(|| Derived {
            vstar: self.intercept_basis.design(&self.out_grid),
            vs: self.s_basis.design(&self.out_grid),
            vt: self.t_basis.design(&self.in_grid),
            in_q: self.in_grid.trapezoid_weights(),
        })
    }

    fn grams(&self) -> &Grams {
        self.grams.0.get_or_init(|| {
            Grams {
                g_intercept: self.intercept_basis.gram(2, 2),
                s00: self.s_basis.gram(0, 0),
                s20: self.s_basis.gram(2, 0),
                s22: self.s_basis.gram(2, 2),
                t00: self.t_basis.gram(0, 0),
                t02: self.t_basis.gram(0, 2),
                t22: self.t_basis.gram(2, 2),
            }
        })
    }

    fn validate(&self) -> Result<()> {
        if self.in_count == 0 || self.out_count == 0 {
            return Err(Error::InvalidParameter("layer needs at least one input and one neuron".into()));
        }
        if self.intercepts.len() != self.out_count * self.intercept_basis.num_basis() {
            return Err(shape_err!("intercept coefficients have {} values", self.intercepts.len()));
        }
        if self.weights.len() != self.out_count * self.in_count * self.block_len() {
            return Err(shape_err!("weight coefficients have {} values", self.weights.len()));
        }
        if self.intercepts.iter().chain(&self.weights).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer coefficients".into()));
        }
        Ok(())
    }

    /// Expands the coefficients into grid-valued parameter functions.
    pub fn to_fdnn(&self) -> FdnnLayer {
        let d = self.derived();
        let (mo, mi) = (self.out_grid.len(), self.in_grid.len());
        let (nb, nc, nd) = (self.intercept_basis.num_basis(), self.s_basis.num_basis(), self.t_basis.num_basis());
        let mut out = FdnnLayer::zeros(self.in_count, self.out_count, self.in_grid, self.out_grid, self.activation);
        for k in 0..self.out_count {
            gemm(mo, nb, 1, 1.0, &d.vstar.data, (nb, 1), &self.intercepts[k * nb..], (1, 1), 0.0,
                &mut out.intercepts[k * mo..], (1, 1));
            for j in 0..self.in_count {
                let mut tmp = vec![0.0; mo * nd];
                gemm(mo, nc, nd, 1.0, &d.vs.data, (nc, 1), self.block(k, j), (nd, 1), 0.0, &mut tmp, (nd, 1));
                gemm(mo, nd, mi, 1.0, &tmp, (nd, 1), &d.vt.data, (1, nd), 0.0, out.block_mut(k, j), (mi, 1));
            }
        }
        out
    }

    /// Returns `(A, pre)`: functionals `n x J x D` and pre-activations `n x K x m_out`.
    fn forward(&self, input: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
        let d = self.derived();
        let (mi, mo) = (self.in_grid.len(), self.out_grid.len());
        let (jn, kn) = (self.in_count, self.out_count);
        let (nb, nc, nd) = (self.intercept_basis.num_basis(), self.s_basis.num_basis(), self.t_basis.num_basis());
        let hq: Vec<f64> = input.iter().enumerate().map(|(i, v)| v * d.in_q[i % mi]).collect();
        // A = HQ · Vt, all (sample, input) rows at once
        let mut a = vec![0.0; n * jn * nd];
        gemm(n * jn, mi, nd, 1.0, &hq, (mi, 1), &d.vt.data, (nd, 1), 0.0, &mut a, (nd, 1));
        let mut u = vec![0.0; n * kn * nc];
        for k in 0..kn {
            for j in 0..jn {
                // U_k += A_j · W_kjᵀ
                gemm(n, nd, nc, 1.0, &a[j * nd..], (jn * nd, 1), self.block(k, j), (1, nd), 1.0,
                    &mut u[k * nc..], (kn * nc, 1));
            }
        }
        let mut pre = vec![0.0; n * kn * mo];
        // intercept functions once, then broadcast
        let mut b = vec![0.0; kn * mo];
        gemm(kn, nb, mo, 1.0, &self.intercepts, (nb, 1), &d.vstar.data, (1, nb), 0.0, &mut b, (mo, 1));
        for chunk in pre.chunks_exact_mut(kn * mo) {
            chunk.copy_from_slice(&b);
        }
        gemm(n * kn, nc, mo, 1.0, &u, (nc, 1), &d.vs.data, (1, nc), 1.0, &mut pre, (mo, 1));
        (a, pre)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        a: &[f64],
        pre: &[f64],
        g_out: &[f64],
        n: usize,
        g_intercepts: &mut [f64],
        g_weights: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let d = self.derived();
        let (mi, mo) = (self.in_grid.len(), self.out_grid.len());
        let (jn, kn) = (self.in_count, self.out_count);
        let (nb, nc, nd) = (self.intercept_basis.num_basis(), self.s_basis.num_basis(), self.t_basis.num_basis());
        let act = self.activation;
        let g_pre: Vec<f64> = g_out.iter().zip(pre).map(|(g, p)| g * act.derivative(*p)).collect();
        let mut col_sum = vec![0.0; kn * mo];
        for chunk in g_pre.chunks_exact(kn * mo) {
            for (s, g) in col_sum.iter_mut().zip(chunk) {
                *s += g;
            }
        }
        // gB = colsum · Vstar
        gemm(kn, mo, nb, 1.0, &col_sum, (mo, 1), &d.vstar.data, (nb, 1), 1.0, g_intercepts, (nb, 1));
        // Z = gA · Vs over all (sample, neuron) rows
        let mut z = vec![0.0; n * kn * nc];
        gemm(n * kn, mo, nc, 1.0, &g_pre, (mo, 1), &d.vs.data, (nc, 1), 0.0, &mut z, (nc, 1));
        let blen = nc * nd;
        for k in 0..kn {
            for j in 0..jn {
                let off = (k * jn + j) * blen;
                gemm(nc, n, nd, 1.0, &z[k * nc..], (1, kn * nc), &a[j * nd..], (jn * nd, 1), 1.0,
                    &mut g_weights[off..off + blen], (nd, 1));
            }
        }
        if !want_input_grad {
            return None;
        }
        let mut g_a = vec![0.0; n * jn * nd];
        for k in 0..kn {
            for j in 0..jn {
                gemm(n, nc, nd, 1.0, &z[k * nc..], (kn * nc, 1), self.block(k, j), (nd, 1), 1.0,
                    &mut g_a[j * nd..], (jn * nd, 1));
            }
        }
        let mut g_in = vec![0.0; n * jn * mi];
        gemm(n * jn, nd, mi, 1.0, &g_a, (nd, 1), &d.vt.data, (1, nd), 0.0, &mut g_in, (mi, 1));
        for (i, g) in g_in.iter_mut().enumerate() {
            *g *= d.in_q[i % mi];
        }
        Some(g_in)
    }

    /// Unweighted `(Σ βᵀG₂β, Σ ⟨W, MW⟩)`; accumulates `2λ·G₂β` and `2λ·MW` when asked.
    fn roughness_terms(&self, grad: Option<(&mut [f64], &mut [f64], Lambda)>) -> Result<(f64, f64)> {
        let min_order = self.intercept_basis.order().min(self.s_basis.order()).min(self.t_basis.order());
        if min_order < 3 {
            return Err(Error::InvalidParameter(alloc::format!(
                "roughness needs spline order >= 3, got {min_order}"
            )));
        }
        let g = self.grams();
        let (nb, nc, nd) = (self.intercept_basis.num_basis(), self.s_basis.num_basis(), self.t_basis.num_basis());
        let mut grad = grad;
        let mut jb = 0.0;
        for k in 0..self.out_count {
            let beta = &self.intercepts[k * nb..(k + 1) * nb];
            let gb = g.g_intercept.matvec(beta);
            jb += beta.iter().zip(&gb).map(|(x, y)| x * y).sum::<f64>();
            if let Some((gi, _, lambda)) = grad.as_mut() {
                for (o, v) in gi[k * nb..(k + 1) * nb].iter_mut().zip(&gb) {
                    *o += 2.0 * lambda.b * v;
                }
            }
        }
        let blen = nc * nd;
        let mut mw = vec![0.0; blen];
        let mut tmp = vec![0.0; blen];
        let mut jw = 0.0;
        for b in 0..self.out_count * self.in_count {
            let w = &self.weights[b * blen..(b + 1) * blen];
            mw.iter_mut().for_each(|v| *v = 0.0);
            // (S, T, transpose T?) for the four tensor terms
            let terms: [(&Matrix, &Matrix, bool); 4] = [
                (&g.s22, &g.t00, false),
                (&g.s20, &g.t02, true),
                (&g.s20, &g.t02, false),
                (&g.s00, &g.t22, false),
            ];
            for (idx, (s, t, t_transposed)) in terms.iter().enumerate() {
                // second term: S20 W T02ᵀ; third: S02 W T20ᵀ = S20ᵀ W T02
                let s_strides = if idx == 2 { (1, nc) } else { (nc, 1) };
                gemm(nc, nc, nd, 1.0, &s.data, s_strides, w, (nd, 1), 0.0, &mut tmp, (nd, 1));
                let t_strides = if *t_transposed { (1, nd) } else { (nd, 1) };
                gemm(nc, nd, nd, 1.0, &tmp, (nd, 1), &t.data, t_strides, 1.0, &mut mw, (nd, 1));
            }
            jw += w.iter().zip(&mw).map(|(x, y)| x * y).sum::<f64>();
            if let Some((_, gw, lambda)) = grad.as_mut() {
                for (o, v) in gw[b * blen..(b + 1) * blen].iter_mut().zip(&mw) {
                    *o += 2.0 * lambda.w * v;
                }
            }
        }
        Ok((jb, jw))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbnnNetwork {
    pub input_grid: Grid,
    pub input_count: usize,
    pub layers: Vec<FbnnLayer>,
}

/// Per-layer inputs, functionals and pre-activations from the forward pass.
#[derive(Debug, Clone)]
pub struct FbnnCache {
    pub n: usize,
    pub inputs: Vec<Vec<f64>>,
    pub functionals: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl FbnnConfig {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        let b = &self.basis;
        for count in [b.intercept, b.s, b.t] {
            BSplineBasis::new(count, b.order)?;
        }
        Ok(())
    }
}

impl FbnnNetwork {
    pub fn zeros(config: &FbnnConfig) -> Result<Self> {
        config.validate()?;
        let b = config.basis;
        let layers = config
            .architecture
            .layer_shapes()
            .into_iter()
            .map(|(j, k, gi, go, act)| -> Result<FbnnLayer> {
                Ok(FbnnLayer::zeros(
                    j,
                    k,
                    gi,
                    go,
                    act,
                    BSplineBasis::new(b.intercept, b.order)?,
                    BSplineBasis::new(b.s, b.order)?,
                    BSplineBasis::new(b.t, b.order)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FbnnNetwork {
            input_grid: config.architecture.input_grid,
            input_count: config.architecture.input_count,
            layers,
        })
    }

    /// Zero intercept coefficients; weight coefficients iid `Normal(0, 2/(J·D))`.
    pub fn init(config: &FbnnConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = rng::stream(seed, rng::streams::INIT);
        for l in net.layers.iter_mut() {
            let var = 2.0 / (l.in_count * l.t_basis.num_basis()) as f64;
            let normal = Normal::new(0.0, var.sqrt()).expect("positive std");
            for w in l.weights.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
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

    pub fn to_fdnn(&self) -> FdnnNetwork {
        FdnnNetwork {
            input_grid: self.input_grid,
            input_count: self.input_count,
            layers: self.layers.iter().map(FbnnLayer::to_fdnn).collect(),
        }
    }

    /// Same coefficients, evaluated on a different response grid.
    pub fn with_output_grid(&self, grid: Grid) -> Self {
        let mut out = self.clone();
        let last = out.layers.last_mut().expect("validated network");
        last.out_grid = grid;
        last.derived = Memo::default();
        last.grams = Memo::default();
        out
    }

    pub fn forward(&self, x: &[f64], n: usize) -> Result<(Vec<f64>, FbnnCache)> {
        self.check_inputs(x, n)?;
        let mut cache = FbnnCache {
            n,
            inputs: vec![x.to_vec()],
            functionals: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        for layer in &self.layers {
            let (a, pre) = layer.forward(cache.inputs.last().expect("input"), n);
            let act = layer.activation;
            cache.inputs.push(pre.iter().map(|v| act.apply(*v)).collect());
            cache.functionals.push(a);
            cache.pre.push(pre);
        }
        Ok((cache.inputs.last().expect("output").clone(), cache))
    }

    /// Flat coefficient gradient (layer by layer, intercepts then weights).
    pub fn backward(&self, cache: &FbnnCache, output_adjoint: &[f64]) -> Result<Vec<f64>> {
        let n = cache.n;
        if cache.pre.len() != self.layers.len() || cache.functionals.len() != self.layers.len() {
            return Err(shape_err!("cache was produced by a different network"));
        }
        let out_len = n * self.output_grid().len();
        if output_adjoint.len() != out_len || cache.pre[self.layers.len() - 1].len() != out_len {
            return Err(shape_err!("adjoint has {} values, batch output {}", output_adjoint.len(), out_len));
        }
        let mut grad = vec![0.0; self.num_params()];
        let offsets = self.offsets();
        let mut g = output_adjoint.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let (gi, gw) = grad[offsets[l]..offsets[l] + layer.num_params()].split_at_mut(layer.intercepts.len());
            if let Some(next) = layer.backward(&cache.functionals[l], &cache.pre[l], &g, n, gi, gw, l > 0) {
                g = next;
            }
        }
        Ok(grad)
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = off;
                off += l.num_params();
                o
            })
            .collect()
    }
}

impl Predictor for FbnnNetwork {
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
            h = layer.forward(&h, n).1.into_iter().map(|v| act.apply(v)).collect();
        }
        Ok(h)
    }
}

impl Model for FbnnNetwork {
    fn num_params(&self) -> usize {
        self.layers.iter().map(FbnnLayer::num_params).sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.intercepts);
            out.extend_from_slice(&l.weights);
        }
        out
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
        Ok((loss, self.backward(&cache, &adj)?))
    }

    fn penalty(&self, lambda: Lambda) -> Result<(f64, Vec<f64>)> {
        lambda.validate()?;
        let mut grad = vec![0.0; self.num_params()];
        if lambda.is_zero() {
            return Ok((0.0, grad));
        }
        let offsets = self.offsets();
        let mut value = 0.0;
        for (l, layer) in self.layers.iter().enumerate() {
            let (gi, gw) = grad[offsets[l]..offsets[l] + layer.num_params()].split_at_mut(layer.intercepts.len());
            let (jb, jw) = layer.roughness_terms(Some((gi, gw, lambda)))?;
            value += lambda.b * jb + lambda.w * jw;
        }
        Ok((value, grad))
    }

    fn roughness(&self) -> Result<Roughness> {
        let mut r = Roughness::default();
        for l in &self.layers {
            let (jb, jw) = l.roughness_terms(None)?;
            r.intercept += jb;
            r.weight += jw;
        }
        Ok(r)
    }
}
