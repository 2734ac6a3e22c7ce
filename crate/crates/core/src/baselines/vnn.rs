//! Dense network on discretized curves: `R·m` inputs, `m_y` outputs.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{shape_err, Error, Result};
use crate::grid::Grid;
use crate::linalg::gemm;
use crate::model::{check_param_len, loss_and_adjoint, Lambda, Model, Predictor, Roughness};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnnConfig {
    pub input_grid: Grid,
    pub input_count: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_grid: Grid,
}

impl VnnConfig {
    /// Two tanh layers of 128 units.
    pub fn standard(input_grid: Grid, input_count: usize, output_grid: Grid) -> Self {
        VnnConfig {
            input_grid,
            input_count,
            hidden: vec![128, 128],
            activation: Activation::Tanh,
            output_grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn pre(&self, h: &[f64], n: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            z.extend_from_slice(&self.bias);
        }
        gemm(n, self.inputs, self.outputs, 1.0, h, (self.inputs, 1), &self.weights, (1, self.inputs), 1.0, &mut z, (self.outputs, 1));
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorNN {
    pub input_grid: Grid,
    pub input_count: usize,
    pub output_grid: Grid,
    pub layers: Vec<DenseLayer>,
}

impl VectorNN {
    pub fn zeros(cfg: &VnnConfig) -> Result<Self> {
        if cfg.input_count == 0 || cfg.hidden.contains(&0) {
            return Err(Error::InvalidParameter("layer sizes must be positive".into()));
        }
        let mut sizes = vec![cfg.input_count * cfg.input_grid.len()];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(cfg.output_grid.len());
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| DenseLayer {
                inputs: w[0],
                outputs: w[1],
                activation: if i == last { Activation::Identity } else { cfg.activation },
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(VectorNN {
            input_grid: cfg.input_grid,
            input_count: cfg.input_count,
            output_grid: cfg.output_grid,
            layers,
        })
    }

    /// Zero biases, weights iid `Normal(0, 1/fan_in)`.
    pub fn init(cfg: &VnnConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(cfg)?;
        let mut rng = rng::stream(seed, rng::streams::INIT);
        for l in net.layers.iter_mut() {
            let normal = Normal::new(0.0, (1.0 / l.inputs as f64).sqrt()).expect("positive std");
            for w in l.weights.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    fn forward(&self, x: &[f64], n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut hs = vec![x.to_vec()];
        let mut zs = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let z = l.pre(hs.last().expect("input"), n);
            hs.push(z.iter().map(|v| l.activation.apply(*v)).collect());
            zs.push(z);
        }
        (hs, zs)
    }
}

impl Predictor for VectorNN {
    fn input_grid(&self) -> Grid {
        self.input_grid
    }

    fn input_count(&self) -> usize {
        self.input_count
    }

    fn output_grid(&self) -> Grid {
        self.output_grid
    }

    fn predict(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_inputs(x, n)?;
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.pre(&h, n).into_iter().map(|v| l.activation.apply(v)).collect();
        }
        Ok(h)
    }
}

impl Model for VectorNN {
    fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_param_len(params.len(), self.num_params())?;
        let mut off = 0;
        for l in self.layers.iter_mut() {
            let (a, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&params[off..off + a]);
            l.bias.copy_from_slice(&params[off + a..off + a + b]);
            off += a + b;
        }
        Ok(())
    }

    fn loss_gradient(&self, x: &[f64], y: &[f64], n: usize) -> Result<(f64, Vec<f64>)> {
        self.check_inputs(x, n)?;
        if y.len() != n * self.output_grid.len() {
            return Err(shape_err!("{} response values for {n} samples", y.len()));
        }
        let (hs, zs) = self.forward(x, n);
        let (loss, mut g) = loss_and_adjoint(hs.last().expect("output"), y, &self.output_grid, n)?;
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            let gz: Vec<f64> = g.iter().zip(&zs[i]).map(|(g, z)| g * l.activation.derivative(*z)).collect();
            let mut gl = vec![0.0; l.weights.len() + l.bias.len()];
            let (gw, gb) = gl.split_at_mut(l.weights.len());
            gemm(l.outputs, n, l.inputs, 1.0, &gz, (1, l.outputs), &hs[i], (l.inputs, 1), 0.0, gw, (l.inputs, 1));
            for row in gz.chunks_exact(l.outputs) {
                for (b, v) in gb.iter_mut().zip(row) {
                    *b += v;
                }
            }
            if i > 0 {
                let mut gh = vec![0.0; n * l.inputs];
                gemm(n, l.outputs, l.inputs, 1.0, &gz, (l.outputs, 1), &l.weights, (l.inputs, 1), 0.0, &mut gh, (l.inputs, 1));
                g = gh;
            }
            grads.push(gl);
        }
        grads.reverse();
        Ok((loss, grads.concat()))
    }

    /// Dense layers carry no roughness penalty.
    fn penalty(&self, lambda: Lambda) -> Result<(f64, Vec<f64>)> {
        lambda.validate()?;
        Ok((0.0, vec![0.0; self.num_params()]))
    }

    fn roughness(&self) -> Result<Roughness> {
        Ok(Roughness::default())
    }
}
