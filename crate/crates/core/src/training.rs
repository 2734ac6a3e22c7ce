//! Optimizers, early stopping, cross-validated stopping strategies, smoothing-parameter
//! tuning and gradient checking for any [`Model`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
#[allow(unused_imports)] // inherent under `cfg(test)`, where std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::datagen::FuncDataset;
use crate::error::{shape_err, Error, Result};
use crate::grid::GridFunction;
use crate::model::{quadratic_loss_flat, Lambda, Model, Predictor};
use crate::rng;

/// `(1/N) Σ_i ∫ (ŷ_i − y_i)²` over batches of curves.
pub fn quadratic_loss(pred: &[GridFunction], truth: &[GridFunction]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(shape_err!("{} predictions for {} targets", pred.len(), truth.len()));
    }
    let grid = pred.first().ok_or_else(|| Error::InvalidParameter("loss over an empty batch".into()))?.grid;
    let mut p = Vec::new();
    let mut t = Vec::new();
    for (a, b) in pred.iter().zip(truth) {
        if a.grid != grid || b.grid != grid {
            return Err(shape_err!("curves on different grids"));
        }
        p.extend_from_slice(&a.values);
        t.extend_from_slice(&b.values);
    }
    quadratic_loss_flat(&p, &t, &grid, pred.len())
}

/// Mean loss of `model` on `data`.
pub fn evaluate_loss<M: Predictor>(model: &M, data: &FuncDataset) -> Result<f64> {
    let pred = model.predict(&data.x, data.len())?;
    quadratic_loss_flat(&pred, &data.y, &data.y_grid, data.len())
}

pub fn evaluate_rmse<M: Predictor>(model: &M, data: &FuncDataset) -> Result<f64> {
    Ok(evaluate_loss(model, data)?.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Gradient,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam {
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    Full,
    /// Shuffled minibatches of this size; one iteration is one pass over the data.
    Mini(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step_size: f64,
    pub max_iterations: usize,
    /// Non-improving iterations tolerated before stopping; `None` never stops early.
    pub patience: Option<usize>,
    pub optimizer: Optimizer,
    pub batch: BatchMode,
    pub lambda: Lambda,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 1e-3,
            max_iterations: 1000,
            patience: Some(50),
            optimizer: Optimizer::ADAM,
            batch: BatchMode::Full,
            lambda: Lambda::ZERO,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidParameter(format!("step size {}", self.step_size)));
        }
        if self.patience == Some(0) {
            return Err(Error::InvalidParameter("patience must be at least 1".into()));
        }
        if self.batch == BatchMode::Mini(0) {
            return Err(Error::InvalidParameter("minibatch size must be at least 1".into()));
        }
        if let Optimizer::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(Error::InvalidParameter("adam decays must be in [0, 1), epsilon > 0".into()));
            }
        }
        self.lambda.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<M> {
    /// Parameters from the best validation iteration (the last one without validation data).
    pub model: M,
    /// Mean penalized training objective over each iteration's updates.
    pub train_loss: Vec<f64>,
    /// Validation loss after each iteration, penalty excluded. Empty without validation data.
    pub val_loss: Vec<f64>,
    /// Iterations executed.
    pub stopping_iteration: usize,
    /// Iteration whose parameters were returned; 0 is the initial model.
    pub best_iteration: usize,
    pub test_rmse: Option<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

struct Stepper {
    optimizer: Optimizer,
    step: f64,
    adam: Option<Adam>,
}

impl Stepper {
    fn new(cfg: &TrainConfig, p: usize) -> Self {
        Stepper {
            optimizer: cfg.optimizer,
            step: cfg.step_size,
            adam: matches!(cfg.optimizer, Optimizer::Adam { .. }).then(|| Adam {
                m: vec![0.0; p],
                v: vec![0.0; p],
                t: 0,
            }),
        }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        match (self.optimizer, self.adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, epsilon }, Some(st)) => {
                st.t += 1;
                let c1 = 1.0 - beta1.powi(st.t);
                let c2 = 1.0 - beta2.powi(st.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                    let mh = st.m[i] / c1;
                    let vh = st.v[i] / c2;
                    params[i] -= self.step * mh / (vh.sqrt() + epsilon);
                }
            }
            _ => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.step * g;
                }
            }
        }
    }
}

/// Penalized objective and gradient on rows `rows` of `data` (all rows when `None`).
fn objective<M: Model>(model: &M, data: &FuncDataset, rows: Option<&[usize]>, lambda: Lambda) -> Result<(f64, Vec<f64>)> {
    let (mut loss, mut grad) = match rows {
        None => model.loss_gradient(&data.x, &data.y, data.len())?,
        Some(r) => {
            let b = data.subset(r);
            model.loss_gradient(&b.x, &b.y, b.len())?
        }
    };
    if !lambda.is_zero() {
        let (pv, pg) = model.penalty(lambda)?;
        loss += pv;
        for (g, p) in grad.iter_mut().zip(&pg) {
            *g += p;
        }
    }
    Ok((loss, grad))
}

/// Trains `model` on `train`, monitoring `val` for early stopping when given.
pub fn train_early_stopping<M: Model>(
    model: M,
    train: &FuncDataset,
    val: Option<&FuncDataset>,
    cfg: &TrainConfig,
) -> Result<FitResult<M>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut model = model;
    let mut params = model.params();
    let mut stepper = Stepper::new(cfg, params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, rng::streams::MINIBATCH);

    let mut best_params = params.clone();
    let mut best_val = match val {
        Some(v) => evaluate_loss(&model, v)?,
        None => f64::INFINITY,
    };
    let (mut best_iteration, mut since_best) = (0, 0);
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut iteration = 0;

    while iteration < cfg.max_iterations {
        iteration += 1;
        let mut total = 0.0;
        let mut batches = 0usize;
        match cfg.batch {
            BatchMode::Full => {
                let (l, g) = objective(&model, train, None, cfg.lambda)?;
                check_finite(l, &g, iteration)?;
                stepper.apply(&mut params, &g);
                model.set_params(&params)?;
                total += l;
                batches += 1;
            }
            BatchMode::Mini(size) => {
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(size) {
                    let (l, g) = objective(&model, train, Some(chunk), cfg.lambda)?;
                    check_finite(l, &g, iteration)?;
                    stepper.apply(&mut params, &g);
                    model.set_params(&params)?;
                    total += l;
                    batches += 1;
                }
            }
        }
        train_loss.push(total / batches as f64);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { iteration });
        }
        if let Some(v) = val {
            let vl = evaluate_loss(&model, v)?;
            if !vl.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            val_loss.push(vl);
            if vl < best_val {
                best_val = vl;
                best_params.copy_from_slice(&params);
                best_iteration = iteration;
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience.is_some_and(|p| since_best >= p) {
                    break;
                }
            }
        }
    }
    if val.is_some() {
        model.set_params(&best_params)?;
    } else {
        best_iteration = iteration;
    }
    Ok(FitResult {
        model,
        train_loss,
        val_loss,
        stopping_iteration: iteration,
        best_iteration,
        test_rmse: None,
    })
}

fn check_finite(loss: f64, grad: &[f64], iteration: usize) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Diverged { iteration });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsStrategy {
    Mean,
    Median,
    Max,
    Min,
    Wavg,
}

impl EsStrategy {
    pub const ALL: [EsStrategy; 5] = [EsStrategy::Mean, EsStrategy::Median, EsStrategy::Max, EsStrategy::Min, EsStrategy::Wavg];

    pub fn name(&self) -> &'static str {
        match self {
            EsStrategy::Mean => "mean",
            EsStrategy::Median => "median",
            EsStrategy::Max => "max",
            EsStrategy::Min => "min",
            EsStrategy::Wavg => "wavg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        EsStrategy::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown early-stopping strategy '{s}'")))
    }

    /// Aggregated iteration count, rounded to the nearest integer. `None` for `Wavg`.
    pub fn aggregate(&self, iterations: &[usize]) -> Option<usize> {
        if iterations.is_empty() {
            return None;
        }
        let mut v = iterations.to_vec();
        v.sort_unstable();
        let n = v.len();
        match self {
            EsStrategy::Mean => Some((v.iter().sum::<usize>() as f64 / n as f64).round() as usize),
            EsStrategy::Median if n % 2 == 1 => Some(v[n / 2]),
            EsStrategy::Median => Some(((v[n / 2 - 1] + v[n / 2]) as f64 / 2.0).round() as usize),
            EsStrategy::Max => v.last().copied(),
            EsStrategy::Min => v.first().copied(),
            EsStrategy::Wavg => None,
        }
    }
}

/// Shuffled assignment of `0..n` to `k` folds of near-equal size.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("{k} folds for {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, rng::streams::FOLDS));
    let mut folds = vec![Vec::new(); k];
    for (i, v) in idx.into_iter().enumerate() {
        folds[i % k].push(v);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

/// `(train, validation)` for fold `f`.
pub fn fold_split(data: &FuncDataset, folds: &[Vec<usize>], f: usize) -> (FuncDataset, FuncDataset) {
    let rest: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != f)
        .flat_map(|(_, v)| v.iter().copied())
        .collect();
    (data.subset(&rest), data.subset(&folds[f]))
}

#[derive(Debug, Clone)]
pub struct CvResult<M> {
    pub model: M,
    pub strategy: EsStrategy,
    pub fold_best_iterations: Vec<usize>,
    pub fold_val_loss: Vec<f64>,
    /// Retraining length; `None` for `Wavg`.
    pub aggregated_iteration: Option<usize>,
}

/// k-fold early stopping followed by aggregation per `strategy`.
///
/// Every fold model and the retrained model start from `factory(cfg.seed)`.
pub fn cv_early_stopping<M: Model>(
    factory: impl Fn(u64) -> Result<M>,
    data: &FuncDataset,
    k: usize,
    strategy: EsStrategy,
    cfg: &TrainConfig,
) -> Result<CvResult<M>> {
    let folds = kfold(data.len(), k, cfg.seed)?;
    let mut fits = Vec::with_capacity(k);
    for f in 0..k {
        let (tr, va) = fold_split(data, &folds, f);
        fits.push(train_early_stopping(factory(cfg.seed)?, &tr, Some(&va), cfg)?);
    }
    let its: Vec<usize> = fits.iter().map(|r| r.best_iteration).collect();
    let vals: Vec<f64> = fits
        .iter()
        .map(|r| r.val_loss.get(r.best_iteration.wrapping_sub(1)).copied().unwrap_or(f64::NAN))
        .collect();
    let aggregated = strategy.aggregate(&its);
    let model = match aggregated {
        Some(n_iter) => {
            let retrain = TrainConfig {
                max_iterations: n_iter,
                patience: None,
                ..*cfg
            };
            train_early_stopping(factory(cfg.seed)?, data, None, &retrain)?.model
        }
        None => {
            let mut avg = vec![0.0; fits[0].model.num_params()];
            for r in &fits {
                for (a, p) in avg.iter_mut().zip(r.model.params()) {
                    *a += p / k as f64;
                }
            }
            let mut m = fits.swap_remove(0).model;
            m.set_params(&avg)?;
            m
        }
    };
    Ok(CvResult {
        model,
        strategy,
        fold_best_iterations: its,
        fold_val_loss: vals,
        aggregated_iteration: aggregated,
    })
}

/// Default logarithmic grid `{0, 1e−4, …, 1e1}` applied to both terms.
pub fn default_lambda_grid() -> Vec<Lambda> {
    let mut g = vec![Lambda::ZERO];
    g.extend((-4..=1).map(|e| Lambda::both(10f64.powi(e))));
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: Lambda,
    /// Mean validation loss per grid point, in grid order.
    pub scores: Vec<(Lambda, f64)>,
}

/// Chooses the λ with the smallest mean fold validation loss; ties go to the larger λ.
///
/// Each fold model trains for `cfg.max_iterations` without early stopping.
pub fn tune_lambda<M: Model>(
    factory: impl Fn(u64) -> Result<M>,
    data: &FuncDataset,
    grid: &[Lambda],
    k: usize,
    cfg: &TrainConfig,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty smoothing-parameter grid".into()));
    }
    for l in grid {
        l.validate()?;
    }
    let folds = kfold(data.len(), k, cfg.seed)?;
    let splits: Vec<_> = (0..k).map(|f| fold_split(data, &folds, f)).collect();
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let c = TrainConfig {
            lambda,
            patience: None,
            ..*cfg
        };
        let mut total = 0.0;
        for (tr, va) in &splits {
            let fit = train_early_stopping(factory(cfg.seed)?, tr, None, &c)?;
            total += evaluate_loss(&fit.model, va)?;
        }
        scores.push((lambda, total / k as f64));
    }
    let size = |l: &Lambda| l.b + l.w;
    let mut best = scores[0];
    for &(l, s) in &scores[1..] {
        let tie = (s - best.1).abs() <= 1e-12 * s.abs().max(best.1.abs());
        if (s < best.1 && !tie) || (tie && size(&l) > size(&best.0)) {
            best = (l, s);
        }
    }
    Ok(TuneResult { best: best.0, scores })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub worst_parameter: usize,
    pub num_params: usize,
}

/// Central-difference check of the penalized objective gradient.
pub fn grad_check<M: Model>(model: &M, x: &[f64], y: &[f64], n: usize, lambda: Lambda, eps: f64) -> Result<GradCheck> {
    grad_check_with(model, x, y, n, lambda, eps, |_| {})
}

/// As [`grad_check`], letting `tamper` modify the analytic gradient first.
pub fn grad_check_with<M: Model>(
    model: &M,
    x: &[f64],
    y: &[f64],
    n: usize,
    lambda: Lambda,
    eps: f64,
    tamper: impl FnOnce(&mut [f64]),
) -> Result<GradCheck> {
    let total = |m: &M| -> Result<f64> {
        let p = m.predict(x, n)?;
        Ok(quadratic_loss_flat(&p, y, &m.output_grid(), n)? + m.penalty(lambda)?.0)
    };
    let (_, mut analytic) = model.loss_gradient(x, y, n)?;
    let (_, pg) = model.penalty(lambda)?;
    for (a, p) in analytic.iter_mut().zip(&pg) {
        *a += p;
    }
    tamper(&mut analytic);
    let base = model.params();
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_relative_error: 0.0,
        worst_parameter: 0,
        num_params: base.len(),
    };
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + eps;
        probe.set_params(&p)?;
        let up = total(&probe)?;
        p[i] = base[i] - eps;
        probe.set_params(&p)?;
        let down = total(&probe)?;
        p[i] = base[i];
        let fd = (up - down) / (2.0 * eps);
        let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-8);
        if rel > out.max_relative_error {
            out.max_relative_error = rel;
            out.worst_parameter = i;
        }
    }
    Ok(out)
}
