//! Fitting one model variant on a train/validation/test split.

use serde::{Deserialize, Serialize};

use funcnet_core::baselines::{fflm_fit, fflm_tune, VectorNN, VnnConfig};
use funcnet_core::datagen::FuncDataset;
use funcnet_core::fbnn::{FbnnConfig, FbnnNetwork};
use funcnet_core::fdnn::{FdnnConfig, FdnnNetwork};
use funcnet_core::model::{Lambda, Roughness};
use funcnet_core::training::{cv_early_stopping, evaluate_rmse, train_early_stopping, tune_lambda, TrainConfig};
use funcnet_core::{Error, Model};

use crate::error::{CliError, CliResult};
use crate::io::{AnyModel, SCHEMA_VERSION};
use crate::settings::{ModelKind, ModelSettings, Strategy};

/// Train, validation and test parts of one dataset.
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: FuncDataset,
    pub val: FuncDataset,
    pub test: FuncDataset,
}

impl Splits {
    /// Train and validation together, used by the strategies that do their own folding.
    pub fn pooled(&self) -> CliResult<FuncDataset> {
        if self.val.is_empty() {
            return Ok(self.train.clone());
        }
        Ok(self.train.concat(&self.val)?)
    }
}

/// Summary of one fit, written as the metrics document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_version: u32,
    pub model: String,
    pub strategy: String,
    pub train_rmse: f64,
    pub val_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub lambda: Lambda,
    pub stopping_iteration: Option<usize>,
    pub best_iteration: Option<usize>,
    pub fold_best_iterations: Vec<usize>,
    pub lambda_scores: Vec<(Lambda, f64)>,
    pub roughness: Option<Roughness>,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: AnyModel,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub metrics: Metrics,
}

/// Outcome of training a network, independent of its type.
struct Trained<M> {
    model: M,
    train_loss: Vec<f64>,
    val_loss: Vec<f64>,
    stopping: Option<usize>,
    best: Option<usize>,
    folds: Vec<usize>,
    lambda: Lambda,
    scores: Vec<(Lambda, f64)>,
}

fn folds_for(requested: usize, n: usize) -> CliResult<usize> {
    let k = requested.min(n);
    if k < 2 {
        return Err(CliError::Usage(format!("cross-validation needs at least 2 samples, have {n}")));
    }
    Ok(k)
}

fn train_network<M: Model>(
    factory: impl Fn(u64) -> funcnet_core::Result<M>,
    s: &ModelSettings,
    splits: &Splits,
) -> CliResult<Trained<M>> {
    let cfg = &s.train;
    match s.strategy {
        Strategy::Early => {
            let val = (!splits.val.is_empty()).then_some(&splits.val);
            let r = train_early_stopping(factory(cfg.seed)?, &splits.train, val, cfg)?;
            Ok(Trained {
                model: r.model,
                train_loss: r.train_loss,
                val_loss: r.val_loss,
                stopping: Some(r.stopping_iteration),
                best: Some(r.best_iteration),
                folds: Vec::new(),
                lambda: cfg.lambda,
                scores: Vec::new(),
            })
        }
        Strategy::Cv(strategy) => {
            let pool = splits.pooled()?;
            let k = folds_for(s.folds, pool.len())?;
            let r = cv_early_stopping(&factory, &pool, k, strategy, cfg)?;
            Ok(Trained {
                model: r.model,
                train_loss: Vec::new(),
                val_loss: Vec::new(),
                stopping: r.aggregated_iteration,
                best: r.aggregated_iteration,
                folds: r.fold_best_iterations,
                lambda: cfg.lambda,
                scores: Vec::new(),
            })
        }
        Strategy::Penalty => {
            let pool = splits.pooled()?;
            let (best, scores) = match s.lambda_grid.as_slice() {
                [only] => (*only, Vec::new()),
                grid => {
                    let k = folds_for(s.folds, pool.len())?;
                    let tuned = tune_lambda(&factory, &pool, grid, k, cfg)?;
                    (tuned.best, tuned.scores)
                }
            };
            let final_cfg = TrainConfig {
                lambda: best,
                patience: None,
                ..*cfg
            };
            let r = train_early_stopping(factory(cfg.seed)?, &pool, None, &final_cfg)?;
            Ok(Trained {
                model: r.model,
                train_loss: r.train_loss,
                val_loss: Vec::new(),
                stopping: Some(r.stopping_iteration),
                best: Some(r.best_iteration),
                folds: Vec::new(),
                lambda: best,
                scores,
            })
        }
    }
}

fn fdnn_config(s: &ModelSettings, data: &FuncDataset) -> FdnnConfig {
    FdnnConfig {
        input_grid: data.x_grid,
        input_count: data.predictors,
        hidden: s.hidden.clone(),
        output_grid: data.y_grid,
    }
}

fn fit_fflm(s: &ModelSettings, splits: &Splits) -> CliResult<Trained<funcnet_core::baselines::FflmModel>> {
    let pool = splits.pooled()?;
    let (lambda, scores) = if s.lambda_grid.len() == 1 {
        (s.lambda_grid[0], Vec::new())
    } else {
        let k = folds_for(s.folds, pool.len())?;
        match fflm_tune(&pool, s.basis, &s.lambda_grid, k, s.train.seed) {
            Ok(t) => t,
            // Folds too small to fit at any λ: fall back to the heaviest penalty on all data.
            Err(Error::Singular) => {
                let heaviest = s
                    .lambda_grid
                    .iter()
                    .copied()
                    .fold(Lambda::ZERO, |a, l| if l.b + l.w > a.b + a.w { l } else { a });
                (heaviest, Vec::new())
            }
            Err(e) => return Err(e.into()),
        }
    };
    Ok(Trained {
        model: fflm_fit(&pool, s.basis, lambda)?,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stopping: None,
        best: None,
        folds: Vec::new(),
        lambda,
        scores,
    })
}

fn finish<M>(s: &ModelSettings, splits: &Splits, t: Trained<M>, wrap: impl FnOnce(M) -> AnyModel) -> CliResult<Fitted>
where
    M: funcnet_core::Predictor,
{
    let rmse = |d: &FuncDataset| -> CliResult<Option<f64>> {
        if d.is_empty() {
            Ok(None)
        } else {
            Ok(Some(evaluate_rmse(&t.model, d)?))
        }
    };
    let train_rmse = evaluate_rmse(&t.model, &splits.train)?;
    let val_rmse = rmse(&splits.val)?;
    let test_rmse = rmse(&splits.test)?;
    let model = wrap(t.model);
    let roughness = match &model {
        AnyModel::Fdnn(m) => Some(m.roughness()?),
        AnyModel::Fbnn(m) => Some(m.roughness()?),
        AnyModel::Fflm(m) => Some(m.roughness()?),
        AnyModel::Vnn(_) => None,
    };
    Ok(Fitted {
        model,
        train_loss: t.train_loss,
        val_loss: t.val_loss,
        metrics: Metrics {
            schema_version: SCHEMA_VERSION,
            model: s.name.label.clone(),
            strategy: if s.name.kind == ModelKind::Fflm {
                "closed_form".into()
            } else {
                s.strategy.name()
            },
            train_rmse,
            val_rmse,
            test_rmse,
            lambda: t.lambda,
            stopping_iteration: t.stopping,
            best_iteration: t.best,
            fold_best_iterations: t.folds,
            lambda_scores: t.scores,
            roughness,
        },
    })
}

/// Fits the model described by `s` and scores it on every non-empty split.
pub fn fit(s: &ModelSettings, splits: &Splits) -> CliResult<Fitted> {
    let data = &splits.train;
    match s.name.kind {
        ModelKind::Fflm => {
            let t = fit_fflm(s, splits)?;
            finish(s, splits, t, AnyModel::Fflm)
        }
        ModelKind::Fdnn => {
            let cfg = fdnn_config(s, data);
            cfg.validate()?;
            let t = train_network(|seed| FdnnNetwork::init(&cfg, seed), s, splits)?;
            finish(s, splits, t, AnyModel::Fdnn)
        }
        ModelKind::Fbnn => {
            let cfg = FbnnConfig {
                architecture: fdnn_config(s, data),
                basis: s.basis,
            };
            cfg.validate()?;
            let t = train_network(|seed| FbnnNetwork::init(&cfg, seed), s, splits)?;
            finish(s, splits, t, AnyModel::Fbnn)
        }
        ModelKind::Vnn => {
            if s.strategy == Strategy::Penalty {
                return Err(CliError::Usage("the vector network has no roughness penalty; use an early-stopping strategy".into()));
            }
            let cfg = VnnConfig {
                input_grid: data.x_grid,
                input_count: data.predictors,
                hidden: s.vnn_hidden.clone(),
                activation: s.vnn_activation,
                output_grid: data.y_grid,
            };
            let t = train_network(|seed| VectorNN::init(&cfg, seed), s, splits)?;
            finish(s, splits, t, AnyModel::Vnn)
        }
    }
}
