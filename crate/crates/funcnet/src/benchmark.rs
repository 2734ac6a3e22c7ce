//! Replicated simulation benchmarks.

use std::path::Path;

use rayon::prelude::*;

use funcnet_core::datagen::{generate, split, Scenario};
use funcnet_core::fdnn::FdnnNetwork;
use funcnet_core::rng::child_seed;

use crate::error::{CliError, CliResult};
use crate::io::{write_table, AnyModel};
use crate::pipeline::{fit, Splits};
use crate::settings::{ModelName, ModelSettings, Settings};

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scenario: String,
    pub model: String,
    pub replicate: usize,
    /// Test RMSE, `None` when the replicate failed.
    pub rmse: Option<f64>,
    /// Fitted `Σ∫∫(Δw)²`, when the model has weight surfaces.
    pub roughness: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub model: String,
    pub replicates: usize,
    pub failed: usize,
    pub mean: f64,
    /// Standard error of the mean; NaN with fewer than two successful replicates.
    pub se: f64,
    pub mean_roughness: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub scenarios: Vec<(String, Scenario)>,
    pub models: Vec<ModelSettings>,
    pub replicates: usize,
    pub seed: u64,
    pub workers: usize,
}

impl BenchmarkPlan {
    /// Scenarios, models, replicate count and seed from the `scenario`, `model`,
    /// `replicates` and `seed` keys; lists are comma separated.
    pub fn from_settings(settings: &Settings, workers: usize) -> CliResult<Self> {
        let list = |key: &str, default: &str| {
            crate::settings::split_list(&settings.string_for(None, key).unwrap_or_else(|| default.into()))
                .into_iter()
                .map(str::to_string)
                .collect::<Vec<_>>()
        };
        let scenarios = list("scenario", "linear")
            .into_iter()
            .map(|name| Ok((name.clone(), settings.scenario_named(&name)?)))
            .collect::<CliResult<Vec<_>>>()?;
        let models = list("model", "fflm,fdnn,fbnn")
            .into_iter()
            .map(|m| settings.model(&m.parse::<ModelName>()?))
            .collect::<CliResult<Vec<_>>>()?;
        Ok(BenchmarkPlan {
            scenarios,
            models,
            replicates: settings.get("replicates", 10usize)?,
            seed: settings.get("seed", 0u64)?,
            workers: workers.max(1),
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub results: Vec<ResultRow>,
    /// Replicate-0 networks, for the parameter-function tables.
    pub examples: Vec<(String, String, AnyModel)>,
}

/// Seed of replicate `r` under master seed `seed`; the same for every scenario and model.
pub fn replicate_seed(seed: u64, r: usize) -> u64 {
    child_seed(seed, r as u64)
}

fn run_replicate(settings: &Settings, plan: &BenchmarkPlan, scenario: &(String, Scenario), r: usize) -> Vec<(ResultRow, Option<AnyModel>)> {
    let seed = replicate_seed(plan.seed, r);
    let row = |model: &str, outcome: Result<(f64, Option<f64>), String>| ResultRow {
        scenario: scenario.0.clone(),
        model: model.to_string(),
        replicate: r,
        rmse: outcome.as_ref().ok().map(|o| o.0),
        roughness: outcome.as_ref().ok().and_then(|o| o.1),
        error: outcome.err(),
    };
    let splits = (|| -> CliResult<Splits> {
        let spec = settings.generate_spec()?;
        let data = generate(&scenario.1, &spec, seed)?;
        let (train, val, test) = split(&data, &settings.split_spec(data.len(), seed)?)?;
        Ok(Splits { train, val, test })
    })();
    let splits = match splits {
        Ok(s) => s,
        Err(e) => return plan.models.iter().map(|m| (row(&m.name.label, Err(e.to_string())), None)).collect(),
    };
    plan.models
        .iter()
        .map(|m| {
            let mut ms = m.clone();
            ms.train.seed = seed;
            match fit(&ms, &splits) {
                Ok(f) => match f.metrics.test_rmse {
                    Some(rmse) => {
                        let rough = f.metrics.roughness.map(|r| r.weight);
                        (row(&m.name.label, Ok((rmse, rough))), (r == 0).then_some(f.model))
                    }
                    None => (row(&m.name.label, Err("empty test split".into())), None),
                },
                Err(e) => (row(&m.name.label, Err(e.to_string())), None),
            }
        })
        .collect()
}

/// Runs every scenario × replicate job on `plan.workers` threads. Rows come back sorted by
/// scenario order, model order and replicate, whatever the scheduling.
pub fn run(settings: &Settings, plan: &BenchmarkPlan) -> CliResult<BenchmarkReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    let jobs: Vec<(usize, usize)> = (0..plan.scenarios.len())
        .flat_map(|s| (0..plan.replicates).map(move |r| (s, r)))
        .collect();
    let mut out: Vec<(usize, usize, Vec<(ResultRow, Option<AnyModel>)>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| (s, r, run_replicate(settings, plan, &plan.scenarios[s], r)))
            .collect()
    });
    out.sort_by_key(|(s, r, _)| (*s, *r));
    let mut results = Vec::new();
    let mut examples = Vec::new();
    for (_, _, rows) in out {
        for (row, model) in rows {
            if let Some(m) = model {
                examples.push((row.scenario.clone(), row.model.clone(), m));
            }
            results.push(row);
        }
    }
    let model_rank = |label: &str| plan.models.iter().position(|m| m.name.label == label);
    let scen_rank = |name: &str| plan.scenarios.iter().position(|s| s.0 == name);
    results.sort_by_key(|r| (scen_rank(&r.scenario), model_rank(&r.model), r.replicate));
    Ok(BenchmarkReport { results, examples })
}

/// Mean and standard error per (scenario, model), in first-appearance order.
pub fn summarize(results: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in results {
        let k = (r.scenario.clone(), r.model.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, model)| {
            let rows: Vec<&ResultRow> = results.iter().filter(|r| r.scenario == scenario && r.model == model).collect();
            let ok: Vec<f64> = rows.iter().filter_map(|r| r.rmse).collect();
            let n = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / n;
            let se = if ok.len() > 1 {
                (ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
            } else {
                f64::NAN
            };
            let rough: Vec<f64> = rows.iter().filter_map(|r| r.roughness).collect();
            SummaryRow {
                scenario,
                model,
                replicates: rows.len(),
                failed: rows.len() - ok.len(),
                mean,
                se,
                mean_roughness: (!rough.is_empty()).then(|| rough.iter().sum::<f64>() / rough.len() as f64),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_results(path: &Path, results: &[ResultRow]) -> CliResult<()> {
    write_table(
        path,
        &["scenario", "model", "replicate", "rmse", "roughness", "error"],
        results.iter().map(|r| {
            vec![
                r.scenario.clone(),
                r.model.clone(),
                r.replicate.to_string(),
                opt(r.rmse),
                opt(r.roughness),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_summary(path: &Path, summary: &[SummaryRow]) -> CliResult<()> {
    write_table(
        path,
        &["scenario", "model", "replicates", "failed", "mean", "se", "mean_roughness"],
        summary.iter().map(|s| {
            vec![
                s.scenario.clone(),
                s.model.clone(),
                s.replicates.to_string(),
                s.failed.to_string(),
                s.mean.to_string(),
                s.se.to_string(),
                opt(s.mean_roughness),
            ]
        }),
    )
}

/// Writes the first neuron's intercept (`t,value`) and its first weight surface of the first
/// layer, long format with `s` on the neuron's grid and `t` on the input grid.
pub fn write_parameter_functions(dir: &Path, scenario: &str, model: &str, net: &FdnnNetwork) -> CliResult<()> {
    let layer = &net.layers[0];
    let b = layer.intercept(0);
    write_table(
        &dir.join(format!("intercept_{scenario}_{model}.csv")),
        &["t", "value"],
        b.values.iter().enumerate().map(|(i, v)| vec![b.grid.point(i).to_string(), v.to_string()]),
    )?;
    let w = layer.weight_surface(0, 0);
    let rows = (0..w.row_grid.len()).flat_map(|i| (0..w.col_grid.len()).map(move |j| (i, j)));
    write_table(
        &dir.join(format!("weight_{scenario}_{model}.csv")),
        &["s", "t", "value"],
        rows.map(|(i, j)| vec![w.row_grid.point(i).to_string(), w.col_grid.point(j).to_string(), w.get(i, j).to_string()]),
    )
}

/// Writes results, summary and parameter-function tables under `dir`.
pub fn write_report(dir: &Path, report: &BenchmarkReport) -> CliResult<()> {
    write_results(&dir.join("results.csv"), &report.results)?;
    write_summary(&dir.join("summary.csv"), &summarize(&report.results))?;
    for (scenario, model, m) in &report.examples {
        if let Some(net) = m.to_fdnn() {
            write_parameter_functions(dir, scenario, model, &net)?;
        }
    }
    Ok(())
}
