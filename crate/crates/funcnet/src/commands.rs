//! The four subcommands, callable without a process boundary.

use std::path::{Path, PathBuf};

use funcnet_core::baselines::{VectorNN, VnnConfig};
use funcnet_core::datagen::{generate, split, FuncDataset, GenerateSpec, ScenarioKind, TableLayout};
use funcnet_core::fbnn::{BasisSpec, FbnnConfig, FbnnNetwork};
use funcnet_core::fdnn::{FdnnConfig, FdnnNetwork, HiddenSpec};
use funcnet_core::model::Lambda;
use funcnet_core::training::grad_check_with;
use funcnet_core::{Activation, Grid, Model};

use crate::benchmark::{self, BenchmarkPlan, BenchmarkReport};
use crate::error::{CliError, CliResult};
use crate::io::{self, write_history, write_json, ModelDocument, SimulationSidecar, SCHEMA_VERSION};
use crate::pipeline::{self, Fitted, Splits};
use crate::settings::Settings;

fn out_dir(settings: &Settings) -> PathBuf {
    PathBuf::from(settings.string_for(None, "out").unwrap_or_else(|| ".".into()))
}

/// Generates one dataset and writes `data.csv` plus its `data.json` sidecar.
pub fn simulate(settings: &Settings) -> CliResult<PathBuf> {
    let scenario = settings.scenario()?;
    let spec = settings.generate_spec()?;
    let seed = settings.get("seed", 0u64)?;
    let data = generate(&scenario, &spec, seed)?;
    let dir = out_dir(settings);
    let path = dir.join("data.csv");
    io::write_dataset(&path, &data)?;
    write_json(
        &dir.join("data.json"),
        &SimulationSidecar {
            schema_version: SCHEMA_VERSION,
            scenario,
            spec,
            seed,
            data_file: "data.csv".into(),
        },
    )?;
    Ok(path)
}

/// Regenerates the dataset a sidecar describes.
pub fn regenerate(sidecar: &Path) -> CliResult<FuncDataset> {
    let s = SimulationSidecar::read(sidecar)?;
    Ok(generate(&s.scenario, &s.spec, s.seed)?)
}

/// Reads the `data` file: the dataset layout when it has one, otherwise a table whose
/// `m` and `m_y` come from the settings.
pub fn load_data(settings: &Settings) -> CliResult<FuncDataset> {
    let path = PathBuf::from(
        settings
            .string_for(None, "data")
            .ok_or_else(|| CliError::Usage("no dataset given (--data PATH or data = PATH)".into()))?,
    );
    if !path.exists() {
        return Err(CliError::io(&path, "file not found"));
    }
    match (settings.raw("m"), settings.raw("m_y")) {
        (Some(_), Some(_)) => {
            let layout = TableLayout {
                m: settings.get("m", 0usize)?,
                m_y: settings.get("m_y", 0usize)?,
            };
            let (data, rejected) = io::load_table(&path, layout)?;
            if !rejected.is_empty() {
                eprintln!("rejected {} rows with too many missing values: {}", rejected.len(), rejected.join(", "));
            }
            Ok(data)
        }
        _ => io::read_dataset(&path),
    }
}

/// Splits `data` per the settings, fits the configured model and writes `model.json`,
/// `history.csv` and `metrics.json`.
pub fn fit_data(settings: &Settings, data: &FuncDataset) -> CliResult<Fitted> {
    let seed = settings.get("seed", 0u64)?;
    let (train, val, test) = split(data, &settings.split_spec(data.len(), seed)?)?;
    let name = settings
        .string_for(None, "model")
        .unwrap_or_else(|| "fdnn".into())
        .parse()?;
    let mut ms = settings.model(&name)?;
    if settings.string_for(Some(&name.label), "seed").is_none() {
        ms.train.seed = seed;
    }
    let fitted = pipeline::fit(&ms, &Splits { train, val, test })?;
    let dir = out_dir(settings);
    write_json(&dir.join("model.json"), &ModelDocument::new(fitted.model.clone()))?;
    write_history(&dir.join("history.csv"), &fitted.train_loss, &fitted.val_loss)?;
    write_json(&dir.join("metrics.json"), &fitted.metrics)?;
    Ok(fitted)
}

pub fn fit(settings: &Settings) -> CliResult<Fitted> {
    let data = load_data(settings)?;
    fit_data(settings, &data)
}

/// Runs the replicated benchmark and writes its tables under the output directory.
pub fn benchmark(settings: &Settings, workers: usize) -> CliResult<BenchmarkReport> {
    let plan = BenchmarkPlan::from_settings(settings, workers)?;
    let report = benchmark::run(settings, &plan)?;
    benchmark::write_report(&out_dir(settings), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckCase {
    pub name: String,
    pub max_relative_error: f64,
    pub num_params: usize,
}

/// Relative error above which the suite fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const GRADCHECK_EPS: f64 = 1e-4;
/// Pre-activations closer to zero than this put a relu kink inside the difference stencil.
const KINK_MARGIN: f64 = 1e-3;

fn check<M: Model>(name: &str, model: &M, data: &FuncDataset, lambda: Lambda, corrupt: bool) -> CliResult<GradCheckCase> {
    let r = grad_check_with(model, &data.x, &data.y, data.len(), lambda, GRADCHECK_EPS, |g| {
        if corrupt {
            g[0] += 0.1 * g[0].abs().max(1.0);
        }
    })?;
    Ok(GradCheckCase {
        name: name.into(),
        max_relative_error: r.max_relative_error,
        num_params: r.num_params,
    })
}

fn small_architecture(data: &FuncDataset, activation: Activation) -> CliResult<FdnnConfig> {
    Ok(FdnnConfig {
        input_grid: data.x_grid,
        input_count: 1,
        hidden: vec![HiddenSpec {
            neurons: 2,
            grid: Grid::new(8)?,
            activation,
        }],
        output_grid: data.y_grid,
    })
}

/// A relu network whose hidden pre-activations on `data` all clear the kink margin.
fn kink_free_relu(data: &FuncDataset, seed: u64) -> CliResult<FdnnNetwork> {
    let cfg = small_architecture(data, Activation::Relu)?;
    for s in seed..seed + 1000 {
        let net = FdnnNetwork::init(&cfg, s)?;
        let (_, cache) = net.forward(&data.x, data.len())?;
        if cache.pre[..cache.pre.len() - 1].iter().flatten().all(|p| p.abs() > KINK_MARGIN) {
            return Ok(net);
        }
    }
    Err(CliError::Usage("no kink-free relu network found".into()))
}

/// Finite-difference checks of FDNN, FBNN and the vector network on small problems
/// (one hidden layer of two neurons, grids 10/8, five basis functions per axis).
pub fn gradcheck(settings: &Settings, corrupt: bool) -> CliResult<Vec<GradCheckCase>> {
    let seed = settings.get("seed", 0u64)?;
    let spec = GenerateSpec {
        n: settings.get("n", 3usize)?,
        m: 10,
        m_y: 8,
        ..GenerateSpec::default()
    };
    let data = generate(&ScenarioKind::Cam.into(), &spec, seed)?;
    let lambda = Lambda::new(0.01, 0.001)?;
    let tanh = small_architecture(&data, Activation::Tanh)?;
    let fdnn = FdnnNetwork::init(&tanh, seed)?;
    let fbnn_cfg = FbnnConfig {
        architecture: tanh.clone(),
        basis: BasisSpec::uniform(5),
    };
    let fbnn = FbnnNetwork::init(&fbnn_cfg, seed)?;
    let sigmoid = FdnnNetwork::init(&small_architecture(&data, Activation::Sigmoid)?, seed)?;
    let relu = kink_free_relu(&data, seed)?;
    let vnn = VectorNN::init(
        &VnnConfig {
            input_grid: data.x_grid,
            input_count: 1,
            hidden: vec![6],
            activation: Activation::Tanh,
            output_grid: data.y_grid,
        },
        seed,
    )?;
    Ok(vec![
        check("fdnn_tanh", &fdnn, &data, Lambda::ZERO, corrupt)?,
        check("fdnn_tanh_penalized", &fdnn, &data, lambda, corrupt)?,
        check("fdnn_sigmoid", &sigmoid, &data, Lambda::ZERO, corrupt)?,
        check("fdnn_relu_kink_free", &relu, &data, Lambda::ZERO, corrupt)?,
        check("fbnn_tanh", &fbnn, &data, Lambda::ZERO, corrupt)?,
        check("fbnn_tanh_penalized", &fbnn, &data, lambda, corrupt)?,
        check("vnn_tanh", &vnn, &data, Lambda::ZERO, corrupt)?,
    ])
}
