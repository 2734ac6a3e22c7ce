//! File formats: dataset CSVs, JSON documents and result tables.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use funcnet_core::baselines::{FflmModel, VectorNN};
use funcnet_core::datagen::{from_table_rows, FuncDataset, GenerateSpec, Scenario, TableLayout};
use funcnet_core::fbnn::FbnnNetwork;
use funcnet_core::fdnn::FdnnNetwork;
use funcnet_core::{Grid, Predictor};

use crate::error::{CliError, CliResult};

/// Version stamped into every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

/// Writes rows of already formatted cells under `header`.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Column names of the dataset layout: `id`, `x_0..x_{m-1}`, `y_0..y_{m_y-1}`.
pub fn dataset_header(m: usize, m_y: usize) -> Vec<String> {
    std::iter::once("id".to_string())
        .chain((0..m).map(|i| format!("x_{i}")))
        .chain((0..m_y).map(|i| format!("y_{i}")))
        .collect()
}

/// Writes a single-predictor dataset. Values use the shortest round-trip float format.
pub fn write_dataset(path: &Path, data: &FuncDataset) -> CliResult<()> {
    if data.predictors != 1 {
        return Err(CliError::Usage(format!(
            "the CSV layout holds one predictor curve per row, dataset has {}",
            data.predictors
        )));
    }
    let (m, m_y) = (data.x_grid.len(), data.y_grid.len());
    let mut w = csv_writer(path)?;
    w.write_record(dataset_header(m, m_y)).map_err(csv_err(path))?;
    for i in 0..data.len() {
        let row = std::iter::once(data.ids[i].clone())
            .chain(data.x[i * m..(i + 1) * m].iter().map(f64::to_string))
            .chain(data.y[i * m_y..(i + 1) * m_y].iter().map(f64::to_string));
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn parse_cell(cell: &str, path: &Path, line: usize) -> CliResult<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| CliError::Usage(format!("{}: line {line}: '{cell}' is not a number", path.display())))
}

/// Reads a table of `id, m predictor values, m_y response values` rows. A header row is
/// detected and skipped; empty or `NA` cells are missing values.
///
/// Returns the dataset and the ids of rows rejected for too many missing values.
pub fn load_table(path: &Path, layout: TableLayout) -> CliResult<(FuncDataset, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err(path))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let mut cells = record.iter();
        let id = cells.next().unwrap_or("").to_string();
        let rest: Vec<&str> = cells.collect();
        if i == 0 && rest.iter().any(|c| !c.is_empty() && parse_cell(c, path, 1).is_err()) {
            continue;
        }
        let values = rest.iter().map(|c| parse_cell(c, path, i + 1)).collect::<CliResult<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok(from_table_rows(rows, layout)?)
}

/// Reads a dataset written by [`write_dataset`], taking `m` and `m_y` from its header.
pub fn read_dataset(path: &Path) -> CliResult<FuncDataset> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let m = header.iter().filter(|h| h.starts_with("x_")).count();
    let m_y = header.iter().filter(|h| h.starts_with("y_")).count();
    if m == 0 || m_y == 0 || header.len() != 1 + m + m_y {
        return Err(CliError::Usage(format!(
            "{}: expected a header 'id,x_0..,y_0..'; use a layout (m, m_y) for headerless tables",
            path.display()
        )));
    }
    drop(reader);
    let (data, rejected) = load_table(path, TableLayout { m, m_y })?;
    if !rejected.is_empty() {
        eprintln!("{}: rejected {} rows with too many missing values", path.display(), rejected.len());
    }
    Ok(data)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

fn check_version(found: u32, path: &Path) -> CliResult<()> {
    if found != SCHEMA_VERSION {
        return Err(CliError::io(path, format!("schema_version {found}, expected {SCHEMA_VERSION}")));
    }
    Ok(())
}

/// Generation parameters written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub spec: GenerateSpec,
    pub seed: u64,
    pub data_file: String,
}

impl SimulationSidecar {
    pub fn read(path: &Path) -> CliResult<Self> {
        let s: Self = read_json(path)?;
        check_version(s.schema_version, path)?;
        Ok(s)
    }
}

/// Any fitted model, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "network", rename_all = "snake_case")]
pub enum AnyModel {
    Fdnn(FdnnNetwork),
    Fbnn(FbnnNetwork),
    Fflm(FflmModel),
    Vnn(VectorNN),
}

impl AnyModel {
    pub fn as_predictor(&self) -> &dyn DynPredictor {
        match self {
            AnyModel::Fdnn(m) => m,
            AnyModel::Fbnn(m) => m,
            AnyModel::Fflm(m) => m,
            AnyModel::Vnn(m) => m,
        }
    }

    pub fn predict(&self, x: &[f64], n: usize) -> CliResult<Vec<f64>> {
        Ok(self.as_predictor().predict_dyn(x, n)?)
    }

    pub fn output_grid(&self) -> Grid {
        self.as_predictor().output_grid_dyn()
    }

    /// The model as a functional network, when it has one.
    pub fn to_fdnn(&self) -> Option<FdnnNetwork> {
        match self {
            AnyModel::Fdnn(m) => Some(m.clone()),
            AnyModel::Fbnn(m) => Some(m.to_fdnn()),
            AnyModel::Fflm(m) => Some(m.to_fdnn()),
            AnyModel::Vnn(_) => None,
        }
    }
}

/// Object-safe view of [`Predictor`].
pub trait DynPredictor {
    fn predict_dyn(&self, x: &[f64], n: usize) -> funcnet_core::Result<Vec<f64>>;
    fn output_grid_dyn(&self) -> Grid;
}

impl<P: Predictor> DynPredictor for P {
    fn predict_dyn(&self, x: &[f64], n: usize) -> funcnet_core::Result<Vec<f64>> {
        self.predict(x, n)
    }

    fn output_grid_dyn(&self) -> Grid {
        self.output_grid()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub model: AnyModel,
}

impl ModelDocument {
    pub fn new(model: AnyModel) -> Self {
        ModelDocument {
            schema_version: SCHEMA_VERSION,
            model,
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let d: Self = read_json(path)?;
        check_version(d.schema_version, path)?;
        let valid = match &d.model {
            AnyModel::Fdnn(m) => m.validate(),
            AnyModel::Fbnn(m) => m.validate(),
            AnyModel::Fflm(m) => m.net.validate(),
            AnyModel::Vnn(_) => Ok(()),
        };
        valid.map_err(|e| CliError::io(path, e))?;
        Ok(d)
    }
}

/// Per-epoch losses as `iteration,train_loss,val_loss`; missing validation losses are empty.
pub fn write_history(path: &Path, train: &[f64], val: &[f64]) -> CliResult<()> {
    let rows = (0..train.len().max(val.len())).map(|i| {
        let cell = |v: &[f64]| v.get(i).map(f64::to_string).unwrap_or_default();
        vec![(i + 1).to_string(), cell(train), cell(val)]
    });
    write_table(path, &["iteration", "train_loss", "val_loss"], rows)
}
