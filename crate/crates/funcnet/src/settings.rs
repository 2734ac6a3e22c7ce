//! Flat `key = value` configuration.
//!
//! Keys may carry a model prefix (`fdnn.step_size = 0.02`); a prefixed key wins over the
//! bare key when settings for that model are resolved.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use funcnet_core::bspline::DEFAULT_ORDER;
use funcnet_core::datagen::{CqFirstTerm, CqSecondTerm, GenerateSpec, Scenario, ScenarioKind, SplitSpec};
use funcnet_core::fbnn::BasisSpec;
use funcnet_core::fdnn::HiddenSpec;
use funcnet_core::gp::MaternParams;
use funcnet_core::model::Lambda;
use funcnet_core::training::{default_lambda_grid, BatchMode, EsStrategy, Optimizer, TrainConfig};
use funcnet_core::{Activation, Grid};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut s = Settings::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
            s.set(k.trim(), v.trim());
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_ascii_lowercase(), value.to_string());
    }

    /// Applies `KEY=VALUE` assignments on top of the current values.
    pub fn apply_assignments<'a>(&mut self, items: impl IntoIterator<Item = &'a str>) -> CliResult<()> {
        for item in items {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got '{item}'")))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    fn lookup(&self, model: Option<&str>, key: &str) -> Option<&str> {
        model
            .and_then(|m| self.raw(&format!("{m}.{key}")))
            .or_else(|| self.raw(key))
    }

    fn typed<T: FromStr>(&self, model: Option<&str>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        match self.lookup(model, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| CliError::Usage(format!("config key '{key}': cannot parse '{v}': {e}"))),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        self.typed(None, key, default)
    }

    pub fn get_for<T: FromStr>(&self, model: &str, key: &str, default: T) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        self.typed(Some(model), key, default)
    }

    pub fn string_for(&self, model: Option<&str>, key: &str) -> Option<String> {
        self.lookup(model, key).map(str::to_string)
    }
}

/// Comma-separated list, whitespace tolerant.
pub fn split_list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|v| !v.is_empty()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Fflm,
    Fdnn,
    Fbnn,
    Vnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Fflm, ModelKind::Fdnn, ModelKind::Fbnn, ModelKind::Vnn];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Fflm => "fflm",
            ModelKind::Fdnn => "fdnn",
            ModelKind::Fbnn => "fbnn",
            ModelKind::Vnn => "vnn",
        }
    }
}

impl FromStr for ModelKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "nn" | "vector_nn" => Ok(ModelKind::Vnn),
            _ => ModelKind::ALL
                .into_iter()
                .find(|k| k.name() == key)
                .ok_or_else(|| CliError::Usage(format!("unknown model '{s}' (fflm, fdnn, fbnn, vnn)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Early stopping on the validation split.
    Early,
    /// k-fold early stopping on train and validation together.
    Cv(EsStrategy),
    /// Tuned roughness penalty, no early stopping.
    Penalty,
}

impl FromStr for Strategy {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "early" | "validation" => Ok(Strategy::Early),
            "penalty" | "roughness" => Ok(Strategy::Penalty),
            other => EsStrategy::parse(other)
                .map(Strategy::Cv)
                .map_err(|_| CliError::Usage(format!("unknown strategy '{s}' (early, penalty, mean, median, max, min, wavg)"))),
        }
    }
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Early => "early".into(),
            Strategy::Penalty => "penalty".into(),
            Strategy::Cv(s) => format!("cv_{}", s.name()),
        }
    }
}

/// A named model variant: kind plus the settings prefix it reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelName {
    pub label: String,
    pub kind: ModelKind,
}

impl FromStr for ModelName {
    type Err = CliError;

    /// `fdnn`, or a labelled variant `fdnn_r` whose kind is the part before `_`.
    fn from_str(s: &str) -> CliResult<Self> {
        let label = s.trim().to_ascii_lowercase();
        let kind = label.split('_').next().unwrap_or("").parse()?;
        Ok(ModelName { label, kind })
    }
}

/// Everything needed to fit one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub name: ModelName,
    pub hidden: Vec<HiddenSpec>,
    pub basis: BasisSpec,
    pub vnn_hidden: Vec<usize>,
    pub vnn_activation: Activation,
    pub train: TrainConfig,
    pub strategy: Strategy,
    pub folds: usize,
    pub lambda_grid: Vec<Lambda>,
}

fn parse_activation(s: &str) -> CliResult<Activation> {
    Activation::parse(s).ok_or_else(|| CliError::Usage(format!("unknown activation '{s}' (relu, tanh, sigmoid, identity)")))
}

fn parse_hidden(s: &str) -> CliResult<Vec<HiddenSpec>> {
    // `2x30:tanh,4x50:relu`: neurons x grid points : activation
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    split_list(s)
        .into_iter()
        .map(|item| {
            let bad = || CliError::Usage(format!("hidden layer '{item}': expected NEURONSxGRID[:ACTIVATION]"));
            let (shape, act) = item.split_once(':').unwrap_or((item, "tanh"));
            let (k, m) = shape.split_once('x').ok_or_else(bad)?;
            Ok(HiddenSpec {
                neurons: k.trim().parse().map_err(|_| bad())?,
                grid: Grid::new(m.trim().parse().map_err(|_| bad())?)?,
                activation: parse_activation(act)?,
            })
        })
        .collect()
}

pub fn parse_lambda_grid(s: &str) -> CliResult<Vec<Lambda>> {
    split_list(s)
        .into_iter()
        .map(|v| {
            let x: f64 = v.parse().map_err(|_| CliError::Usage(format!("lambda grid value '{v}'")))?;
            Ok(Lambda::new(x, x)?)
        })
        .collect()
}

fn parse_patience(s: &str) -> CliResult<Option<usize>> {
    match s.trim().to_ascii_lowercase().as_str() {
        "none" | "inf" | "infinite" => Ok(None),
        v => v
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("patience '{s}': expected an integer or 'none'"))),
    }
}

fn parse_batch(s: &str) -> CliResult<BatchMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "full" => Ok(BatchMode::Full),
        v => v
            .parse()
            .map(BatchMode::Mini)
            .map_err(|_| CliError::Usage(format!("batch '{s}': expected 'full' or a size"))),
    }
}

fn parse_optimizer(s: &str) -> CliResult<Optimizer> {
    match s.trim().to_ascii_lowercase().as_str() {
        "adam" | "adaptive" => Ok(Optimizer::ADAM),
        "gd" | "gradient" | "sgd" => Ok(Optimizer::Gradient),
        _ => Err(CliError::Usage(format!("optimizer '{s}': expected adam or gd"))),
    }
}

/// Built-in defaults per model, overridable from the config.
struct Defaults {
    hidden: &'static str,
    step: f64,
    iterations: usize,
    patience: &'static str,
    strategy: &'static str,
    batch: &'static str,
}

fn defaults(kind: ModelKind) -> Defaults {
    match kind {
        ModelKind::Fflm => Defaults {
            hidden: "none",
            step: 1e-3,
            iterations: 0,
            patience: "none",
            strategy: "penalty",
            batch: "full",
        },
        ModelKind::Fdnn | ModelKind::Fbnn => Defaults {
            hidden: "4x30:relu,4x30:relu",
            step: 0.1,
            iterations: 8000,
            patience: "300",
            strategy: "early",
            batch: "full",
        },
        ModelKind::Vnn => Defaults {
            hidden: "none",
            step: 0.01,
            iterations: 8000,
            patience: "300",
            strategy: "early",
            batch: "full",
        },
    }
}

impl Settings {
    pub fn model(&self, name: &ModelName) -> CliResult<ModelSettings> {
        let m = Some(name.label.as_str());
        let d = defaults(name.kind);
        let text = |key: &str, default: &str| self.string_for(m, key).unwrap_or_else(|| default.to_string());
        let count = self.typed(m, "basis", 15usize)?;
        let basis = BasisSpec {
            intercept: self.typed(m, "basis_intercept", count)?,
            s: self.typed(m, "basis_s", count)?,
            t: self.typed(m, "basis_t", count)?,
            order: self.typed(m, "basis_order", DEFAULT_ORDER)?,
        };
        let vnn_hidden = split_list(&text("vnn_hidden", "128,128"))
            .into_iter()
            .map(|v| v.parse().map_err(|_| CliError::Usage(format!("vnn_hidden entry '{v}'"))))
            .collect::<CliResult<Vec<usize>>>()?;
        let train = TrainConfig {
            step_size: self.typed(m, "step_size", d.step)?,
            max_iterations: self.typed(m, "max_iterations", d.iterations)?,
            patience: parse_patience(&text("patience", d.patience))?,
            optimizer: parse_optimizer(&text("optimizer", "adam"))?,
            batch: parse_batch(&text("batch", d.batch))?,
            lambda: Lambda::new(self.typed(m, "lambda_b", 0.0)?, self.typed(m, "lambda_w", 0.0)?)?,
            seed: self.typed(m, "seed", 0u64)?,
        };
        train.validate()?;
        let lambda_grid = match self.string_for(m, "lambda_grid") {
            Some(g) => parse_lambda_grid(&g)?,
            None => default_lambda_grid(),
        };
        Ok(ModelSettings {
            name: name.clone(),
            hidden: parse_hidden(&text("hidden", d.hidden))?,
            basis,
            vnn_hidden,
            vnn_activation: parse_activation(&text("vnn_activation", "tanh"))?,
            train,
            strategy: text("strategy", d.strategy).parse()?,
            folds: self.typed(m, "folds", 5usize)?,
            lambda_grid,
        })
    }

    pub fn scenario(&self) -> CliResult<Scenario> {
        self.scenario_named(&self.string_for(None, "scenario").unwrap_or_else(|| "linear".into()))
    }

    pub fn scenario_named(&self, name: &str) -> CliResult<Scenario> {
        let cq_first = match self.string_for(None, "cq_first").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("t") | Some("predictor_at_t") => CqFirstTerm::PredictorAtT,
            Some("s") | Some("predictor_at_s") => CqFirstTerm::PredictorAtS,
            Some(o) => return Err(CliError::Usage(format!("cq_first '{o}': expected t or s"))),
        };
        let cq_second = match self.string_for(None, "cq_second").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None | Some("product") => CqSecondTerm::Product,
            Some("weighted") | Some("polynomial_weighted") => CqSecondTerm::PolynomialWeighted,
            Some(o) => return Err(CliError::Usage(format!("cq_second '{o}': expected product or weighted"))),
        };
        Ok(Scenario {
            kind: ScenarioKind::parse(name)?,
            cq_first,
            cq_second,
        })
    }

    pub fn generate_spec(&self) -> CliResult<GenerateSpec> {
        let d = GenerateSpec::default();
        let matern = MaternParams::new(self.get("matern_sigma2", d.matern.sigma2)?, self.get("matern_rho", d.matern.rho)?)?;
        Ok(GenerateSpec {
            n: self.get("n", d.n)?,
            m: self.get("m", d.m)?,
            m_y: self.get("m_y", d.m_y)?,
            matern,
            noise_sd: self.get("noise_sd", d.noise_sd)?,
        })
    }

    /// Split sizes for `n` samples: configured, else the 500/100/500 proportions with at least
    /// one test sample.
    pub fn split_spec(&self, n: usize, seed: u64) -> CliResult<SplitSpec> {
        let test = (n * 5 / 11).max(1).min(n.saturating_sub(1));
        let val = n / 11;
        let n_test = self.get("n_test", test)?;
        let n_val = self.get("n_val", val)?;
        let n_train = self.get("n_train", n.saturating_sub(n_test + n_val))?;
        if n_train == 0 || n_train + n_val + n_test != n {
            return Err(CliError::Usage(format!(
                "split {n_train}+{n_val}+{n_test} does not partition {n} samples with a training set"
            )));
        }
        Ok(SplitSpec {
            n_train,
            n_val,
            n_test,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments_and_prefixes() {
        let s = Settings::parse("# run\nstep_size = 0.5\nfdnn.step_size= 0.1 # faster\n\nhidden = 2x10:relu, 3x8\n").unwrap();
        let fdnn = s.model(&"fdnn".parse().unwrap()).unwrap();
        let fbnn = s.model(&"fbnn".parse().unwrap()).unwrap();
        assert_eq!(fdnn.train.step_size, 0.1);
        assert_eq!(fbnn.train.step_size, 0.5);
        assert_eq!(fdnn.hidden.len(), 2);
        assert_eq!(fdnn.hidden[0].activation, Activation::Relu);
        assert_eq!(fdnn.hidden[1].activation, Activation::Tanh);
        assert_eq!(fdnn.hidden[1].grid.len(), 8);
    }

    #[test]
    fn labelled_variants_read_their_own_prefix() {
        let s = Settings::parse("fdnn_r.strategy = penalty\nfdnn_r.lambda_grid = 0, 0.1").unwrap();
        let r = s.model(&"fdnn_r".parse().unwrap()).unwrap();
        assert_eq!(r.name.kind, ModelKind::Fdnn);
        assert_eq!(r.strategy, Strategy::Penalty);
        assert_eq!(r.lambda_grid, vec![Lambda::ZERO, Lambda::both(0.1)]);
        assert_eq!(s.model(&"fdnn".parse().unwrap()).unwrap().strategy, Strategy::Early);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Settings::parse("no equals sign").is_err());
        let s = Settings::parse("patience = soon").unwrap();
        assert!(s.model(&"fdnn".parse().unwrap()).is_err());
        assert!("cnn".parse::<ModelName>().is_err());
    }

    #[test]
    fn split_defaults() {
        let s = Settings::default();
        let p = s.split_spec(1100, 1).unwrap();
        assert_eq!((p.n_train, p.n_val, p.n_test), (500, 100, 500));
        let t = s.split_spec(5, 1).unwrap();
        assert_eq!((t.n_train, t.n_val, t.n_test), (3, 0, 2));
        let one = s.split_spec(1, 1).unwrap();
        assert_eq!((one.n_train, one.n_test), (1, 0));
    }
}
