//! Simulation scenarios on Matérn predictors, dataset container, splitting, and
//! missing-value handling for tabular curve data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
#[allow(unused_imports)] // inherent under `cfg(test)`, where std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::gp::{gp_sample, MaternParams};
use crate::grid::{interpolate_values, trapezoid_values, Grid, GridFunction};
use crate::rng;

/// `n` samples of `predictors` curves on `x_grid` and one response on `y_grid`.
///
/// `x` is `n x predictors x m` row-major, `y` is `n x m_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuncDataset {
    pub x_grid: Grid,
    pub y_grid: Grid,
    pub predictors: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_clean: Option<Vec<f64>>,
    pub ids: Vec<String>,
}

impl FuncDataset {
    pub fn new(x_grid: Grid, y_grid: Grid, predictors: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = y.len() / y_grid.len();
        let ds = FuncDataset {
            x_grid,
            y_grid,
            predictors,
            x,
            y,
            y_clean: None,
            ids: (0..n).map(|i| format!("{i}")).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.predictors == 0 {
            return Err(Error::InvalidParameter("dataset needs at least one predictor".into()));
        }
        let n = self.len();
        if self.y.len() != n * self.y_grid.len() {
            return Err(shape_err!("{} response values on {} points", self.y.len(), self.y_grid.len()));
        }
        if self.x.len() != n * self.row_len() {
            return Err(shape_err!("{} predictor values for {n} samples", self.x.len()));
        }
        if self.ids.len() != n {
            return Err(shape_err!("{} ids for {n} samples", self.ids.len()));
        }
        if let Some(c) = &self.y_clean {
            if c.len() != self.y.len() {
                return Err(shape_err!("noiseless response has {} values", c.len()));
            }
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset values".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len() / self.y_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Values per sample in `x`.
    pub fn row_len(&self) -> usize {
        self.predictors * self.x_grid.len()
    }

    pub fn predictor(&self, i: usize, r: usize) -> GridFunction {
        let m = self.x_grid.len();
        let o = i * self.row_len() + r * m;
        GridFunction {
            grid: self.x_grid,
            values: self.x[o..o + m].to_vec(),
        }
    }

    pub fn response(&self, i: usize) -> GridFunction {
        let m = self.y_grid.len();
        GridFunction {
            grid: self.y_grid,
            values: self.y[i * m..(i + 1) * m].to_vec(),
        }
    }

    pub fn subset(&self, idx: &[usize]) -> FuncDataset {
        let (rl, my) = (self.row_len(), self.y_grid.len());
        let mut x = Vec::with_capacity(idx.len() * rl);
        let mut y = Vec::with_capacity(idx.len() * my);
        let mut clean = self.y_clean.as_ref().map(|_| Vec::with_capacity(idx.len() * my));
        for &i in idx {
            x.extend_from_slice(&self.x[i * rl..(i + 1) * rl]);
            y.extend_from_slice(&self.y[i * my..(i + 1) * my]);
            if let (Some(c), Some(src)) = (clean.as_mut(), self.y_clean.as_ref()) {
                c.extend_from_slice(&src[i * my..(i + 1) * my]);
            }
        }
        FuncDataset {
            x_grid: self.x_grid,
            y_grid: self.y_grid,
            predictors: self.predictors,
            x,
            y,
            y_clean: clean,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Samples of `self` followed by those of `other`.
    pub fn concat(&self, other: &FuncDataset) -> Result<FuncDataset> {
        if self.x_grid != other.x_grid || self.y_grid != other.y_grid || self.predictors != other.predictors {
            return Err(shape_err!("datasets have different layouts"));
        }
        let join = |a: &[f64], b: &[f64]| [a, b].concat();
        Ok(FuncDataset {
            x_grid: self.x_grid,
            y_grid: self.y_grid,
            predictors: self.predictors,
            x: join(&self.x, &other.x),
            y: join(&self.y, &other.y),
            y_clean: match (&self.y_clean, &other.y_clean) {
                (Some(a), Some(b)) => Some(join(a, b)),
                _ => None,
            },
            ids: self.ids.iter().chain(&other.ids).cloned().collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Linear,
    Cam,
    SingleIndex,
    MultipleIndex,
    Quadratic,
    ComplexQuadratic,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 6] = [
        ScenarioKind::Linear,
        ScenarioKind::Cam,
        ScenarioKind::SingleIndex,
        ScenarioKind::MultipleIndex,
        ScenarioKind::Quadratic,
        ScenarioKind::ComplexQuadratic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Linear => "linear",
            ScenarioKind::Cam => "cam",
            ScenarioKind::SingleIndex => "single_index",
            ScenarioKind::MultipleIndex => "multiple_index",
            ScenarioKind::Quadratic => "quadratic",
            ScenarioKind::ComplexQuadratic => "complex_quadratic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown scenario '{s}'")))
    }
}

/// Argument of the squared predictor in the complex-quadratic single integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CqFirstTerm {
    /// `∫ X(t)² s t ds = X(t)² t / 2`, with `X(t)` interpolated onto the response grid.
    #[default]
    PredictorAtT,
    /// `∫ X(s)² s t ds`.
    PredictorAtS,
}

/// Integrand of the complex-quadratic double integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CqSecondTerm {
    /// `(X(q) X(s))²`, i.e. `(∫X²)²`.
    #[default]
    Product,
    /// `(X(q) X(s) q s t)²`, i.e. `t² (∫X(s)² s² ds)²`.
    PolynomialWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub cq_first: CqFirstTerm,
    #[serde(default)]
    pub cq_second: CqSecondTerm,
}

impl From<ScenarioKind> for Scenario {
    fn from(kind: ScenarioKind) -> Self {
        Scenario {
            kind,
            cq_first: CqFirstTerm::default(),
            cq_second: CqSecondTerm::default(),
        }
    }
}

/// `∫ f(s, X(s)) ds` by trapezoid on the predictor grid.
fn integral(x: &[f64], grid: &Grid, f: impl Fn(f64, f64) -> f64) -> f64 {
    let v: Vec<f64> = x.iter().enumerate().map(|(i, &xi)| f(grid.point(i), xi)).collect();
    trapezoid_values(grid, &v)
}

/// `∫ β(s) X(s) ds`.
fn inner(x: &[f64], grid: &Grid, beta: impl Fn(f64) -> f64) -> f64 {
    integral(x, grid, |s, xs| beta(s) * xs)
}

impl Scenario {
    /// Noiseless response on `y_grid` for one predictor curve on `x_grid`.
    pub fn response(&self, x: &[f64], x_grid: &Grid, y_grid: &Grid) -> Result<Vec<f64>> {
        if x.len() != x_grid.len() {
            return Err(shape_err!("{} predictor values on {} points", x.len(), x_grid.len()));
        }
        let t = y_grid.points();
        let out = match self.kind {
            ScenarioKind::Linear => {
                let z = inner(x, x_grid, |s| 5.0 * (2.0 * PI * s).sin());
                t.iter().map(|t| 3.0 * (3.0 * PI * t).sin() * z).collect()
            }
            ScenarioKind::Cam => {
                let z = integral(x, x_grid, |s, xs| s * xs * xs);
                t.iter().map(|t| t * z).collect()
            }
            ScenarioKind::SingleIndex => {
                let z = inner(x, x_grid, |s| 5.0 * (2.0 * PI * s).sin());
                t.iter().map(|t| (3.0 * (3.0 * PI * t).sin() * z).powi(2)).collect()
            }
            ScenarioKind::MultipleIndex => {
                let z1 = inner(x, x_grid, |s| 5.0 * (2.0 * PI * s).sin());
                let z2 = inner(x, x_grid, |s| 4.0 * (5.0 * PI * s).sin());
                t.iter()
                    .map(|t| (3.0 * (3.0 * PI * t).sin() * z1).powi(2) * (2.0 * (3.0 * PI * t).sin() * z2).powi(2))
                    .collect()
            }
            ScenarioKind::Quadratic => {
                let z = inner(x, x_grid, |s| 5.0 * (2.0 * PI * s).sin());
                // the double integral separates into a product of single integrals
                let zq = inner(x, x_grid, |q| 5.0 * (3.0 * PI * q).sin());
                let zs = inner(x, x_grid, |s| 5.0 * (PI * s).sin());
                t.iter()
                    .map(|t| 3.0 * (3.0 * PI * t).sin() * z + 5.0 * (PI * t).sin() * zq * zs)
                    .collect()
            }
            ScenarioKind::ComplexQuadratic => {
                let first: Vec<f64> = match self.cq_first {
                    CqFirstTerm::PredictorAtT => {
                        t.iter().map(|&t| interpolate_values(x_grid, x, t).powi(2) * t / 2.0).collect()
                    }
                    CqFirstTerm::PredictorAtS => {
                        let z = integral(x, x_grid, |s, xs| s * xs * xs);
                        t.iter().map(|t| t * z).collect()
                    }
                };
                let second: Vec<f64> = match self.cq_second {
                    CqSecondTerm::Product => {
                        let z = integral(x, x_grid, |_, xs| xs * xs);
                        vec![z * z; t.len()]
                    }
                    CqSecondTerm::PolynomialWeighted => {
                        let z = integral(x, x_grid, |s, xs| s * s * xs * xs);
                        t.iter().map(|t| t * t * z * z).collect()
                    }
                };
                first.iter().zip(&second).map(|(a, b)| a + b).collect()
            }
        };
        Ok(out)
    }
}

/// Sample counts and grids for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub n: usize,
    pub m: usize,
    pub m_y: usize,
    pub matern: MaternParams,
    /// Standard deviation of the additive noise.
    pub noise_sd: f64,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        GenerateSpec {
            n: 1100,
            m: 100,
            m_y: 75,
            matern: MaternParams::default(),
            noise_sd: 1.0,
        }
    }
}

/// Predictors from the Matérn GP, responses from the scenario plus iid noise.
pub fn generate(scenario: &Scenario, spec: &GenerateSpec, seed: u64) -> Result<FuncDataset> {
    if !(spec.noise_sd >= 0.0) || !spec.noise_sd.is_finite() {
        return Err(Error::InvalidParameter(format!("noise sd {}", spec.noise_sd)));
    }
    let (xg, yg) = (Grid::new(spec.m)?, Grid::new(spec.m_y)?);
    let curves = gp_sample(&xg, &spec.matern, spec.n, seed)?;
    let mut noise = rng::stream(seed, rng::streams::NOISE);
    let mut x = Vec::with_capacity(spec.n * spec.m);
    let mut clean = Vec::with_capacity(spec.n * spec.m_y);
    for c in &curves {
        x.extend_from_slice(&c.values);
        clean.extend(scenario.response(&c.values, &xg, &yg)?);
    }
    let y = clean
        .iter()
        .map(|v| {
            let e: f64 = noise.sample(StandardNormal);
            v + spec.noise_sd * e
        })
        .collect();
    let mut ds = FuncDataset::new(xg, yg, 1, x, y)?;
    ds.y_clean = Some(clean);
    Ok(ds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            n_train: 500,
            n_val: 100,
            n_test: 500,
            seed,
        }
    }
}

/// Shuffled `(train, val, test)` partition.
pub fn split(data: &FuncDataset, spec: &SplitSpec) -> Result<(FuncDataset, FuncDataset, FuncDataset)> {
    let n = data.len();
    if spec.n_train + spec.n_val + spec.n_test != n {
        return Err(shape_err!(
            "split {}+{}+{} of {n} samples",
            spec.n_train,
            spec.n_val,
            spec.n_test
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(spec.seed, rng::streams::SPLIT));
    let (a, rest) = idx.split_at(spec.n_train);
    let (b, c) = rest.split_at(spec.n_val);
    Ok((data.subset(a), data.subset(b), data.subset(c)))
}

/// Column counts of a tabular curve file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableLayout {
    pub m: usize,
    pub m_y: usize,
}

/// Rows with more than this fraction of missing values are rejected.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

/// Fills interior gaps by linear interpolation and edge gaps with the nearest observed value.
pub fn fill_missing(values: &[Option<f64>]) -> Result<Vec<f64>> {
    let observed: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
        return Err(Error::InvalidParameter("curve has no observed values".into()));
    };
    let get = |i: usize| values[i].expect("observed");
    let mut out = vec![0.0; values.len()];
    for (i, o) in out.iter_mut().enumerate() {
        *o = if i <= first {
            get(first)
        } else if i >= last {
            get(last)
        } else if let Some(v) = values[i] {
            v
        } else {
            let hi = observed.partition_point(|&j| j < i);
            let (a, b) = (observed[hi - 1], observed[hi]);
            let w = (i - a) as f64 / (b - a) as f64;
            get(a) + w * (get(b) - get(a))
        };
    }
    Ok(out)
}

/// Builds a single-predictor dataset from parsed rows of `id, x_1..x_m, y_1..y_my`.
///
/// Returns the dataset and the ids of rejected rows.
pub fn from_table_rows(rows: Vec<(String, Vec<Option<f64>>)>, layout: TableLayout) -> Result<(FuncDataset, Vec<String>)> {
    let (xg, yg) = (Grid::new(layout.m)?, Grid::new(layout.m_y)?);
    let width = layout.m + layout.m_y;
    let (mut x, mut y, mut ids, mut rejected) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (id, cells) in rows {
        if cells.len() != width {
            return Err(shape_err!("row '{id}' has {} value columns, expected {width}", cells.len()));
        }
        let missing = cells.iter().filter(|c| c.is_none()).count();
        if missing as f64 > MAX_MISSING_FRACTION * width as f64 {
            rejected.push(id);
            continue;
        }
        let (cx, cy) = cells.split_at(layout.m);
        let fx = fill_missing(cx).map_err(|_| Error::InvalidParameter(format!("row '{id}': predictor curve is all missing")))?;
        let fy = fill_missing(cy).map_err(|_| Error::InvalidParameter(format!("row '{id}': response curve is all missing")))?;
        x.extend(fx);
        y.extend(fy);
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::InvalidParameter("no usable rows".into()));
    }
    let mut ds = FuncDataset::new(xg, yg, 1, x, y)?;
    ds.ids = ids;
    Ok((ds, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(m: usize) -> Grid {
        Grid::new(m).unwrap()
    }

    #[test]
    fn linear_with_zero_predictor_is_zero() {
        let y = Scenario::from(ScenarioKind::Linear).response(&[0.0; 100], &g(100), &g(75)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cam_with_unit_predictor_is_half_t() {
        let yg = g(75);
        let y = Scenario::from(ScenarioKind::Cam).response(&[1.0; 100], &g(100), &yg).unwrap();
        for (i, v) in y.iter().enumerate() {
            assert!((v - yg.point(i) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_double_integral_matches_riemann_oracle() {
        let xf = |s: f64| (2.0 * PI * s).cos() + s * s - 0.3;
        let xg = g(100);
        let x: Vec<f64> = xg.points().iter().map(|&s| xf(s)).collect();
        let yg = g(75);
        let sc = Scenario::from(ScenarioKind::Quadratic);
        let y = sc.response(&x, &xg, &yg).unwrap();
        let lin = Scenario::from(ScenarioKind::Linear).response(&x, &xg, &yg).unwrap();
        // midpoint rule on a 400 x 400 grid for the double integral
        let k = 400;
        let h = 1.0 / k as f64;
        let mut dbl = 0.0;
        for a in 0..k {
            let q = (a as f64 + 0.5) * h;
            for b in 0..k {
                let s = (b as f64 + 0.5) * h;
                dbl += 5.0 * (3.0 * PI * q).sin() * 5.0 * (PI * s).sin() * xf(q) * xf(s) * h * h;
            }
        }
        for i in 0..75 {
            let t = yg.point(i);
            let oracle = 5.0 * (PI * t).sin() * dbl;
            let got = y[i] - lin[i];
            assert!((got - oracle).abs() <= 1e-3 * oracle.abs().max(1e-3), "{got} vs {oracle}");
        }
    }

    #[test]
    fn complex_quadratic_variants() {
        let (xg, yg) = (g(50), g(11));
        let x = vec![2.0; 50];
        let y = |first, second| {
            Scenario {
                kind: ScenarioKind::ComplexQuadratic,
                cq_first: first,
                cq_second: second,
            }
            .response(&x, &xg, &yg)
            .unwrap()
        };
        let d = y(CqFirstTerm::PredictorAtT, CqSecondTerm::Product);
        let s = y(CqFirstTerm::PredictorAtS, CqSecondTerm::PolynomialWeighted);
        for i in 0..11 {
            let t = yg.point(i);
            assert!((d[i] - (4.0 * t / 2.0 + 16.0)).abs() < 1e-12);
            // ∫4 s t ds = 2t; t² (∫4 s² ds)² = t² 16/9, up to trapezoid error
            assert!((s[i] - (2.0 * t + t * t * 16.0 / 9.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn generate_is_deterministic_and_hits_noise_floor() {
        let spec = GenerateSpec {
            n: 400,
            m: 30,
            m_y: 20,
            ..GenerateSpec::default()
        };
        let sc = Scenario::from(ScenarioKind::Linear);
        let a = generate(&sc, &spec, 3).unwrap();
        assert_eq!(a, generate(&sc, &spec, 3).unwrap());
        assert_ne!(a.y, generate(&sc, &spec, 4).unwrap().y);
        let clean = a.y_clean.as_ref().unwrap();
        let q = a.y_grid.trapezoid_weights();
        let mse: f64 = a
            .y
            .iter()
            .zip(clean)
            .enumerate()
            .map(|(i, (y, c))| q[i % 20] * (y - c).powi(2))
            .sum::<f64>()
            / 400.0;
        assert!((mse.sqrt() - 1.0).abs() < 0.05, "{}", mse.sqrt());
        // responses are a deterministic function of X
        let again = sc.response(&a.predictor(7, 0).values, &a.x_grid, &a.y_grid).unwrap();
        assert_eq!(&again[..], &clean[7 * 20..8 * 20]);
    }

    #[test]
    fn predictor_covariance_matches_matern() {
        let spec = GenerateSpec {
            n: 2000,
            m: 5,
            m_y: 2,
            ..GenerateSpec::default()
        };
        let d = generate(&Scenario::from(ScenarioKind::Linear), &spec, 11).unwrap();
        // grid 0, .25, .5, .75, 1
        let cov: f64 = (0..2000).map(|i| d.x[i * 5 + 1] * d.x[i * 5 + 3]).sum::<f64>() / 2000.0;
        let expect = crate::gp::matern_cov(0.25, 0.75, &MaternParams::default()).unwrap();
        assert!((cov - expect).abs() < 0.1, "{cov} vs {expect}");
    }

    #[test]
    fn standard_split_sizes_and_partition() {
        let spec = GenerateSpec {
            n: 1100,
            m: 5,
            m_y: 3,
            ..GenerateSpec::default()
        };
        let mut d = generate(&Scenario::from(ScenarioKind::Cam), &spec, 1).unwrap();
        d.ids = (0..1100).map(|i| format!("{i}")).collect();
        let (a, b, c) = split(&d, &SplitSpec::standard(5)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (500, 100, 500));
        let (a2, _, _) = split(&d, &SplitSpec::standard(5)).unwrap();
        assert_eq!(a, a2);
        let mut all: Vec<usize> = a.ids.iter().chain(&b.ids).chain(&c.ids).map(|s| s.parse().unwrap()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..1100).collect::<Vec<_>>());
        assert!(split(&d, &SplitSpec { n_train: 1, ..SplitSpec::standard(5) }).is_err());
        assert_eq!(a.concat(&b).unwrap().len(), 600);
    }

    #[test]
    fn missing_values_are_interpolated() {
        let v = fill_missing(&[Some(1.0), None, Some(3.0), None, None, Some(0.0)]).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 2.0, 1.0, 0.0]);
        assert_eq!(fill_missing(&[None, Some(2.0), None]).unwrap(), vec![2.0; 3]);
        assert!(fill_missing(&[None, None]).is_err());
    }

    #[test]
    fn table_rows_reject_sparse_and_malformed() {
        let layout = TableLayout { m: 4, m_y: 2 };
        let full = |id: &str| (String::from(id), vec![Some(1.0); 6]);
        let mut sparse = full("sparse");
        sparse.1[0] = None;
        sparse.1[1] = None;
        let mut gap = full("gap");
        gap.1[2] = None;
        let (ds, rejected) = from_table_rows(vec![full("a"), sparse, gap], layout).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(rejected, vec![String::from("sparse")]);
        assert!(from_table_rows(vec![(String::from("x"), vec![Some(1.0); 5])], layout).is_err());
        let mut dead = full("dead");
        dead.1[4] = None;
        dead.1[5] = None;
        assert!(from_table_rows(vec![dead], TableLayout { m: 8, m_y: 2 }).is_err());
    }

    proptest! {
        #[test]
        fn fill_preserves_observed(vals in proptest::collection::vec(proptest::option::of(-10.0f64..10.0), 2..30)) {
            prop_assume!(vals.iter().any(|v| v.is_some()));
            let out = fill_missing(&vals).unwrap();
            for (o, v) in out.iter().zip(&vals) {
                if let Some(v) = v {
                    prop_assert_eq!(o, v);
                }
            }
            let (lo, hi) = vals.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            prop_assert!(out.iter().all(|&o| o >= lo - 1e-12 && o <= hi + 1e-12));
        }

        #[test]
        fn scenarios_are_finite(seed in 0u64..50) {
            let spec = GenerateSpec { n: 3, m: 20, m_y: 7, ..GenerateSpec::default() };
            for kind in ScenarioKind::ALL {
                let d = generate(&Scenario::from(kind), &spec, seed).unwrap();
                prop_assert!(d.y.iter().all(|v| v.is_finite()));
            }
        }
    }
}
