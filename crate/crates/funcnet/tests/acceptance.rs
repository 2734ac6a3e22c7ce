//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p funcnet --test acceptance`. Optional environment:
//! `FUNCNET_ACCEPTANCE_ONLY=3,4` runs a subset, `FUNCNET_ACCEPTANCE_REPLICATES` overrides the
//! replicate counts, `FUNCNET_ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit,
//! `FUNCNET_ADELAIDE` / `FUNCNET_BIKE` point at user-supplied real datasets.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use funcnet::benchmark::{self, summarize, BenchmarkPlan, SummaryRow};
use funcnet::commands::{self, GRADCHECK_TOLERANCE};
use funcnet::pipeline::{self, Splits};
use funcnet::settings::Settings;
use funcnet_core::bspline::BSplineBasis;
use funcnet_core::datagen::{generate, split, FuncDataset, GenerateSpec, ScenarioKind, SplitSpec};
use funcnet_core::fbnn::{BasisSpec, FbnnConfig, FbnnNetwork};
use funcnet_core::fdnn::{FdnnConfig, HiddenSpec};
use funcnet_core::gp::{gp_sample, matern_cov, MaternParams};
use funcnet_core::model::Lambda;
use funcnet_core::training::{train_early_stopping, EsStrategy, Optimizer, TrainConfig};
use funcnet_core::{Activation, Grid, Model};
use rand::{Rng, SeedableRng};

const GRADCHECK_BUDGET: Duration = Duration::from_secs(60);
const DEGENERACY_TOL: f64 = 0.05;
const DEGENERACY_BUDGET: Duration = Duration::from_secs(5 * 60);
const NOISE_FLOOR: (f64, f64) = (1.00, 1.10);
const NOISE_FLOOR_BUDGET: Duration = Duration::from_secs(30 * 60);
const CQ_VS_VNN: f64 = 0.75;
const CQ_VS_FFLM: f64 = 0.5;
const CQ_BUDGET: Duration = Duration::from_secs(60 * 60);
const QUAD_MAX: f64 = 1.25;
const QUAD_MARGIN: f64 = 0.3;
const REG_RMSE_TOL: f64 = 0.20;
const REG_ROUGHNESS_RATIO: f64 = 5.0;
const REG_REPLICATES: usize = 3;
const MONOTONE_LAMBDAS: [f64; 4] = [0.0, 1e-2, 1e-1, 1.0];
const GRAM_TOL: f64 = 1e-6;
const MATERN_VAR_TOL: f64 = 0.15;
const MATERN_LAG_COV: f64 = 0.5240;
const MATERN_COV_TOL: f64 = 0.05;
const MATERN_CURVES: usize = 2000;
const REPLICATES: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = fn() -> Result<Outcome, String>;

fn replicates(default: usize) -> usize {
    std::env::var("FUNCNET_ACCEPTANCE_REPLICATES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(default)
}

fn workers() -> usize {
    std::env::var("FUNCNET_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn out_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name)
}

fn settings(text: &str) -> Settings {
    Settings::parse(text).expect("acceptance settings")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Runs a benchmark and writes its tables under the criterion's output directory.
fn bench(name: &str, text: &str) -> Result<Vec<SummaryRow>, String> {
    let dir = out_dir(name);
    let s = settings(&format!("{text}\nout = {}", dir.display()));
    let plan = BenchmarkPlan::from_settings(&s, workers()).map_err(err)?;
    let report = benchmark::run(&s, &plan).map_err(err)?;
    benchmark::write_report(&dir, &report).map_err(err)?;
    for r in report.results.iter().filter(|r| r.error.is_some()) {
        eprintln!("  {} {} replicate {} failed: {}", r.scenario, r.model, r.replicate, r.error.as_deref().unwrap_or(""));
    }
    Ok(summarize(&report.results))
}

fn mean_of(rows: &[SummaryRow], model: &str) -> Result<f64, String> {
    let r = rows.iter().find(|r| r.model == model).ok_or(format!("no rows for {model}"))?;
    if r.failed > 0 {
        return Err(format!("{model}: {} of {} replicates failed", r.failed, r.replicates));
    }
    Ok(r.mean)
}

fn standard_replicate(kind: ScenarioKind, seed: u64) -> Result<Splits, String> {
    let data = generate(&kind.into(), &GenerateSpec::default(), seed).map_err(err)?;
    let (train, val, test) = split(&data, &SplitSpec::standard(seed)).map_err(err)?;
    Ok(Splits { train, val, test })
}

fn c1_gradient_fidelity() -> Result<Outcome, String> {
    let start = Instant::now();
    let cases = commands::gradcheck(&Settings::default(), false).map_err(err)?;
    let elapsed = start.elapsed();
    let worst = cases.iter().map(|c| c.max_relative_error).fold(0.0, f64::max);
    let names: Vec<&str> = cases.iter().map(|c| c.name.as_str()).collect();
    Ok(outcome(
        worst <= GRADCHECK_TOLERANCE && elapsed < GRADCHECK_BUDGET,
        format!(
            "max rel err {worst:.2e} <= {GRADCHECK_TOLERANCE:e} over {} cases ({}), {:.1}s < {}s",
            cases.len(),
            names.join(", "),
            elapsed.as_secs_f64(),
            GRADCHECK_BUDGET.as_secs()
        ),
    ))
}

fn c2_fdnn_fflm_degeneracy() -> Result<Outcome, String> {
    let start = Instant::now();
    let sp = standard_replicate(ScenarioKind::Linear, 2024)?;
    let s = settings("hidden = none");
    let fdnn = pipeline::fit(&s.model(&"fdnn".parse().map_err(err)?).map_err(err)?, &sp).map_err(err)?;
    let fflm = pipeline::fit(&s.model(&"fflm".parse().map_err(err)?).map_err(err)?, &sp).map_err(err)?;
    let (a, b) = (fdnn.metrics.test_rmse.unwrap_or(f64::NAN), fflm.metrics.test_rmse.unwrap_or(f64::NAN));
    let elapsed = start.elapsed();
    Ok(outcome(
        (a - b).abs() <= DEGENERACY_TOL && elapsed < DEGENERACY_BUDGET,
        format!(
            "L=1 identity FDNN {a:.4} vs FFLM {b:.4}, |diff| {:.4} <= {DEGENERACY_TOL}, {:.0}s",
            (a - b).abs(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn c3_noise_floor() -> Result<Outcome, String> {
    let start = Instant::now();
    let n = replicates(REPLICATES);
    let rows = bench("noise_floor", &format!("scenario = linear\nmodel = fflm, fdnn, fbnn\nreplicates = {n}\nseed = 3"))?;
    let elapsed = start.elapsed();
    let mut pass = elapsed < NOISE_FLOOR_BUDGET;
    let mut parts = Vec::new();
    for m in ["fflm", "fdnn", "fbnn"] {
        let v = mean_of(&rows, m)?;
        pass &= (NOISE_FLOOR.0..=NOISE_FLOOR.1).contains(&v);
        parts.push(format!("{m} {v:.4}"));
    }
    Ok(outcome(
        pass,
        format!(
            "linear, {n} replicates: {} in [{}, {}], {:.0}s",
            parts.join(", "),
            NOISE_FLOOR.0,
            NOISE_FLOOR.1,
            elapsed.as_secs_f64()
        ),
    ))
}

fn c4_nonlinear_ordering() -> Result<Outcome, String> {
    let start = Instant::now();
    let n = replicates(REPLICATES);
    let rows = bench(
        "complex_quadratic",
        &format!("scenario = complex_quadratic\nmodel = fflm, vnn, fdnn, fbnn\nreplicates = {n}\nseed = 4"),
    )?;
    let elapsed = start.elapsed();
    let (fflm, vnn, fdnn, fbnn) = (mean_of(&rows, "fflm")?, mean_of(&rows, "vnn")?, mean_of(&rows, "fdnn")?, mean_of(&rows, "fbnn")?);
    Ok(outcome(
        fdnn <= CQ_VS_VNN * vnn && fdnn <= CQ_VS_FFLM * fflm && elapsed < CQ_BUDGET,
        format!(
            "complex quadratic, {n} replicates: FFLM {fflm:.3}, NN {vnn:.3}, FDNN {fdnn:.3}, FBNN {fbnn:.3}; \
             FDNN/NN {:.3} <= {CQ_VS_VNN}, FDNN/FFLM {:.3} <= {CQ_VS_FFLM}, {:.0}s",
            fdnn / vnn,
            fdnn / fflm,
            elapsed.as_secs_f64()
        ),
    ))
}

fn c5_quadratic_parity() -> Result<Outcome, String> {
    let n = replicates(REPLICATES);
    let rows = bench("quadratic", &format!("scenario = quadratic\nmodel = fflm, fdnn\nreplicates = {n}\nseed = 5"))?;
    let (fflm, fdnn) = (mean_of(&rows, "fflm")?, mean_of(&rows, "fdnn")?);
    Ok(outcome(
        fdnn <= QUAD_MAX && fdnn <= fflm - QUAD_MARGIN,
        format!("quadratic, {n} replicates: FDNN {fdnn:.3} <= {QUAD_MAX} and <= FFLM {fflm:.3} - {QUAD_MARGIN}"),
    ))
}

fn c6_regularization_tradeoff() -> Result<Outcome, String> {
    let n = replicates(REG_REPLICATES);
    let rows = bench(
        "regularization",
        &format!(
            "scenario = cam\nmodel = fdnn, fdnn_r\nreplicates = {n}\nseed = 6\n\
             fdnn_r.strategy = penalty\nfdnn_r.max_iterations = 1000\nfdnn_r.lambda_grid = 0, 0.001, 0.01, 0.1"
        ),
    )?;
    let (plain, pen) = (mean_of(&rows, "fdnn")?, mean_of(&rows, "fdnn_r")?);
    let rough = |m: &str| rows.iter().find(|r| r.model == m).and_then(|r| r.mean_roughness).unwrap_or(f64::NAN);
    let ratio = rough("fdnn") / rough("fdnn_r");
    Ok(outcome(
        (pen - plain).abs() <= REG_RMSE_TOL && ratio >= REG_ROUGHNESS_RATIO,
        format!(
            "cam, {n} replicates: RMSE {plain:.4} unpenalized vs {pen:.4} tuned, |diff| {:.4} <= {REG_RMSE_TOL}; \
             roughness {:.3e} vs {:.3e}, ratio {ratio:.3e} >= {REG_ROUGHNESS_RATIO}; parameter functions in {}",
            (pen - plain).abs(),
            rough("fdnn"),
            rough("fdnn_r"),
            out_dir("regularization").display()
        ),
    ))
}

/// Plain gradient descent on the B-spline network. A fixed-step adaptive optimizer stalls at a
/// step-size floor where the penalized fits become indistinguishable.
fn c7_penalty_monotonicity() -> Result<Outcome, String> {
    let spec = GenerateSpec {
        n: 150,
        ..GenerateSpec::default()
    };
    let data = generate(&ScenarioKind::Cam.into(), &spec, 7).map_err(err)?;
    let cfg = FbnnConfig {
        architecture: FdnnConfig {
            input_grid: data.x_grid,
            input_count: 1,
            hidden: vec![HiddenSpec {
                neurons: 2,
                grid: Grid::new(20).map_err(err)?,
                activation: Activation::Tanh,
            }],
            output_grid: data.y_grid,
        },
        basis: BasisSpec::uniform(15),
    };
    let mut values = Vec::new();
    for w in MONOTONE_LAMBDAS {
        let train = TrainConfig {
            step_size: 1e-4,
            max_iterations: 20_000,
            patience: None,
            optimizer: Optimizer::Gradient,
            lambda: Lambda::new(0.0, w).map_err(err)?,
            seed: 7,
            ..TrainConfig::default()
        };
        let fit = train_early_stopping(FbnnNetwork::init(&cfg, 7).map_err(err)?, &data, None, &train).map_err(err)?;
        values.push(fit.model.roughness().map_err(err)?.weight);
    }
    let monotone = values.windows(2).all(|p| p[1] <= p[0]);
    let shown: Vec<String> = MONOTONE_LAMBDAS.iter().zip(&values).map(|(l, v)| format!("{l}: {v:.6e}")).collect();
    Ok(outcome(monotone, format!("weight roughness by λw {{{}}}", shown.join(", "))))
}

/// Composite Simpson within each knot span, where spline products are polynomials.
fn span_simpson(knots: &[f64], per_span: usize) -> (Vec<f64>, Vec<f64>) {
    let (mut pts, mut wts) = (Vec::new(), Vec::new());
    for span in knots.windows(2).filter(|w| w[1] > w[0]) {
        let h = (span[1] - span[0]) / (2 * per_span) as f64;
        for i in 0..=2 * per_span {
            let c = if i == 0 || i == 2 * per_span {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            pts.push(span[0] + i as f64 * h);
            wts.push(c * h / 3.0);
        }
    }
    (pts, wts)
}

fn dense_laplacian_energy(w: &[f64], s: &BSplineBasis, t: &BSplineBasis) -> f64 {
    let (ps, qs) = span_simpson(s.knots(), 60);
    let (pt, qt) = span_simpson(t.knots(), 60);
    let (nc, nd) = (s.num_basis(), t.num_basis());
    let vs: Vec<(Vec<f64>, Vec<f64>)> = ps.iter().map(|&x| (s.eval(x), s.eval_derivative(x, 2))).collect();
    let vt: Vec<(Vec<f64>, Vec<f64>)> = pt.iter().map(|&x| (t.eval(x), t.eval_derivative(x, 2))).collect();
    let mut total = 0.0;
    for (a, (v0, v2)) in vs.iter().enumerate() {
        for (b, (u0, u2)) in vt.iter().enumerate() {
            let mut lap = 0.0;
            for c in 0..nc {
                for d in 0..nd {
                    lap += w[c * nd + d] * (v2[c] * u0[d] + v0[c] * u2[d]);
                }
            }
            total += qs[a] * qt[b] * lap * lap;
        }
    }
    total
}

fn c8_gram_penalty() -> Result<Outcome, String> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let shapes = [(6, 6), (9, 5), (15, 15), (7, 12)];
    for &(c, d) in &shapes {
        let cfg = FbnnConfig {
            architecture: FdnnConfig::linear(Grid::new(37).map_err(err)?, 1, Grid::new(23).map_err(err)?),
            basis: BasisSpec {
                intercept: 5,
                s: c,
                t: d,
                order: 4,
            },
        };
        let mut net = FbnnNetwork::zeros(&cfg).map_err(err)?;
        let layer = &mut net.layers[0];
        layer.weights.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let value = net.roughness().map_err(err)?.weight;
        let l = &net.layers[0];
        let dense = dense_laplacian_energy(&l.weights, &l.s_basis, &l.t_basis);
        worst = worst.max((value - dense).abs() / dense);
    }
    Ok(outcome(
        worst <= GRAM_TOL,
        format!("max rel diff {worst:.2e} <= {GRAM_TOL:e} over C x D in {shapes:?} vs per-span Simpson quadrature"),
    ))
}

fn c9_matern_statistics() -> Result<Outcome, String> {
    let grid = Grid::new(101).map_err(err)?;
    let p = MaternParams::default();
    let curves = gp_sample(&grid, &p, MATERN_CURVES, 9).map_err(err)?;
    let n = curves.len() as f64;
    let m = grid.len();
    let mean: Vec<f64> = (0..m).map(|i| curves.iter().map(|c| c.values[i]).sum::<f64>() / n).collect();
    let cov = |i: usize, j: usize| curves.iter().map(|c| (c.values[i] - mean[i]) * (c.values[j] - mean[j])).sum::<f64>() / (n - 1.0);
    let var_dev = (0..m).map(|i| (cov(i, i) - p.sigma2).abs()).fold(0.0, f64::max);
    // Points i/100 and i/100 + 0.5 are 50 grid steps apart.
    let lag: Vec<f64> = (0..m - 50).map(|i| cov(i, i + 50)).collect();
    let lag_mean = lag.iter().sum::<f64>() / lag.len() as f64;
    let closed = matern_cov(0.25, 0.75, &p).map_err(err)?;
    Ok(outcome(
        var_dev <= MATERN_VAR_TOL && (lag_mean - MATERN_LAG_COV).abs() <= MATERN_COV_TOL && (closed - MATERN_LAG_COV).abs() < 5e-5,
        format!(
            "{MATERN_CURVES} curves: max |var - 1| {var_dev:.3} <= {MATERN_VAR_TOL}; lag-0.5 covariance {lag_mean:.4} \
             (at 0.25/0.75: {:.4}) vs {MATERN_LAG_COV} ± {MATERN_COV_TOL}; closed form {closed:.4}",
            cov(25, 75)
        ),
    ))
}

fn c10_cv_strategies() -> Result<Outcome, String> {
    let sp = standard_replicate(ScenarioKind::Linear, 10)?;
    let mut parts = Vec::new();
    let mut pass = true;
    for strategy in EsStrategy::ALL {
        let s = settings(&format!("strategy = {}\nfolds = 5", strategy.name()));
        let f = pipeline::fit(&s.model(&"fdnn".parse().map_err(err)?).map_err(err)?, &sp).map_err(err)?;
        let rmse = f.metrics.test_rmse.unwrap_or(f64::NAN);
        pass &= rmse.is_finite();
        parts.push(format!("{} {rmse:.4}", strategy.name()));
    }
    Ok(outcome(pass, format!("FDNN on linear, 5-fold: {}", parts.join(", "))))
}

/// Writes `data` as a headerless real-data table (id, m predictor values, m_y response values)
/// with a few interior cells blanked.
fn write_real_layout(path: &Path, data: &FuncDataset) -> Result<(), String> {
    let (m, m_y) = (data.x_grid.len(), data.y_grid.len());
    let mut out = String::new();
    for i in 0..data.len() {
        let mut cells = vec![format!("day{i:03}")];
        for (k, v) in data.x[i * m..(i + 1) * m].iter().enumerate() {
            cells.push(if i % 7 == 0 && k == m / 2 { String::new() } else { v.to_string() });
        }
        cells.extend(data.y[i * m_y..(i + 1) * m_y].iter().map(f64::to_string));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::create_dir_all(path.parent().unwrap()).map_err(err)?;
    std::fs::write(path, out).map_err(err)
}

fn real_run(label: &str, path: &Path, m: usize, m_y: usize) -> Result<(bool, String), String> {
    let mut rmse = Vec::new();
    for model in ["fflm", "fdnn", "fbnn"] {
        let s = settings(&format!(
            "data = {}\nm = {m}\nm_y = {m_y}\nmodel = {model}\nseed = 11\nout = {}",
            path.display(),
            out_dir(&format!("real_{label}_{model}")).display()
        ));
        let data = commands::load_data(&s).map_err(err)?;
        let f = commands::fit_data(&s, &data).map_err(err)?;
        rmse.push(f.metrics.test_rmse.unwrap_or(f64::NAN));
    }
    let pass = rmse[1] < rmse[0] && rmse[2] < rmse[0];
    Ok((pass, format!("{label}: FFLM {:.3}, FDNN {:.3}, FBNN {:.3}", rmse[0], rmse[1], rmse[2])))
}

fn c11_real_data_harness() -> Result<Outcome, String> {
    // Synthetic stand-in in the real-data layout: 508 days on 48-point grids.
    let spec = GenerateSpec {
        n: 508,
        m: 48,
        m_y: 48,
        ..GenerateSpec::default()
    };
    let data = generate(&ScenarioKind::ComplexQuadratic.into(), &spec, 11).map_err(err)?;
    let path = out_dir("real_layout").join("synthetic.csv");
    write_real_layout(&path, &data)?;
    let (mut pass, synthetic) = real_run("synthetic", &path, 48, 48)?;
    let mut parts = vec![synthetic];
    for (var, label, m) in [("FUNCNET_ADELAIDE", "adelaide", 48), ("FUNCNET_BIKE", "bike", 24)] {
        match std::env::var(var) {
            Ok(p) => {
                let (ok, line) = real_run(label, Path::new(&p), m, m)?;
                pass &= ok;
                parts.push(line);
            }
            Err(_) => parts.push(format!("{label}: not supplied ({var})")),
        }
    }
    Ok(outcome(pass, format!("FDNN and FBNN below FFLM test RMSE; {}", parts.join("; "))))
}

fn main() {
    let criteria: [(u32, &str, Criterion); 11] = [
        (1, "gradient fidelity", c1_gradient_fidelity),
        (2, "FDNN/FFLM degeneracy", c2_fdnn_fflm_degeneracy),
        (3, "noise floor", c3_noise_floor),
        (4, "non-linear dominance ordering", c4_nonlinear_ordering),
        (5, "quadratic-scenario parity", c5_quadratic_parity),
        (6, "regularization trade-off", c6_regularization_tradeoff),
        (7, "penalty monotonicity", c7_penalty_monotonicity),
        (8, "Gram-form penalty", c8_gram_penalty),
        (9, "Matern generator statistics", c9_matern_statistics),
        (10, "CV early-stopping strategies", c10_cv_strategies),
        (11, "real-data harness", c11_real_data_harness),
    ];
    let only: Option<Vec<u32>> = std::env::var("FUNCNET_ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    // `cargo test` passes harness flags such as `--nocapture`; a bare argument filters by number.
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let (mut passed, mut failed, mut errored) = (0, 0, 0);
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) || (!filter.is_empty() && !filter.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) => {
                if o.pass {
                    passed += 1;
                } else {
                    failed += 1;
                }
                println!("{} criterion {id:>2} ({name}): {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(e) => {
                errored += 1;
                println!("FAIL criterion {id:>2} ({name}): error: {e} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed, {errored} errored");
    let strict = std::env::var("FUNCNET_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if errored > 0 || (strict && failed > 0) {
        std::process::exit(1);
    }
}
