use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use funcnet::commands::{self, GRADCHECK_TOLERANCE};
use funcnet::{CliError, CliResult, Settings};

#[derive(Parser)]
#[command(name = "funcnet", version, about = "Function-on-function regression with continuous neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset (data.csv and data.json).
    Simulate(Common),
    /// Fit one model to a dataset (model.json, history.csv, metrics.json).
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replicated simulation benchmark (results.csv, summary.csv, parameter functions).
    Benchmark(Common),
    /// Finite-difference check of every hand-derived gradient.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Perturb the analytic gradient; the check must then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario name; a comma-separated list for benchmark.
    #[arg(long)]
    scenario: Option<String>,
    /// Model name; a comma-separated list for benchmark.
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads; FUNCNET_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
    /// Any config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        s.apply_assignments(self.set.iter().map(String::as_str))?;
        if let Some(v) = self.seed {
            s.set("seed", &v.to_string());
        }
        if let Some(v) = &self.scenario {
            s.set("scenario", v);
        }
        if let Some(v) = &self.model {
            s.set("model", v);
        }
        if let Some(v) = &self.out {
            s.set("out", &v.display().to_string());
        }
        if let Some(v) = self.replicates {
            s.set("replicates", &v.to_string());
        }
        Ok(s)
    }

    fn workers(&self, settings: &Settings) -> CliResult<usize> {
        if let Ok(v) = std::env::var("FUNCNET_WORKERS") {
            return v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("FUNCNET_WORKERS='{v}' is not a count")));
        }
        match self.workers {
            Some(w) => Ok(w),
            None => settings.get("workers", std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let path = commands::simulate(&c.settings()?)?;
            println!("wrote {}", path.display());
        }
        Command::Fit { common, data } => {
            let mut s = common.settings()?;
            if let Some(d) = data {
                s.set("data", &d.display().to_string());
            }
            let f = commands::fit(&s)?;
            let m = &f.metrics;
            let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            println!(
                "{} ({}): train rmse {:.4}, val rmse {}, test rmse {}",
                m.model,
                m.strategy,
                m.train_rmse,
                show(m.val_rmse),
                show(m.test_rmse)
            );
        }
        Command::Benchmark(c) => {
            let s = c.settings()?;
            let report = commands::benchmark(&s, c.workers(&s)?)?;
            println!("{:<20} {:<10} {:>4} {:>9} {:>9}", "scenario", "model", "ok", "mean", "se");
            for row in funcnet::benchmark::summarize(&report.results) {
                println!(
                    "{:<20} {:<10} {:>4} {:>9.4} {:>9.4}",
                    row.scenario,
                    row.model,
                    row.replicates - row.failed,
                    row.mean,
                    row.se
                );
            }
        }
        Command::Gradcheck { common, corrupt_gradient } => {
            let cases = commands::gradcheck(&common.settings()?, corrupt_gradient)?;
            let mut worst: f64 = 0.0;
            for c in &cases {
                let ok = c.max_relative_error <= GRADCHECK_TOLERANCE;
                println!(
                    "{:<24} params {:>5}  max rel err {:.3e}  {}",
                    c.name,
                    c.num_params,
                    c.max_relative_error,
                    if ok { "ok" } else { "FAIL" }
                );
                worst = worst.max(c.max_relative_error);
            }
            if !(worst <= GRADCHECK_TOLERANCE) {
                return Err(CliError::Numerical(funcnet_core::Error::NonFinite(format!(
                    "gradient check failed: max relative error {worst:.3e} > {GRADCHECK_TOLERANCE:e}"
                ))));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
