use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mixshrink::{read_csv, render_rows, table_rows, write_simulation, CrossValReport, FitReport, METRICS};
use mixshrink_core::evaluation::{kfold_rmsep, ExperimentSpec, PredictRule};
use mixshrink_core::seed::stream_rng;
use mixshrink_core::{fit, Engine, Error as CoreError, FitConfig, Method};

#[derive(Parser)]
#[command(name = "mixshrink", version, about = "Mixtures of linear regressions with ridge and Liu-type shrinkage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a mixture to a CSV file and report the estimates.
    Fit {
        csv: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Print the JSON report on stdout instead of the summary.
        #[arg(long)]
        json: bool,
        /// Directory for fit.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a JSON experiment spec and write one table per metric.
    Simulate {
        spec: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Override the replicate count of every scenario.
        #[arg(long)]
        replicates: Option<usize>,
        /// Directory for the CSV tables and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// K-fold cross-validated prediction error on a CSV file.
    Crossval {
        csv: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, value_enum, default_value_t = Predict::MixtureMean)]
        predict: Predict,
        #[arg(long)]
        json: bool,
        /// Directory for crossval.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "ml", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value = "em", value_parser = parse_engine)]
    engine: Engine,
    #[arg(long, default_value_t = 2)]
    components: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    starts: usize,
    #[arg(long, env = "MIXSHRINK_SEED", default_value_t = 0)]
    seed: u64,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Comma-separated covariate columns; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Predict {
    MixtureMean,
    MaxComponent,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: CoreError| e.to_string())
}

impl ModelArgs {
    fn config(&self) -> Result<FitConfig> {
        let cfg = FitConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            n_starts: self.starts,
            seed: self.seed,
            ..FitConfig::new(self.method, self.engine, self.components)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_fit(csv: &Path, model: &ModelArgs, json: bool, out: Option<&Path>) -> Result<()> {
    let table = read_csv(csv, &model.response, model.covariates.as_deref())?;
    let intercept = !model.no_intercept;
    let data = table.dataset(intercept)?;
    let cfg = model.config()?;
    let res = match fit(&data, &cfg) {
        Ok(r) => r,
        Err(CoreError::AllStartsDegenerate { reasons, .. }) => {
            bail!("no start produced a usable fit:\n  {}", reasons.join("\n  "))
        }
        Err(e) => return Err(e.into()),
    };
    let report = FitReport::new(&table, intercept, &cfg, &res);
    let doc = report.to_json()?;
    if let Some(dir) = out {
        write_file(dir, "fit.json", &doc)?;
    }
    emit(&if json { doc } else { report.summary() })
}

fn cmd_crossval(csv: &Path, model: &ModelArgs, folds: usize, predict: Predict, json: bool, out: Option<&Path>) -> Result<()> {
    let table = read_csv(csv, &model.response, model.covariates.as_deref())?;
    let data = table.dataset(!model.no_intercept)?;
    if folds < 2 || folds > data.n() {
        bail!("--folds must lie in [2, n = {}], got {folds}", data.n());
    }
    let cfg = model.config()?;
    let rule = match predict {
        Predict::MixtureMean => PredictRule::MixtureMean,
        Predict::MaxComponent => PredictRule::MaxComponent,
    };
    let cv = kfold_rmsep(&data, &cfg, folds, &mut stream_rng(cfg.seed, 1), rule)?;
    let report = CrossValReport::new(&cfg, data.n(), &cv);
    let doc = report.to_json()?;
    if let Some(dir) = out {
        write_file(dir, "crossval.json", &doc)?;
    }
    emit(&if json { doc } else { report.summary() })
}

fn cmd_simulate(spec_path: &Path, workers: usize, replicates: Option<usize>, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("cannot read {}", spec_path.display()))?;
    let mut spec = ExperimentSpec::from_json(&text).map_err(|e| match e {
        CoreError::Spec(problems) => anyhow::anyhow!(
            "{} is not a valid experiment spec:\n  {}",
            spec_path.display(),
            problems.join("\n  ")
        ),
        e => e.into(),
    })?;
    if let Some(r) = replicates {
        if r == 0 {
            bail!("--replicates must be >= 1");
        }
        for s in &mut spec.scenarios {
            s.n_replicates = r;
        }
    }
    let results = spec.run(workers)?;
    if let Some(dir) = out {
        write_simulation(dir, spec.name.as_deref(), &results)?;
    }
    let mut text = String::new();
    for metric in METRICS {
        let rows = table_rows(&results, metric);
        if !rows.is_empty() {
            text.push_str(&render_rows(&rows));
            text.push('\n');
        }
    }
    emit(&text)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fit { csv, model, json, out } => cmd_fit(csv, model, *json, out.as_deref()),
        Command::Simulate {
            spec,
            workers,
            replicates,
            out,
        } => cmd_simulate(spec, *workers, *replicates, out.as_deref()),
        Command::Crossval {
            csv,
            model,
            folds,
            predict,
            json,
            out,
        } => cmd_crossval(csv, model, *folds, *predict, *json, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
