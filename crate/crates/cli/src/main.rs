use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use kgtrust::experiment::fixtures::{write_filmtrust_fixture, write_siot_fixture, FilmTrustFixture, SiotFixture};
use kgtrust::experiment::{
    ablate, append_metrics, run, sweep, write_trace, ExperimentConfig, MetricsRow, RunReport, SweepParam, Variant,
};
use kgtrust::par::Execution;
use kgtrust::train::{grad_check, gradcheck_fixture, save_checkpoint, Checkpoint, Fusion, ModelConfig};
use kgtrust::Error;

#[derive(Parser)]
#[command(
    name = "kgtrust",
    version,
    about = "Trust evaluation on heterogeneous user-object graphs"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate over several seeds.
    Run(RunArgs),
    /// Run the base config and ablated variants.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Variant name (woTriples, woPPR, woTrustee, woTrustor, concat) or `all`.
        #[arg(long, default_value = "all")]
        variant: String,
    },
    /// Vary one hyperparameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// ppr_k, latent_dim or train_ratio.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Compare analytic and finite-difference gradients on a small fixture.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic dataset.
    Fixtures {
        #[arg(long, value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// The 50-user, 80-object variant (siot only).
        #[arg(long)]
        small: bool,
        /// JSON object overriding generator fields, e.g. `{"num_users":400}`.
        #[arg(long)]
        spec: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Siot,
    Filmtrust,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_parser = ["filmtrust", "siot"])]
    kind: Option<String>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    ppr_k: Option<usize>,
    #[arg(long)]
    ppr_lambda: Option<f64>,
    #[arg(long)]
    ppr_epsilon: Option<f64>,
    #[arg(long)]
    no_ppr: bool,
    /// Initialize objects from `triples.csv` via TransE.
    #[arg(long)]
    triples: bool,
    #[arg(long, value_parser = ["gate", "concat"])]
    fusion: Option<String>,
    /// Any config field by dotted path, e.g. `--set optimizer.lr=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Directory receiving metrics.csv, trace.csv and model.ckpt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Run seeds one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v);
        if let Some(p) = &self.dataset {
            set("dataset.path", serde_json::to_string(p).expect("path serializes"))?;
        }
        if let Some(k) = &self.kind {
            set("dataset.kind", k.clone())?;
        }
        if let Some(v) = self.ratio {
            set("train_ratio", v.to_string())?;
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string())?;
        }
        if let Some(v) = self.runs {
            set("runs", v.to_string())?;
        }
        if let Some(v) = self.epochs {
            set("epochs", v.to_string())?;
        }
        if let Some(v) = self.latent_dim {
            set("latent_dim", v.to_string())?;
        }
        if let Some(v) = self.ppr_k {
            set("ppr.k", v.to_string())?;
        }
        if let Some(v) = self.ppr_lambda {
            set("ppr.lambda", v.to_string())?;
        }
        if let Some(v) = self.ppr_epsilon {
            set("ppr.epsilon", v.to_string())?;
        }
        if self.no_ppr {
            set("ppr.enabled", "false".into())?;
        }
        if self.triples {
            set("triples.enabled", "true".into())?;
        }
        if let Some(f) = &self.fusion {
            set("fusion", f.clone())?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {kv:?}")))?;
            set(k, v.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }
}

fn print_rows(rows: &[MetricsRow]) {
    for r in rows.iter().filter(|r| r.seed == "mean") {
        println!(
            "{:<12} ratio={:<4} {:<16} accuracy={:6.2} f1={:6.2}",
            r.dataset,
            r.ratio,
            r.variant,
            100.0 * r.accuracy,
            100.0 * r.f1
        );
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_outputs(out: &Path, cfg: &ExperimentConfig, report: &RunReport) -> Result<(), Error> {
    ensure_dir(out)?;
    append_metrics(&out.join("metrics.csv"), &report.rows)?;
    write_trace(&out.join("trace.csv"), &report.trace)?;
    let features = report.params.projection.clone().map(|p| p.cols());
    let (nu, no) = match &report.params.inputs {
        Some([u, o]) => (u.rows(), o.rows()),
        None => (0, 0),
    };
    save_checkpoint(
        &out.join("model.ckpt"),
        &Checkpoint {
            model: cfg.model(),
            feature_shapes: [(nu, features[0]), (no, features[1])],
            params: report.params.clone(),
        },
    )
}

/// Merges the fields of a JSON object into `base`.
fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: T, patch: Option<&str>) -> Result<T, Error> {
    let Some(patch) = patch else { return Ok(base) };
    let bad = |e: serde_json::Error| Error::Config(format!("fixture spec: {e}"));
    let patch: serde_json::Map<String, serde_json::Value> = serde_json::from_str(patch).map_err(bad)?;
    let mut value = serde_json::to_value(base).map_err(bad)?;
    let obj = value.as_object_mut().expect("fixture specs are structs");
    for (k, v) in patch {
        if !obj.contains_key(&k) {
            return Err(Error::Config(format!("fixture spec: unknown field {k:?}")));
        }
        obj.insert(k, v);
    }
    serde_json::from_value(value).map_err(bad)
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let report = run(&cfg, "full", args.exec())?;
            write_outputs(&args.out, &cfg, &report)?;
            print_rows(&report.rows);
        }
        Command::Ablate { run: args, variant } => {
            let cfg = args.config()?;
            let variants: Vec<Variant> = if variant.eq_ignore_ascii_case("all") {
                std::iter::once(Variant::Full)
                    .chain(Variant::ABLATIONS.into_iter().filter(|v| v.apply(&cfg).is_ok()))
                    .collect()
            } else {
                vec![Variant::parse(&variant)?]
            };
            ensure_dir(&args.out)?;
            for v in variants {
                let report = ablate(&cfg, v, args.exec())?;
                append_metrics(&args.out.join("metrics.csv"), &report.rows)?;
                print_rows(&report.rows);
            }
        }
        Command::Sweep {
            run: args,
            param,
            values,
        } => {
            let cfg = args.config()?;
            let rows = sweep(&cfg, SweepParam::parse(&param)?, &values, args.exec())?;
            ensure_dir(&args.out)?;
            append_metrics(&args.out.join("metrics.csv"), &rows)?;
            print_rows(&rows);
        }
        Command::Gradcheck { tolerance, seed } => {
            let mut failed = false;
            for (label, cfg) in [
                (
                    "gate",
                    ModelConfig {
                        latent_dim: 4,
                        ..ModelConfig::default()
                    },
                ),
                (
                    "concat",
                    ModelConfig {
                        latent_dim: 4,
                        fusion: Fusion::Concat,
                        ..ModelConfig::default()
                    },
                ),
                (
                    "learned-inputs",
                    ModelConfig {
                        latent_dim: 4,
                        learn_inputs: true,
                        ..ModelConfig::default()
                    },
                ),
            ] {
                let (inputs, params, samples) = gradcheck_fixture(&cfg, seed);
                let report = grad_check(&inputs, &params, &samples, tolerance)?;
                for (name, err) in &report.errors {
                    println!("{label:<15} {name:<36} {err:.3e}");
                }
                println!("{label:<15} max relative error {:.3e}", report.max_error());
                failed |= !report.passed();
            }
            if failed {
                return Err(Error::NonFinite(format!(
                    "gradient check exceeded tolerance {tolerance}"
                )));
            }
            println!("gradient check passed");
        }
        Command::Fixtures {
            kind,
            out,
            seed,
            small,
            spec,
        } => {
            match kind {
                FixtureKind::Siot => {
                    let base = if small {
                        SiotFixture::small()
                    } else {
                        SiotFixture::default()
                    };
                    let spec = overlay(SiotFixture { seed, ..base }, spec.as_deref())?;
                    write_siot_fixture(&out, &spec)?;
                }
                FixtureKind::Filmtrust => {
                    let spec = overlay(
                        FilmTrustFixture {
                            seed,
                            ..FilmTrustFixture::default()
                        },
                        spec.as_deref(),
                    )?;
                    write_filmtrust_fixture(&out, &spec)?;
                }
            }
            info!("fixture written to {}", out.display());
            println!("{}", out.display());
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
