use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;

use bulbnet::datagen::{build_test_suite, generate_series, write_csv, OdorSeriesSpec};
use bulbnet::experiment::{emit_report, read_report, run_experiment, ExperimentConfig};
use bulbnet::fetch::{self, Manifest};
use bulbnet::ingest::read_csv;
use bulbnet::model::Model;
use bulbnet::Error;

#[derive(Parser)]
#[command(name = "bulbnet", version, about = "Spiking olfactory-bulb network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download and verify datasets into the cache ($BULBNET_CACHE).
    Fetch {
        /// Dataset names; all when omitted.
        names: Vec<String>,
    },
    /// Run an experiment config and write report.json and report.csv.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds simulated concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train one network and save a checkpoint.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// CSV of training samples, one per class, in training order.
        /// Defaults to the config's synthetic odor series.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Classify every sample of a CSV with a checkpoint.
    Test { checkpoint: PathBuf, data: PathBuf },
    /// Print the summary of a report directory.
    Report { dir: PathBuf },
    /// Write the config's synthetic training odors and noisy test suite as CSV.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn series_spec(config: &ExperimentConfig) -> OdorSeriesSpec {
    OdorSeriesSpec {
        rng_seed: config.base_seed,
        ..config.task.series.clone()
    }
}

fn run(cli: Cli) -> bulbnet::Result<()> {
    match cli.command {
        Command::Fetch { names } => {
            let manifest = Manifest::builtin();
            let cache = fetch::cache_dir();
            let names = if names.is_empty() {
                manifest.datasets.iter().map(|d| d.name.clone()).collect()
            } else {
                names
            };
            for name in names {
                let dir = fetch::fetch(manifest.get(&name)?, &cache)?;
                println!("{name}\t{}", dir.display());
            }
        }
        Command::Run { config, out, jobs } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                config.output_dir = out;
            }
            let start = Instant::now();
            let report = run_experiment(&config, jobs)?;
            for path in emit_report(&report, &config.output_dir)? {
                println!("{}", path.display());
            }
            info!("finished in {:.1} s", start.elapsed().as_secs_f64());
        }
        Command::Train { config, out, data } => {
            let config = ExperimentConfig::load(&config)?;
            config.model.validate()?;
            let train = match data {
                Some(path) => read_csv(&path)?,
                None => generate_series(&series_spec(&config))?,
            };
            let reference: Vec<&[f64]> = train.iter().map(|s| s.values.as_slice()).collect();
            let mut model = Model::new(config.model.with_seed(config.base_seed), &reference)?;
            for s in &train {
                model.train(&s.values, &s.label)?;
                info!("trained {}", s.label);
            }
            model.save(&out)?;
            println!("{}", out.display());
        }
        Command::Test { checkpoint, data } => {
            let model = Model::load(&checkpoint)?;
            let samples = read_csv(&data)?;
            if samples.is_empty() {
                return Err(Error::Empty("test data"));
            }
            println!("label,predicted,similarity");
            let mut correct = 0;
            for s in &samples {
                let p = model.predict(&s.values)?;
                correct += usize::from(p.label == s.label);
                println!("{},{},{}", s.label, p.label, p.similarity);
            }
            eprintln!("accuracy {:.2}% ({correct}/{})", 100.0 * correct as f64 / samples.len() as f64, samples.len());
        }
        Command::Report { dir } => {
            let report = read_report(&dir)?;
            println!("{} {:?} v{} config {}", report.name, report.kind, report.library_version, report.config_hash);
            println!("{:<40} {:<24} {:>3} {:>10} {:>10}", "group", "metric", "n", "mean", "std");
            for s in &report.summary {
                println!("{:<40} {:<24} {:>3} {:>10.4} {:>10.4}", s.group, s.metric, s.n, s.mean, s.std);
            }
        }
        Command::Generate { config, out } => {
            let config = ExperimentConfig::load(&config)?;
            let train = generate_series(&series_spec(&config))?;
            let noise = bulbnet::datagen::NoiseSpec {
                rng_seed: config.base_seed.wrapping_add(100),
                ..config.task.noise.clone()
            };
            let test = build_test_suite(&train, Some(&noise), config.task.n_noisy)?;
            std::fs::create_dir_all(&out)?;
            write_csv(&out.join("train.csv"), &train)?;
            write_csv(&out.join("test.csv"), &test)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
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
