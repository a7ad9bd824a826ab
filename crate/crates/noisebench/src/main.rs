//! Command-line front door: train, perturb, sweep, measure, report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisebench::config::{load_config, ExperimentConfig};
use noisebench::data::save_dataset;
use noisebench::error::{Error, Result};
use noisebench::gradnoise::{check_bound, GradNoiseConfig, Sampling};
use noisebench::noise::{noise_sweep, NoiseSpec};
use noisebench::report::{emit_report, format_sig, load_summary, SweepReport, SweepRow};
use noisebench::rng::RngStream;
use noisebench::sweep::{sweep_learning_rates, sweep_optimizers};
use noisebench::train::run_training;

#[derive(Parser)]
#[command(
    name = "noisebench",
    version,
    about = "Train small classifiers and measure how weight noise degrades them"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment description, a JSON file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| Error::Config("--config is required for this command".to_string()))?;
        let mut config = load_config(path)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per the config; save weights and history.
    Train(CommonArgs),
    /// Perturb saved weights at each noise level and tabulate accuracy.
    NoiseEval {
        #[command(flatten)]
        common: CommonArgs,
        /// Trained weight file to evaluate.
        #[arg(long, value_name = "WEIGHTS")]
        model: PathBuf,
        /// Noise form factors to test, in percent.
        #[arg(long, value_delimiter = ',', value_name = "PCT,...")]
        etas: Option<Vec<f64>>,
        /// Noisy trials per nonzero noise level.
        #[arg(long, value_name = "N")]
        trials: Option<usize>,
    },
    /// Train at every configured learning rate; report noise response.
    SweepLr(CommonArgs),
    /// Train under every optimizer kind; report noise response.
    SweepOpt(CommonArgs),
    /// Measure minibatch gradient noise power against its ceiling.
    GradNoise {
        #[command(flatten)]
        common: CommonArgs,
        /// Examples per minibatch; defaults to the config's batch_size.
        #[arg(long, value_name = "N")]
        batch_size: Option<usize>,
        /// Minibatches drawn for the empirical average.
        #[arg(long, default_value_t = 1000, value_name = "N")]
        samples: usize,
        /// Step size; defaults to the config's first learning rate.
        #[arg(long, value_name = "F64")]
        alpha: Option<f64>,
        /// Minibatch sampling scheme.
        #[arg(long, default_value = "with", value_parser = parse_sampling)]
        sampling: Sampling,
    },
    /// Materialize the configured dataset into one portable file.
    GenData(CommonArgs),
    /// Rebuild results.csv from an existing summary.json.
    Report(CommonArgs),
}

fn parse_sampling(s: &str) -> std::result::Result<Sampling, String> {
    Sampling::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(common) => cmd_train(&common),
        Command::NoiseEval { common, model, etas, trials } => {
            cmd_noise_eval(&common, &model, etas, trials)
        }
        Command::SweepLr(common) => cmd_sweep(&common, sweep_learning_rates),
        Command::SweepOpt(common) => cmd_sweep(&common, sweep_optimizers),
        Command::GradNoise { common, batch_size, samples, alpha, sampling } => {
            cmd_grad_noise(&common, batch_size, samples, alpha, sampling)
        }
        Command::GenData(common) => cmd_gen_data(&common),
        Command::Report(common) => cmd_report(&common),
    }
}

fn cmd_train(common: &CommonArgs) -> Result<()> {
    let config = common.load()?;
    let (_, history) = run_training(&config)?;
    let stem = format!("{}_{}_seed{}", config.model.name(), config.dataset.name(), config.seed);
    println!(
        "trained {} on {} for {} epochs in {}s",
        config.model.name(),
        config.dataset.name(),
        history.train_loss.len(),
        format_sig(history.wall_time_secs),
    );
    if let Some(acc) = history.final_test_acc() {
        println!("final test accuracy {}", format_sig(acc));
    }
    println!("wrote {}", config.output_dir.join(format!("{stem}.nrwt")).display());
    println!("wrote {}", config.output_dir.join(format!("{stem}_history.json")).display());
    Ok(())
}

fn cmd_noise_eval(
    common: &CommonArgs,
    model: &Path,
    etas: Option<Vec<f64>>,
    trials: Option<usize>,
) -> Result<()> {
    let config = common.load()?;
    config.validate()?;
    let (_, test_set) = config.dataset.load::<f32>(config.seed)?;
    let master = RngStream::new(config.seed);
    let mut net = config.model.build::<f32>(
        test_set.example_shape(),
        test_set.class_count(),
        &master.substream_named("init"),
    )?;
    net.load_weights(model)?;

    let etas_percent = etas.unwrap_or_else(|| config.noise.etas_percent.clone());
    let fractions: Vec<f64> = etas_percent.iter().map(|e| e / 100.0).collect();
    let mut spec = NoiseSpec::new(
        0.0,
        trials.unwrap_or(config.noise.trials),
        master.substream_named("noise-eval"),
    )?;
    spec.include_biases = config.noise.include_biases;
    spec.include_batchnorm = config.noise.include_batchnorm;

    let sweep = noise_sweep(&net, &test_set, &fractions, &spec)?;
    println!("baseline accuracy {}", format_sig(sweep.baseline_acc));
    println!("{:>8} {:>7} {:>9} {:>9} {:>11}", "eta_pct", "trials", "mean_acc", "std_acc", "normalized");
    for (point, normalized) in sweep.points.iter().zip(&sweep.normalized) {
        println!(
            "{:>8} {:>7} {:>9} {:>9} {:>11}",
            format_sig(point.eta * 100.0),
            point.per_trial_acc.len(),
            format_sig(point.mean_acc),
            format_sig(point.std_acc),
            format_sig(*normalized),
        );
    }
    if let Some(avg) = sweep.avg_normalized {
        println!("average normalized accuracy {}", format_sig(avg));
    }

    let row = SweepRow::from_sweep(
        config.model.name(),
        config.dataset.name(),
        config.learning_rates[0],
        config.optimizer.kind.clone(),
        config.seed,
        &sweep,
    );
    let (csv, json) = emit_report(&SweepReport { rows: vec![row] }, &config.output_dir)?;
    println!("wrote {}", csv.display());
    println!("wrote {}", json.display());
    Ok(())
}

fn cmd_sweep(
    common: &CommonArgs,
    sweep: fn(&ExperimentConfig) -> Result<SweepReport>,
) -> Result<()> {
    let config = common.load()?;
    let report = sweep(&config)?;
    for row in &report.rows {
        let summary = match row.avg_normalized {
            Some(avg) => format!(", avg normalized {}", format_sig(avg)),
            None => String::new(),
        };
        println!(
            "alpha {} {}: baseline {}{summary}",
            format_sig(row.learning_rate),
            row.optimizer,
            format_sig(row.baseline_acc),
        );
    }
    println!("wrote {}", config.output_dir.join("results.csv").display());
    println!("wrote {}", config.output_dir.join("summary.json").display());
    Ok(())
}

fn cmd_grad_noise(
    common: &CommonArgs,
    batch_size: Option<usize>,
    samples: usize,
    alpha: Option<f64>,
    sampling: Sampling,
) -> Result<()> {
    let config = common.load()?;
    config.validate()?;
    let (train_set, _) = config.dataset.load::<f32>(config.seed)?;
    let master = RngStream::new(config.seed);
    let net = config.model.build::<f32>(
        train_set.example_shape(),
        train_set.class_count(),
        &master.substream_named("init"),
    )?;
    let gn = GradNoiseConfig {
        alpha: alpha.unwrap_or(config.learning_rates[0]),
        batch_size: batch_size.unwrap_or(config.batch_size),
        sample_count: samples,
        sampling,
        rng: master.substream_named("gradnoise"),
    };
    let report = check_bound(&net, &train_set, &gn)?;

    println!(
        "{} examples, batch {}, {} draws, {}",
        train_set.len(),
        gn.batch_size,
        gn.sample_count,
        gn.sampling.name(),
    );
    println!("full gradient norm    {}", format_sig(report.full_grad_norm));
    println!("deviation constant C  {}", format_sig(report.c));
    println!("empirical noise power {}", format_sig(report.empirical_noise_power));
    println!("theoretical ceiling   {}", format_sig(report.theoretical_bound));
    println!("bound satisfied       {}", report.bound_satisfied);
    println!("relative gap          {}", format_sig(report.relative_gap));

    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let path = config.output_dir.join("gradnoise.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_gen_data(common: &CommonArgs) -> Result<()> {
    let config = common.load()?;
    let (train_set, test_set) = config.dataset.load::<f32>(config.seed)?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let path = config.output_dir.join("dataset.nrwt");
    save_dataset(&path, &train_set, &test_set)?;
    println!(
        "{}: {} train / {} test examples, {} classes",
        config.dataset.name(),
        train_set.len(),
        test_set.len(),
        train_set.class_count(),
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(common: &CommonArgs) -> Result<()> {
    let dir = match (&common.out, &common.config) {
        (Some(out), _) => out.clone(),
        (None, Some(_)) => common.load()?.output_dir,
        (None, None) => {
            return Err(Error::Config("report needs --out or --config".to_string()));
        }
    };
    let report = load_summary(&dir.join("summary.json"))?;
    let (csv, json) = emit_report(&report, &dir)?;
    println!("rebuilt {} from {}", csv.display(), json.display());
    Ok(())
}
