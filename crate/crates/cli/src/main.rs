use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poif_core::harness::commands::{cmd_evaluate, cmd_score, cmd_sweep, cmd_synth, cmd_train, TrainPaths};
use poif_core::harness::config::{RunConfig, SEED_ENV};
use poif_core::harness::experiment::SweepAxis;
use poif_core::scoring::Statistic;

/// Audio-visual person-of-interest verification on synthetic feature data.
#[derive(Parser, Debug)]
#[command(name = "poif", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed; falls back to the config file, then POIF_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on the count.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// False-alarm rate fixing the decision threshold.
    #[arg(long = "p-fa", global = true)]
    p_fa: Option<f64>,
    /// Weight of the joint audio-video loss term.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Similarity temperature.
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Index driving decisions: video, audio, av or fusion.
    #[arg(long, global = true)]
    statistic: Option<Statistic>,
    /// Any other configuration key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train, reference and test feature files.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the encoders on pristine segments.
    Train {
        #[arg(long)]
        features: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-step loss log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score test videos against their POI references.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-group AUC, accuracy and Pd for a scores file.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        /// Features file carrying the ground-truth flags (the test file).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC against test length, reference size or reference variety.
    Sweep {
        #[arg(long)]
        checkpoint: PathBuf,
        /// test_length, ref_size or ref_variety.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values, each at least 1.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    fn resolve(&self) -> poif_core::Result<RunConfig> {
        let mut overrides = Vec::new();
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| poif_core::Error::Config(format!("--set expects key=value, got `{item}`")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("workers", self.workers.map(|v| v.to_string())),
            ("p_fa", self.p_fa.map(|v| v.to_string())),
            ("lambda", self.lambda.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("statistic", self.statistic.map(|v| v.name().to_string())),
        ];
        overrides.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        let env = std::env::var(SEED_ENV).ok();
        RunConfig::resolve(self.config.as_deref(), &overrides, env.as_deref())
    }
}

fn run(common: &Common, command: Command) -> poif_core::Result<()> {
    match command {
        Command::Synth { out } => {
            let paths = cmd_synth(&common.resolve()?, &out)?;
            println!("{}\n{}\n{}", paths.train.display(), paths.reference.display(), paths.test.display());
        }
        Command::Train { features, out, log, resume } => {
            let paths = TrainPaths {
                features: &features,
                checkpoint: &out,
                log: log.as_deref(),
                resume_from: resume.as_deref(),
            };
            let ckpt = cmd_train(&common.resolve()?, &paths)?;
            match ckpt.final_loss {
                Some(loss) => println!("step {} loss {loss:.6}", ckpt.step()),
                None => println!("step {}", ckpt.step()),
            }
        }
        Command::Score { checkpoint, reference, test, out } => {
            let rows = cmd_score(&common.resolve()?, &checkpoint, &reference, &test, &out)?;
            let fakes = rows.iter().filter(|r| r.decision == poif_core::Decision::Fake).count();
            println!("{} videos scored, {fakes} flagged", rows.len());
        }
        Command::Evaluate { scores, labels, out } => {
            use poif_core::harness::experiment::Metric;
            let table = cmd_evaluate(&common.resolve()?, &scores, &labels, &out)?;
            for s in Statistic::ALL {
                let auc = table.average(s, Metric::Auc).map_or("undefined".into(), |v| format!("{:.1}", 100.0 * v));
                println!("{:>7} AVG AUC {auc}", s.name());
            }
        }
        Command::Sweep { checkpoint, axis, values, out } => {
            for r in cmd_sweep(&common.resolve()?, &checkpoint, axis, &values, &out)? {
                println!("{} {} {:.4}", r.x, r.class, r.auc);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.common, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
