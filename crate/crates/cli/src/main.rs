use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mwss::baselines::Method;
use mwss::harness::{self, HarnessConfig, SweepSpec};

#[derive(Parser)]
#[command(name = "mwss", version, about = "Weak social supervision experiments for fake news classification")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with [synth], [labeling], [train] and [experiment]
    /// sections; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Use the small desk-scale preset instead of the defaults.
    #[arg(long, global = true, conflicts_with = "config")]
    desk: bool,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory; defaults to `$MWSS_OUT/<command>` (or
    /// `mwss-out/<command>`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted weak-label noise.
    Synth,
    /// Apply the weak labeling functions and report their quality.
    Weaklabel {
        #[arg(long)]
        corpus: PathBuf,
        /// Fit thresholds on the clean training split instead of using the
        /// configured ones.
        #[arg(long)]
        fit: bool,
    },
    /// Train one method and evaluate it on the clean test split.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weak: PathBuf,
        #[arg(long, default_value = "mwss")]
        mode: Method,
    },
    /// Train every (method, clean ratio, seed) combination.
    Sweep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weak: PathBuf,
        /// Comma-separated clean ratios; the config's list when omitted.
        #[arg(long, value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Comma-separated seeds; the config's list when omitted.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated methods; the config's list when omitted.
        #[arg(long = "mode", value_delimiter = ',')]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Export LWN weight histograms of an MWSS checkpoint.
    Weights {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        weak: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Weaklabel { .. } => "weaklabel",
            Command::Train { .. } => "train",
            Command::Sweep { .. } => "sweep",
            Command::Weights { .. } => "weights",
        }
    }
}

fn or_default<T: Clone>(given: &[T], default: &[T]) -> Vec<T> {
    if given.is_empty() { default } else { given }.to_vec()
}

fn load_config(common: &Common) -> mwss::Result<HarnessConfig> {
    match (&common.config, common.desk) {
        (Some(path), _) => HarnessConfig::load(path),
        (None, true) => Ok(HarnessConfig::desk()),
        (None, false) => Ok(HarnessConfig::default()),
    }
}

fn execute(cli: &Cli, out: &Path) -> mwss::Result<()> {
    let config = load_config(&cli.common)?;
    let seed = cli.common.seed;
    match &cli.command {
        Command::Synth => {
            let s = harness::cmd_synth(&config, seed, out)?;
            println!(
                "wrote {} news ({} labeled), {} engagements, {} users to {}",
                s.counts.news,
                s.counts.labeled,
                s.counts.engagements,
                s.counts.users,
                out.display()
            );
        }
        Command::Weaklabel { corpus, fit } => {
            for r in harness::cmd_weaklabel(&config, seed, corpus, *fit, out)? {
                let acc = r.accuracy.map_or("n/a".into(), |a| format!("{a:.4}"));
                println!("{:<12} tau {:.3}  accuracy {acc}  coverage {:.3}", r.source.name(), r.threshold, r.coverage);
            }
        }
        Command::Train { corpus, weak, mode } => {
            let s = harness::cmd_train(&config, seed, corpus, weak, *mode, out)?;
            let t = &s.result.test;
            println!(
                "{mode}: test accuracy {:.4}  f1 {:.4}  best step {} of {}",
                t.accuracy, t.f1, s.result.outcome.best_step, s.result.outcome.steps
            );
        }
        Command::Sweep {
            corpus,
            weak,
            ratios,
            seeds,
            methods,
            jobs,
        } => {
            let e = &config.experiment;
            let spec = SweepSpec {
                ratios: or_default(ratios, &e.ratios),
                seeds: or_default(seeds, &e.seeds),
                methods: or_default(methods, &e.methods),
                jobs: *jobs,
            };
            let s = harness::cmd_sweep(&config, &spec, corpus, weak, out)?;
            for m in &s.means {
                println!(
                    "{:<9} ratio {:<6} runs {}  f1 {:.4}  accuracy {:.4}",
                    m.method.name(),
                    m.ratio,
                    m.runs,
                    m.f1.unwrap_or(f64::NAN),
                    m.accuracy.unwrap_or(f64::NAN)
                );
            }
            let skipped = s.rows.iter().filter(|r| r.status != "ok").count();
            if skipped > 0 {
                println!("{skipped} rows skipped (see sweep.csv)");
            }
        }
        Command::Weights { checkpoint, corpus, weak } => {
            for m in harness::cmd_weights(&config, seed, checkpoint, corpus, weak, out)?.means {
                println!("{:<12} n {:<5} mean ω {:.4}", m.source, m.instances, m.mean.unwrap_or(f64::NAN));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cli.common.out.clone().unwrap_or_else(|| harness::default_out_dir(cli.command.name()));
    match execute(&cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
