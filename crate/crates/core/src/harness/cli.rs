use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::{execute, preset, HarnessError, RunConfig, SummaryReport};

#[derive(Debug, Parser)]
#[command(name = "edgebatch", version, about = "Adaptive micro-batch interval simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory [default: $EDGEBATCH_OUT, output.dir, or ./out]
        #[arg(long, env = "EDGEBATCH_OUT")]
        out: Option<PathBuf>,
    },
    /// Run one of the shipped experiment presets.
    Preset {
        /// exp1, exp2, exp3, day or day-vanilla
        name: String,
        /// Force the traffic-change input to zero.
        #[arg(long)]
        disable_prediction: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: $EDGEBATCH_OUT, or ./out/<name>]
        #[arg(long, env = "EDGEBATCH_OUT")]
        out: Option<PathBuf>,
    },
    /// Parse and check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn print_summary(s: &SummaryReport, out: &Path) {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let n = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
    println!("wrote {}", out.display());
    println!("  mode                    {}", s.mode);
    println!("  batches                 {}", s.batches);
    println!("  records processed       {}", s.records_processed);
    println!("  prediction error mean   {}", f(s.prediction_error_mean));
    println!("  prediction error max    {}", f(s.prediction_error_max));
    println!("  convergence time ms     {}", n(s.convergence_time_ms));
    println!("  converged interval ms   {}", n(s.converged_interval_ms));
    println!("  steady S mean           {}", f(s.steady_workload_mean));
    println!("  time-averaged S         {}", f(s.time_avg_workload));
    println!("  max S                   {}", f(s.max_workload));
    println!("  total delay mean ms     {}", f(s.total_delay_mean_ms));
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let out = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            log::info!("running {} into {}", config.display(), out.display());
            let result = execute(&cfg, &out)?;
            print_summary(&result.summary, &out);
        }
        Command::Preset { name, disable_prediction, seed, out } => {
            let mut cfg = preset(&name)?;
            cfg.disable_prediction |= disable_prediction;
            if let Some(seed) = seed {
                cfg.engine.seed = seed;
            }
            cfg.apply_flags();
            let out = out.unwrap_or_else(|| Path::new("out").join(&name));
            log::info!("running preset {name} into {}", out.display());
            let result = execute(&cfg, &out)?;
            print_summary(&result.summary, &out);
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let (engine, _) = cfg.resolve()?;
            println!(
                "{}: ok ({} mode, {} ms, initial interval {} ms)",
                config.display(),
                engine.mode,
                engine.duration,
                engine.initial_batch_interval
            );
        }
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
