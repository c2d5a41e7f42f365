//! Loss sweeps of the conference key rate from the command line.
//!
//! Exit status: 0 when every point was evaluated, 2 when some points
//! failed (their rows say why), 1 on configuration or I/O errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cka_core::keyrate::YieldMode;
use cka_core::sweep::{emit, output_path_for, render, run_sweep, OutputFormat, SweepConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cka-sweep",
    version,
    about = "Optimized conference key rate versus channel loss"
)]
struct Cli {
    /// Flat key = value configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    parties: Option<usize>,
    /// Relay layer count s (2^s detectors).
    #[arg(long)]
    modes_exp: Option<u32>,
    /// First party-to-party loss in dB.
    #[arg(long)]
    loss_start: Option<f64>,
    /// Last party-to-party loss in dB (included).
    #[arg(long)]
    loss_stop: Option<f64>,
    #[arg(long)]
    loss_step: Option<f64>,
    /// Dark-count probability; repeat or comma-separate for several sweeps.
    #[arg(long, value_delimiter = ',')]
    dark_count: Vec<f64>,
    /// Misalignment fraction.
    #[arg(long)]
    misalignment: Option<f64>,
    /// exact-yields or two-decoy.
    #[arg(long)]
    mode: Option<String>,
    /// Photon-number cutoff of the phase-error bound (even).
    #[arg(long)]
    cutoff: Option<u32>,
    #[arg(long)]
    decoy_high: Option<f64>,
    #[arg(long)]
    decoy_low: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; with several dark counts, one file per value named
    /// <stem>_pd<value>.<ext>. Standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (0: one per core). Does not affect the results.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn build_config(cli: &Cli) -> cka_core::Result<SweepConfig> {
    let mut cfg = match &cli.config {
        Some(path) => SweepConfig::from_file(path)?,
        None => SweepConfig::default(),
    };
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = cli.$field.clone() {
                cfg.$field = v.into();
            }
        };
    }
    set!(parties);
    set!(loss_start);
    set!(loss_stop);
    set!(loss_step);
    set!(misalignment);
    set!(cutoff);
    set!(decoy_high);
    set!(decoy_low);
    set!(seed);
    set!(out);
    if let Some(s) = cli.modes_exp {
        cfg.modes_exp = Some(s);
    }
    if !cli.dark_count.is_empty() {
        cfg.dark_counts = cli.dark_count.clone();
    }
    if let Some(mode) = &cli.mode {
        cfg.mode = mode
            .parse::<YieldMode>()
            .map_err(|e| cka_core::Error::Config(e.to_string()))?;
    }
    if let Some(format) = &cli.format {
        cfg.format = format.parse::<OutputFormat>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> cka_core::Result<bool> {
    let cfg = build_config(cli)?;
    let results = run_sweep(&cfg, cli.workers)?;
    match &cfg.out {
        Some(base) => {
            for r in &results {
                let path = if results.len() == 1 {
                    base.clone()
                } else {
                    output_path_for(base, r.provenance.dark_count)
                };
                emit(r, cfg.format, &path)?;
                log::info!("wrote {}", path.display());
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for r in &results {
                let text = render(r, cfg.format)?;
                stdout
                    .write_all(text.as_bytes())
                    .map_err(|source| cka_core::Error::Io {
                        path: "<stdout>".into(),
                        source,
                    })?;
            }
        }
    }
    Ok(results.iter().any(|r| r.has_failures()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage_error { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("some loss points failed; see the status column");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
