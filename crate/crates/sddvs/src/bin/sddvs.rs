//! Command-line entry point for the experiment drivers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sddvs::driver::{
    parse_m_range, run_experiment, run_sweep, DriverError, ExampleId, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "sddvs", about = "Separated-representation domain decomposition for stochastic PDEs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// which built-in experiment to run
    example: ExampleId,
    /// JSON config file; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// use the published (slow) resolutions instead of the desk-scale ones
    #[arg(long)]
    paper_scale: bool,
    /// worker threads for the sample sweeps (0 = machine default)
    #[arg(long)]
    workers: Option<usize>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the surrogate offline and run the online study
    Run(CommonArgs),
    /// Sweep the interface truncation level M and emit eps_vs_M.csv
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// inclusive truncation range, e.g. 1..20
        #[arg(long, default_value = "1..20")]
        m: String,
    },
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, DriverError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| DriverError::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default_for(common.example, common.paper_scale),
    };
    if cfg.example != common.example {
        return Err(DriverError::Config(format!(
            "config file is for {:?} but the command names {:?}",
            cfg.example, common.example
        )));
    }
    if common.config.is_some() && common.paper_scale {
        return Err(DriverError::Config(
            "--paper-scale only applies to built-in defaults; set the resolution in the config file".into(),
        ));
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), DriverError> {
    match cli.command {
        Command::Run(common) => {
            let cfg = load_config(&common)?;
            let report = run_experiment(&cfg, &common.out)?;
            if let Some(e) = &report.interface_error {
                println!(
                    "interface error: mean {:.3e}, max {:.3e} over {} samples",
                    e.mean_relative, e.max_relative, e.n_samples
                );
            }
            println!(
                "terms: m_S={} (bound {}), m_F={} (bound {}), M={}",
                report.m_s, report.m_s_bound, report.m_f, report.m_f_bound, report.m
            );
            if let Some(r) = report.timing.speed_ratio() {
                println!("online cost per sample: {:.3}x the reference solve", r);
            }
            println!("wrote {} files to {}", report.files.len() + 1, common.out.display());
        }
        Command::Sweep { common, m } => {
            let cfg = load_config(&common)?;
            let m_values = parse_m_range(&m)?;
            let eps = run_sweep(&cfg, &m_values, &common.out)?;
            for (m, e) in &eps {
                println!("M={m}: epsilon={e:.3e}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
