use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use growfem::config::{load_config, ConfigError, RunConfig};
use growfem::{driver, Demo};

#[derive(Parser)]
#[command(name = "growfem", version, about = "Adaptive finite elements for reaction-diffusion on evolving domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-dependent simulation with CSV diagnostics and optional VTK snapshots.
    Run {
        config: PathBuf,
        /// Output directory; defaults to `output.directory` of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        t_final: Option<f64>,
    },
    /// Manufactured convergence study; writes the EOC table.
    BenchEoc {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Loads the configuration and checks it without running or writing anything.
    Validate { config: PathBuf },
    /// Runs one of the shipped scenarios.
    Demo {
        #[arg(value_enum)]
        which: Demo,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop early at this time.
        #[arg(long)]
        t_final: Option<f64>,
        /// Print the configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
}

enum Failure {
    Config(ConfigError),
    Run(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<ConfigError>() {
            Ok(c) => Failure::Config(c),
            Err(e) => Failure::Run(e),
        }
    }
}

fn with_t_final(cfg: RunConfig, t_final: Option<f64>) -> Result<RunConfig, ConfigError> {
    match t_final {
        Some(t) => cfg.with_t_final(t),
        None => Ok(cfg),
    }
}

fn simulate(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let summary = driver::simulate(cfg, Some(out), &mut |_| {})?;
    let capped = summary.records.iter().filter(|r| r.cap_hit).count();
    if let Some(last) = summary.records.last() {
        println!(
            "{} steps to t = {}: {} dofs, eta = {:e}",
            last.step, last.t, last.dofs, last.eta_global
        );
    }
    if capped > 0 {
        println!("{capped} steps accepted on an adaptation cap");
    }
    for p in &summary.written {
        log::info!("wrote {}", p.display());
    }
    println!("output in {}", out.display());
    Ok(())
}

fn bench(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let rows = driver::bench(cfg, Some(out))?;
    println!("{:>10} {:>12} {:>8} {:>12} {:>8} {:>12} {:>8} {:>12}", "h", "eta", "eoc", "errL2", "eoc", "errH1", "eoc", "eff");
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    for r in &rows {
        println!(
            "{:>10.4e} {:>12.4e} {:>8} {:>12.4e} {:>8} {:>12.4e} {:>8} {:>12.4e}",
            r.h,
            r.eta,
            f(r.eoc_eta),
            r.err_l2,
            f(r.eoc_l2),
            r.err_h1,
            f(r.eoc_h1),
            r.effectivity
        );
    }
    println!("table in {}", out.join(driver::EOC_FILE).display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, t_final } => {
            let cfg = with_t_final(load_config(&config)?, t_final)?;
            let out = out.unwrap_or_else(|| cfg.output.directory.clone());
            simulate(&cfg, &out)?;
        }
        Command::BenchEoc { config, out } => {
            let cfg = load_config(&config)?;
            let out = out.unwrap_or_else(|| cfg.output.directory.clone());
            bench(&cfg, &out)?;
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            driver::dry_run(&cfg)?;
            println!("{}: ok", config.display());
        }
        Command::Demo {
            which,
            out,
            t_final,
            print_config,
        } => {
            if print_config {
                print!("{}", which.source());
                return Ok(());
            }
            let cfg = with_t_final(which.config()?, t_final)?;
            let out = out.unwrap_or_else(|| cfg.output.directory.clone());
            match which {
                Demo::Fig1 => bench(&cfg, &out)?,
                Demo::Fig2 | Demo::Fig4 => simulate(&cfg, &out)?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
