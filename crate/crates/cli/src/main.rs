use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsmg::experiment::{compare_smoothers, convergence_study, run_experiment};
use rsmg_cli::{base_config, preset_table, CliError, Result, Settings};

#[derive(Parser)]
#[command(name = "rsmg", version, about = "Regime-switching American put experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write its result bundle.
    Run(Overrides),
    /// Refinement ladder halving h (and quartering k); writes roc.csv.
    ConvergenceStudy {
        #[command(flatten)]
        overrides: Overrides,
        /// Number of grids in the ladder.
        #[arg(long, default_value_t = 4)]
        grids: usize,
    },
    /// Plain Gauss-Seidel against the configured M-cycle; writes smoothers.csv.
    CompareSmoothers(Overrides),
    /// Print the built-in models.
    PresetList,
}

#[derive(Args)]
struct Overrides {
    /// Flat key = value manifest, applied before the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    levels: Option<usize>,
    /// Inner sweep factor of the coarse schedule.
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    nu1: Option<usize>,
    #[arg(long)]
    nu2: Option<usize>,
    #[arg(long)]
    fmg: Option<bool>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    xmax: Option<f64>,
    /// Comma-separated spot prices.
    #[arg(long)]
    spots: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings, same keys as the manifest.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn settings(&self) -> Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::parse(&std::fs::read_to_string(p)?)?,
            None => Settings::default(),
        };
        let mut flags = Settings::default();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Syntax { line: 0, msg: format!("--set expects KEY=VALUE, got '{kv}'") })?;
            flags.set(k.trim(), v.trim())?;
        }
        let pairs: [(&str, Option<String>); 11] = [
            ("preset", self.preset.clone()),
            ("h", self.h.map(|v| v.to_string())),
            ("levels", self.levels.map(|v| v.to_string())),
            ("c", self.c.map(|v| v.to_string())),
            ("nu1", self.nu1.map(|v| v.to_string())),
            ("nu2", self.nu2.map(|v| v.to_string())),
            ("fmg", self.fmg.map(|v| v.to_string())),
            ("tol", self.tol.map(|v| v.to_string())),
            ("xmax", self.xmax.map(|v| v.to_string())),
            ("spots", self.spots.clone()),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, &v)?;
            }
        }
        s.merge(&flags);
        Ok(s)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => {
            let config = o.settings()?.apply(base_config(false))?;
            let outcome = run_experiment(&config)?;
            let r = &outcome.report;
            println!(
                "M={} N={} converged={} max_iterations={} rho={} seconds={:.2}",
                r.m,
                r.steps,
                r.converged,
                r.global_max_iterations,
                r.final_rho.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                r.wall_seconds
            );
            for q in &outcome.quotes {
                println!("S={} regime={} price={:.4}", q.spot, q.regime + 1, q.price);
            }
            println!("bundle written to {}", config.out.display());
            if let Some(e) = &r.error {
                eprintln!("run stopped early: {e}");
                return Err(CliError::Core(rsmg::Error::Invalid(e.clone())));
            }
        }
        Command::ConvergenceStudy { overrides, grids } => {
            let config = overrides.settings()?.apply(base_config(true))?;
            let ladder = config.ladder(grids)?;
            let report = convergence_study(&ladder, &config.out)?;
            for (i, e) in report.errors.iter().enumerate() {
                let rate = report.rates.get(i).map(|r| format!("{r:.2}")).unwrap_or_default();
                println!("h={} k={:e} error={e:.3e} roc={rate}", report.h[i], report.k[i]);
            }
            println!("roc.csv written to {}", config.out.display());
        }
        Command::CompareSmoothers(o) => {
            let config = o.settings()?.apply(base_config(false))?;
            for r in compare_smoothers(&config)? {
                println!(
                    "{:<13} q={} max_iterations={} converged={} seconds={:.2}",
                    r.label, r.levels, r.global_max_iterations, r.converged, r.wall_seconds
                );
            }
        }
        Command::PresetList => print!("{}", preset_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
