use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use homlat_core::corrector::{tail_bound_audit, TailAuditConfig};
use homlat_core::mass::MassModel;
use homlat_lab::cache::load_or_compute;
use homlat_lab::config::ExperimentConfig;
use homlat_lab::csv::read_series;
use homlat_lab::runner::{load_config_dir, run_sweep, RunOptions, RunOutcome};
use homlat_lab::table::{render_markdown, table_row};

#[derive(Parser)]
#[command(name = "homlat", version, about = "Random-mass lattice homogenization experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory for CSV files, snapshots and the green cache.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Green cache directory (default: <out>/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Run even when the projected cost exceeds the config budget.
    #[arg(long)]
    override_budget: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every config of a directory and print the rate table.
    Table1 {
        #[arg(long, default_value = "configs/table1")]
        configs: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the rate table of existing CSV files.
    Table {
        csv: Vec<PathBuf>,
    },
    /// Compute (or load) a green table and report its diagnostics.
    Green {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        radius: usize,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long, default_value = "results/cache")]
        cache: PathBuf,
    },
    /// Monte Carlo audit of the corrector tail and growth bounds.
    CorrectorAudit {
        /// Mass model as JSON.
        #[arg(long, default_value = r#"{"kind":"iid_two_point","low":0.5,"high":1.5}"#)]
        model: String,
        #[arg(long, default_value_t = 500)]
        realizations: usize,
        #[arg(long, default_value = "results/cache")]
        cache: PathBuf,
    },
    /// Run a config with the coarse-graining metrics switched on.
    CoarseGrain {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn options(c: &Common) -> RunOptions {
    RunOptions { out_dir: c.out.clone(), cache_dir: c.cache.clone(), override_budget: c.override_budget, quiet: false }
}

fn report(out: &RunOutcome) -> bool {
    println!("{}", out.csv.display());
    for c in &out.checks {
        println!("  [{}] {}: {:.3e} (limit {:.1e})", if c.pass { "ok" } else { "FAIL" }, c.name, c.value, c.limit);
    }
    out.passed()
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, common } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(report(&run_sweep(&cfg, &options(&common))?))
        }
        Command::CoarseGrain { config, common } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.metrics.coarse_grain = true;
            cfg.name = format!("{}_coarse", cfg.name);
            let out = run_sweep(&cfg, &options(&common))?;
            for m in ["cg_u", "cg_ut"] {
                for (e, v) in out.series.medians(m) {
                    println!("  {m} ε = {e}: {v:.4e}");
                }
            }
            Ok(report(&out))
        }
        Command::Table1 { configs, common } => {
            let mut ok = true;
            let mut rows = Vec::new();
            for cfg in load_config_dir(&configs)? {
                let out = run_sweep(&cfg, &options(&common))?;
                ok &= report(&out);
                rows.push(table_row(&out.series)?);
            }
            println!("\n{}", render_markdown(&rows));
            Ok(ok)
        }
        Command::Table { csv } => {
            let mut rows = Vec::new();
            for p in &csv {
                rows.push(table_row(&read_series(p)?.series).with_context(|| p.display().to_string())?);
            }
            println!("{}", render_markdown(&rows));
            Ok(true)
        }
        Command::Green { dim, radius, tolerance, cache } => {
            let (g, src) = load_or_compute(&cache, dim, radius, tolerance)?;
            println!("radius {} ({src:?}), method {}", g.radius(), g.method().name());
            println!("max |Δφ - δ| = {:.3e}", g.residual().max());
            if dim == 2 {
                for k in [1, 2, 4, 8, 16, 32] {
                    if k <= radius {
                        println!("φ({k}, 0) = {:.15}", g.value([k as i64, 0]));
                    }
                }
            }
            Ok(true)
        }
        Command::CorrectorAudit { model, realizations, cache } => {
            let model: MassModel = serde_json::from_str(&model).context("parsing --model")?;
            let cfg = TailAuditConfig { realizations, ..TailAuditConfig::default() };
            let r_max = cfg.radii.iter().fold(cfg.tail_radius, |m, &r| m.max(r)).floor() as usize;
            let (g, _) = load_or_compute(&cache, 2, 2 * r_max + 1, 1e-10)?;
            let audit = tail_bound_audit(&model, &g, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&audit)?);
            Ok(audit.pass)
        }
    }
}
