//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on usage, configuration or run errors
//! (including runs with failed folds), 2 when a property suite fails.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use fairshap_core::verify::{run_suite, Fault, Suite, SuiteReport};

use crate::config::ExperimentConfig;
use crate::csv_io::{write_log, write_phi, write_plan, write_text};
use crate::error::{HarnessError, Result};
use crate::experiment::{load_fold, run_experiment, run_sweep, ExperimentReport};
use crate::persist::encode_model;
use crate::report::{load_report, render_tables, write_report};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_SUITE_FAILED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "fairshap", version, about = "Shapley-guided fairness preprocessing experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration (INI, or a JSON report to replay).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the global seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to the configured one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// k-fold experiment over every configured method.
    Run(Common),
    /// Modification-count sweep plus the full experiment.
    Sweep(Common),
    /// Seeded property suites; `all` runs every suite.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Instance count; defaults per suite.
        #[arg(long)]
        instances: Option<usize>,
        /// Writes one JSON report per suite here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for symmetry with the other subcommands; suites are self-contained.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corrupts the efficiency check by this offset.
        #[arg(long, hide = true)]
        inject_efficiency_fault: Option<f64>,
    },
    /// Exports both matching plans of one fold's training rows.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Exports the Shapley matrix, modification log and baseline model of one fold.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        fold: usize,
    },
    /// Re-renders the CSV tables of a stored `report.json`.
    Report {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_ERROR,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    let out = cfg.output.clone();
    Ok((cfg, out))
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Run(common) => {
            let (cfg, out) = load_config(&common)?;
            finish_run(run_experiment(&cfg)?, &out)
        }
        Command::Sweep(common) => {
            let (cfg, out) = load_config(&common)?;
            finish_run(run_sweep(&cfg)?, &out)
        }
        Command::Verify {
            suite,
            seed,
            instances,
            out,
            config: _,
            inject_efficiency_fault,
        } => {
            let suites = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![Suite::parse(&suite)?]
            };
            let fault = inject_efficiency_fault.map_or(Fault::None, Fault::Efficiency);
            let mut ok = true;
            for s in suites {
                let report = run_suite(s, instances.unwrap_or(s.default_instances()), seed, fault);
                print_suite(&report);
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
                    let path = dir.join(format!("verify_{}.json", s.name()));
                    write_text(&path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
                }
                ok &= report.ok();
            }
            Ok(if ok { EXIT_OK } else { EXIT_SUITE_FAILED })
        }
        Command::Match { common, fold } => {
            let (cfg, out) = load_config(&common)?;
            let (_, ctx) = load_fold(&cfg, fold)?;
            let aug = ctx.augment(&cfg)?;
            create(&out)?;
            for g in 0..2 {
                let ids = |k: usize| -> Vec<usize> { aug.index[k].iter().map(|&r| ctx.fold.train[r]).collect() };
                let path = out.join(format!("plan_fold{fold}_group{g}.csv"));
                write_plan(&path, &aug.directions[g].plan, &ids(g), &ids(1 - g))?;
                println!("{}", path.display());
            }
            Ok(EXIT_OK)
        }
        Command::Explain { common, fold } => {
            let (cfg, out) = load_config(&common)?;
            let (_, ctx) = load_fold(&cfg, fold)?;
            let aug = ctx.augment(&cfg)?;
            create(&out)?;
            let names = ctx.layout.feature_names();
            for g in 0..2 {
                let ids: Vec<usize> = aug.index[g].iter().map(|&r| ctx.fold.train[r]).collect();
                let path = out.join(format!("phi_fold{fold}_group{g}.csv"));
                write_phi(&path, &aug.directions[g].attribution.phi, &names, &ids)?;
                println!("{}", path.display());
            }
            let path = out.join(format!("log_fold{fold}.csv"));
            write_log(&path, &aug.log, &names)?;
            println!("{}", path.display());
            let path = out.join(format!("model_fold{fold}.txt"));
            write_text(&path, &encode_model(&ctx.model, &cfg.model))?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        Command::Report { report, out } => {
            let parsed = load_report(&report)?;
            let dir = out.unwrap_or_else(|| report.parent().unwrap_or(Path::new(".")).to_path_buf());
            for path in render_tables(&parsed, &dir)? {
                println!("{}", path.display());
            }
            Ok(EXIT_OK)
        }
    }
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn finish_run(report: ExperimentReport, out: &Path) -> Result<u8> {
    print_summary(&report);
    for path in write_report(&report, out)? {
        println!("{}", path.display());
    }
    for f in &report.failures {
        eprintln!("fold {} failed: {}", f.fold, f.reason);
    }
    for m in &report.methods {
        for f in m.folds.iter().filter_map(|f| f.error.as_ref().map(|e| (f.fold, e))) {
            eprintln!("{} fold {} failed: {}", m.method, f.0, f.1);
        }
    }
    Ok(if report.succeeded() { EXIT_OK } else { EXIT_ERROR })
}

fn cell(report: &crate::experiment::MethodResult, metric: &str) -> String {
    match (report.mean(metric), report.sd(metric)) {
        (Some(m), Some(s)) => format!("{m:.4}±{s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "-".into(),
    }
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "{:<24} {:>15} {:>15} {:>15} {:>15} {:>15}",
        "method", "accuracy", "dr", "dr_train", "training_ar", "fidelity"
    );
    for m in &report.methods {
        println!(
            "{:<24} {:>15} {:>15} {:>15} {:>15} {:>15}",
            m.method.to_string(),
            cell(m, "accuracy"),
            cell(m, "dr"),
            cell(m, "dr_train"),
            cell(m, "training_adjustment_rate"),
            cell(m, "data_fidelity"),
        );
    }
    if let Some(sweep) = &report.sweep {
        let last = sweep.mean.last().map_or(0.0, |p| p.dr_reduction_pct);
        println!("sweep: {} points, final mean DR reduction {last:.2}%", sweep.mean.len());
    }
    let grand = report.diagnostics.iter().map(|d| d.stats.grand_max).fold(0.0, f64::max);
    if !report.diagnostics.is_empty() {
        println!("grand-coalition gap: max {grand:e}");
    }
}

fn print_suite(r: &SuiteReport) {
    let status = if r.ok() { "PASS" } else { "FAIL" };
    println!(
        "{status} {}: {}/{} instances passed (seed {}, worst violation {:e})",
        r.suite.name(),
        r.passed,
        r.instances,
        r.seed,
        r.worst
    );
    if let Some(g) = &r.gap_stats {
        println!(
            "  gap over {} rows: mean {:e}, median {:e}, max {:e}; grand coalition max {:e}",
            g.rows, g.mean, g.median, g.max, g.grand_max
        );
    }
    for c in &r.counterexamples {
        println!("  counterexample instance {} seed {}: {}", c.instance, c.seed, c.detail);
    }
}
