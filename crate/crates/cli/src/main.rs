//! Command-line front end: run scenario episodes, compare configurations,
//! sweep parameter grids, and execute the built-in invariant checks.
//!
//! Exit codes: 0 on success, 1 on runtime failure (an episode or check
//! failed), 2 on usage errors (bad flags, scenario not found).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use infoplan::harness::{run_episode, ComparisonReport, EpisodeSummary};
use infoplan::report::write_episode_artifacts;
use infoplan::scenario::{presets, ScenarioConfig};
use infoplan::selftest;

#[derive(Parser)]
#[command(
    name = "infoplan",
    version,
    about = "Receding-horizon planning with online inertial-parameter estimation",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write CSV/JSON/SVG artifacts.
    Run(RunArgs),
    /// Run two scenarios and report their outcomes side by side.
    Compare(CompareArgs),
    /// Run one scenario across a grid of overridden values.
    Sweep(SweepArgs),
    /// Run the built-in invariant checks and report pass/fail per check.
    Selftest,
    /// List the scenario presets built into the library.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML file, or the name of a built-in preset.
    scenario: String,
    /// Directory for episode artifacts.
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override any scenario key, e.g. --set info_weighting=false.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct CompareArgs {
    /// First scenario (TOML file or preset name).
    a: String,
    /// Second scenario (TOML file or preset name).
    b: String,
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Same seed applied to both scenarios.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides applied to both scenarios.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Base scenario (TOML file or preset name).
    scenario: String,
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Grid axis as KEY=V1,V2,...; repeat for a cartesian product.
    #[arg(long, value_name = "KEY=V1,V2,...", required = true)]
    grid: Vec<String>,
    /// Worker threads for the sweep (default: logical cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides applied to every grid point.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Selftest => cmd_selftest(),
        Cmd::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Everything that can go wrong before an episode starts — unknown scenario,
/// parse failure, bad override — is a usage problem and maps to exit 2.
struct UsageError(String);

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

/// Resolve a scenario argument (file path first, then the preset roster) and
/// apply the common overrides.
fn prepare_scenario(
    spec: &str,
    seed: Option<u64>,
    set: &[String],
) -> Result<ScenarioConfig, UsageError> {
    let path = Path::new(spec);
    let mut cfg = if path.exists() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("reading scenario {}: {e}", path.display())))?;
        ScenarioConfig::from_toml_str(&text)
            .map_err(|e| usage(format!("parsing scenario {}: {e}", path.display())))?
    } else {
        presets::preset(spec).ok_or_else(|| {
            usage(format!(
                "scenario '{spec}' is neither a file nor a preset (try `infoplan presets`)"
            ))
        })?
    };
    for kv in set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("override '{kv}' is not KEY=VALUE")))?;
        cfg = cfg
            .with_override(key.trim(), value.trim())
            .map_err(|e| usage(format!("applying override '{kv}': {e}")))?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()
        .map_err(|e| usage(format!("invalid scenario: {e}")))?;
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let cfg = match prepare_scenario(&args.scenario, args.seed, &args.set) {
        Ok(cfg) => cfg,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            return Ok(ExitCode::from(2));
        }
    };
    log::info!("running scenario '{}' (seed {})", cfg.name, cfg.seed);
    let log = run_episode(&cfg).context("running episode")?;
    let outdir = args.output.join(&cfg.name);
    let files = write_episode_artifacts(&log, &outdir)
        .with_context(|| format!("writing artifacts to {}", outdir.display()))?;
    let summary = log.summary();
    print_summary_table(&[&summary]);
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let prepared = prepare_scenario(&args.a, args.seed, &args.set)
        .and_then(|a| Ok((a, prepare_scenario(&args.b, args.seed, &args.set)?)));
    let (cfg_a, cfg_b) = match prepared {
        Ok(pair) => pair,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            return Ok(ExitCode::from(2));
        }
    };

    log::info!("comparing '{}' against '{}'", cfg_a.name, cfg_b.name);
    let log_a = run_episode(&cfg_a).with_context(|| format!("running '{}'", cfg_a.name))?;
    let log_b = run_episode(&cfg_b).with_context(|| format!("running '{}'", cfg_b.name))?;

    let dir_a = args.output.join(format!("a_{}", cfg_a.name));
    let dir_b = args.output.join(format!("b_{}", cfg_b.name));
    write_episode_artifacts(&log_a, &dir_a)
        .with_context(|| format!("writing artifacts to {}", dir_a.display()))?;
    write_episode_artifacts(&log_b, &dir_b)
        .with_context(|| format!("writing artifacts to {}", dir_b.display()))?;

    let report = ComparisonReport {
        a: log_a.summary(),
        b: log_b.summary(),
    };
    let path = args.output.join("comparison.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    print_summary_table(&[&report.a, &report.b]);
    println!(
        "\ninertia covariance trace: {:.3e} (a) vs {:.3e} (b); terminal error {:.4} vs {:.4}",
        report.a.cov_trace_inertia,
        report.b.cov_trace_inertia,
        report.a.terminal_error_norm,
        report.b.terminal_error_norm,
    );
    Ok(ExitCode::SUCCESS)
}

/// Expand `--grid KEY=V1,V2,...` axes into the cartesian product of
/// configurations, each named after the overrides that produced it. Every
/// grid point is validated here so a bad key fails before any episode runs.
fn build_grid(
    base: &ScenarioConfig,
    grid: &[String],
) -> Result<Vec<(String, ScenarioConfig)>, UsageError> {
    let mut combos: Vec<(String, ScenarioConfig)> = vec![(base.name.clone(), base.clone())];
    for axis in grid {
        let (key, values) = axis
            .split_once('=')
            .ok_or_else(|| usage(format!("grid axis '{axis}' is not KEY=V1,V2,...")))?;
        let key = key.trim();
        let values: Vec<&str> = values.split(',').map(str::trim).collect();
        if values.iter().any(|v| v.is_empty()) {
            return Err(usage(format!("grid axis '{axis}' has an empty value")));
        }
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for (slug, cfg) in &combos {
            for value in &values {
                let cfg = cfg
                    .with_override(key, value)
                    .map_err(|e| usage(format!("applying {key}={value}: {e}")))?;
                next.push((format!("{slug}_{key}-{}", path_safe(value)), cfg));
            }
        }
        combos = next;
    }
    for (slug, cfg) in &mut combos {
        cfg.name = slug.clone();
        cfg.validate()
            .map_err(|e| usage(format!("grid point {slug}: {e}")))?;
    }
    Ok(combos)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let combos = match prepare_scenario(&args.scenario, args.seed, &args.set)
        .and_then(|base| build_grid(&base, &args.grid))
    {
        Ok(combos) => combos,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}");
            return Ok(ExitCode::from(2));
        }
    };

    log::info!(
        "sweeping {} grid points across {} axes",
        combos.len(),
        args.grid.len()
    );
    let pool = match args.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?,
        None => rayon::ThreadPoolBuilder::new()
            .build()
            .context("building worker pool")?,
    };

    let outdir = args.output.clone();
    let results: Vec<(String, Result<EpisodeSummary>)> = pool.install(|| {
        combos
            .par_iter()
            .map(|(slug, cfg)| {
                let outcome = run_episode(cfg)
                    .map_err(anyhow::Error::from)
                    .and_then(|log| {
                        write_episode_artifacts(&log, &outdir.join(slug))?;
                        Ok(log.summary())
                    });
                (slug.clone(), outcome)
            })
            .collect()
    });

    let mut summaries = Vec::new();
    let mut failures = 0usize;
    for (slug, outcome) in results {
        match outcome {
            Ok(s) => summaries.push(s),
            Err(e) => {
                failures += 1;
                eprintln!("grid point {slug} failed: {e:#}");
            }
        }
    }
    let path = args.output.join("sweep_summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summaries)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    print_summary_table(&summaries.iter().collect::<Vec<_>>());

    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_selftest() -> Result<ExitCode> {
    let results = selftest::run_all();
    let mut all_ok = true;
    for r in &results {
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict}  {:<36} {}", r.name, r.detail);
        all_ok &= r.passed;
    }
    println!(
        "\n{}/{} checks passed",
        results.iter().filter(|r| r.passed).count(),
        results.len()
    );
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn path_safe(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect()
}

fn print_summary_table(summaries: &[&EpisodeSummary]) {
    println!(
        "{:<40} {:>6} {:>9} {:>10} {:>9} {:>9} {:>9} {:>9} {:>10}",
        "scenario", "ticks", "arrival", "term_err", "m_hat", "ixx_hat", "iyy_hat", "izz_hat", "solve_avg"
    );
    for s in summaries {
        println!(
            "{:<40} {:>6} {:>9} {:>10.4} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9.3}s",
            s.scenario,
            s.ticks,
            s.arrival_time_s
                .map_or_else(|| "-".to_string(), |t| format!("{t:.0}s")),
            s.terminal_error_norm,
            s.final_estimate[0],
            s.final_estimate[1],
            s.final_estimate[2],
            s.final_estimate[3],
            s.mean_solve_time_s,
        );
    }
}
