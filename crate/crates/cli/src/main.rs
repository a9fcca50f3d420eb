//! `cmj`: command-line driver of the branching-process harness.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 violated model
//! assumption, 3 unsupported regime, 4 resource cap.

use anyhow::Context;
use clap::{Parser, Subcommand};
use cmj::config::ExperimentConfig;
use cmj::genealogy::{simulate, StopRule};
use cmj::harness::{
    replicas_table, run_clt, run_fringe_census, run_lln, run_martingale_suite, CltOptions, Experiment,
};
use cmj::output::write_json;
use cmj::rng::{stream, AUX_STREAM_BASE};
use cmj::spectral::{check_a7, require_a7};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "cmj", version, about = "Simulate supercritical CMJ branching processes and check their limit theorems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Multiplies a_alpha by `1 + f` in the normal-approximation test.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    inject_aalpha_bias: f64,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Malthusian parameter, beta, strip roots and the second-moment check.
    Spectral,
    /// One population dump.
    Simulate,
    /// Law-of-large-numbers table.
    Lln,
    /// Normal-approximation test of the centred counts.
    Clt,
    /// Fringe subtree census.
    Fringe,
    /// Martingale mean and variance traces.
    Martingales,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<cmj::Error>().map_or(1, cmj::Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| cmj::Error::Config("--config <path> is required".into()))?;
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(cmj::Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the worker pool")?;
    }
    let out = config.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    match cli.command {
        Command::Spectral => spectral(config, &out),
        Command::Simulate => simulate_cmd(config, &out),
        Command::Lln => {
            let r = run_lln(&Experiment::new(config)?)?;
            r.table().write(&out.join("lln.csv"))?;
            finish(&out, "lln", r.passed, json!({ "lln": r }))
        }
        Command::Clt => clt(config, &out, cli.inject_aalpha_bias),
        Command::Fringe => {
            let r = run_fringe_census(&Experiment::new(config)?)?;
            r.table().write(&out.join("fringe.csv"))?;
            finish(&out, "fringe", r.passed, json!({ "fringe": r }))
        }
        Command::Martingales => {
            let r = run_martingale_suite(&Experiment::new(config)?)?;
            for t in &r.traces {
                t.table().write(&out.join(format!("trace_{}.csv", file_stem(&t.name))))?;
            }
            finish(&out, "martingales", r.passed, json!({ "martingales": r }))
        }
    }
}

fn spectral(config: ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let exp = Experiment::new(config)?;
    let alpha = exp.alpha();
    let mut rng = stream(exp.config.master_seed, AUX_STREAM_BASE + (1 << 41));
    let a7 = check_a7(&exp.law, alpha, alpha / 4.0, 20_000, &mut rng)?;
    let report = json!({
        "law": exp.law.describe(),
        "solution": exp.sol,
        "second_moment": a7,
    });
    write_json(&out.join("spectral.json"), &report)?;
    require_a7(&a7)?;
    println!("alpha = {}, beta = {}", exp.sol.alpha, exp.sol.beta);
    Ok(())
}

fn simulate_cmd(config: ExperimentConfig, out: &Path) -> anyhow::Result<()> {
    let law = config.model.build()?;
    let stop = config.stop.unwrap_or(StopRule::TimeHorizon(config.max_horizon()));
    let pop = simulate(&law, &stop, config.master_seed)?;
    pop.to_table().write(&out.join("population.csv"))?;
    println!("{} individuals", pop.born_count());
    Ok(())
}

fn clt(config: ExperimentConfig, out: &Path, bias: f64) -> anyhow::Result<()> {
    let exp = Experiment::new(config)?;
    let outcome = run_clt(&exp, &CltOptions { aalpha_bias: bias, ..CltOptions::default() })?;
    outcome.sigma.grid_table().write(&out.join("sigma2_grid.csv"))?;
    write_json(&out.join("sigma2.json"), &outcome.sigma.summary())?;
    replicas_table(&outcome.records).write(&out.join("replicas.csv"))?;
    let r = &outcome.report;
    let body = json!({ "clt": r, "sigma2": outcome.sigma.summary() });
    if r.degenerate {
        write_report(out, "clt", false, body)?;
        return Err(cmj::Error::Unsupported(format!(
            "sigma^2 = {} +- {} is zero within its error: degenerate regime, no normality test",
            r.sigma2_formula, r.sigma2_se
        ))
        .into());
    }
    finish(out, "clt", r.passed, body)
}

fn write_report(out: &Path, command: &str, passed: bool, body: serde_json::Value) -> anyhow::Result<()> {
    let mut report = json!({ "command": command, "passed": passed });
    if let (Some(dst), serde_json::Value::Object(src)) = (report.as_object_mut(), body) {
        dst.extend(src);
    }
    write_json(&out.join("report.json"), &report)?;
    Ok(())
}

/// Writes `report.json` and prints the one-line verdict.
fn finish(out: &Path, command: &str, passed: bool, body: serde_json::Value) -> anyhow::Result<()> {
    write_report(out, command, passed, body)?;
    println!("{command}: {}", if passed { "PASS" } else { "FAIL" });
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}
