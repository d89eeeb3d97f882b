//! The five subcommands. Each writes its human-readable report to `out` and
//! its files under `cfg.out`; all output files are produced after the
//! computation finishes, by this single thread.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bayes_cfme::calibration::{
    coverage, credible_interval, estimate_once, plot_series, run_sweep, write_plot_csv,
    MethodCoverage, SweepResult,
};
use bayes_cfme::synthetic::{format_f64, gen_logging_data, gen_policy_d3, true_eta, SettingId};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    Ok(&cfg.out)
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Io(format!("standard output: {e}")))
}

/// Writes `d1.csv`, `d2.csv` and `d3.csv` for the base seed and `--alpha`.
pub fn cmd_simulate(
    cfg: &RunConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<PathBuf>, CliError> {
    let spec = cfg.spec();
    let alpha = cfg.single_alpha()?;
    let (d1, d2) = gen_logging_data(&spec, cfg.n, cfg.m, cfg.seed)?;
    let d3 = gen_policy_d3(&spec, alpha, &d1.u, Some(cfg.l_value()), cfg.seed)?;
    let mut buffers = [Vec::new(), Vec::new(), Vec::new()];
    d1.write_csv(&mut buffers[0])?;
    d2.write_csv(&mut buffers[1])?;
    d3.write_csv(&mut buffers[2])?;
    let dir = out_dir(cfg)?;
    let mut written = Vec::new();
    for ((name, rows), bytes) in [
        ("d1.csv", d1.len()),
        ("d2.csv", d2.len()),
        ("d3.csv", d3.len()),
    ]
    .into_iter()
    .zip(&buffers)
    {
        let path = dir.join(name);
        write_file(&path, bytes)?;
        say(out, format!("{}: {rows} rows", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub mean: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// One estimate for `--method` at `--alpha` and the base seed, as JSON.
pub fn cmd_estimate(
    cfg: &RunConfig,
    out: &mut (dyn Write + Send),
) -> Result<EstimateRecord, CliError> {
    let sweep = cfg.sweep_config()?;
    let g = estimate_once(&sweep, cfg.single_alpha()?, cfg.method, cfg.seed)?;
    let (ci_low, ci_high) = credible_interval(&g, cfg.level);
    let record = EstimateRecord {
        mean: g.mean,
        variance: g.variance,
        ci_low,
        ci_high,
    };
    say(
        out,
        serde_json::to_string(&record).expect("plain record serialises"),
    )?;
    Ok(record)
}

/// Runs the sweep and writes `sweep.csv`, `sweep.json` and one
/// `plot_<method>.csv` per method (first seed).
pub fn cmd_sweep(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<SweepResult, CliError> {
    let sweep = cfg.sweep_config()?;
    let result = run_sweep(&sweep)?;
    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let mut plots = Vec::new();
    for &method in &sweep.methods {
        let mut bytes = Vec::new();
        write_plot_csv(&plot_series(&result, method, sweep.seeds[0]), &mut bytes)?;
        plots.push((format!("plot_{method}.csv"), bytes));
    }
    let dir = out_dir(cfg)?;
    write_file(&dir.join("sweep.csv"), &csv)?;
    write_file(&dir.join("sweep.json"), result.to_json().as_bytes())?;
    for (name, bytes) in &plots {
        write_file(&dir.join(name), bytes)?;
    }
    let failed = result.rows.iter().filter(|r| !r.is_ok()).count();
    say(
        out,
        format!(
            "{} rows ({} failed) written to {}",
            result.rows.len(),
            failed,
            dir.join("sweep.csv").display()
        ),
    )?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub setting: SettingId,
    pub level: f64,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub alphas: usize,
    pub seeds: Vec<u64>,
    pub coverage: Vec<MethodCoverage>,
}

/// Coverage of the credible intervals per method; writes `calibration.json`.
pub fn cmd_calibrate(
    cfg: &RunConfig,
    out: &mut (dyn Write + Send),
) -> Result<CalibrationReport, CliError> {
    let sweep = cfg.sweep_config()?;
    let result = run_sweep(&sweep)?;
    let report = CalibrationReport {
        setting: cfg.setting,
        level: cfg.level,
        n: sweep.n,
        m: sweep.m,
        l: sweep.l,
        alphas: sweep.alphas.len(),
        seeds: sweep.seeds.clone(),
        coverage: coverage(&result, cfg.level)?,
    };
    let json = serde_json::to_string_pretty(&report).expect("plain report serialises");
    let dir = out_dir(cfg)?;
    write_file(&dir.join("calibration.json"), json.as_bytes())?;
    say(
        out,
        format!(
            "setting {}, {:.0}% intervals, {} alphas x {} seeds",
            cfg.setting,
            cfg.level * 100.0,
            report.alphas,
            report.seeds.len()
        ),
    )?;
    say(
        out,
        format!(
            "{:<12} {:>9} {:>8} {:>10} {:>9}",
            "method", "coverage", "covered", "evaluated", "excluded"
        ),
    )?;
    for c in &report.coverage {
        let fraction = c.fraction.map_or("n/a".to_string(), |f| format!("{f:.3}"));
        say(
            out,
            format!(
                "{:<12} {:>9} {:>8} {:>10} {:>9}",
                c.method.name(),
                fraction,
                c.covered,
                c.evaluated,
                c.excluded
            ),
        )?;
    }
    Ok(report)
}

/// Monte-Carlo truth per alpha, as `alpha,true_eta` lines.
pub fn cmd_oracle(
    cfg: &RunConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<(f64, f64)>, CliError> {
    let spec = cfg.spec();
    let alphas = cfg.alpha_values();
    let etas: Vec<f64> = alphas
        .par_iter()
        .map(|&a| true_eta(&spec, a, cfg.mc_samples, cfg.oracle_seed))
        .collect::<Result<_, _>>()?;
    say(out, "alpha,true_eta")?;
    for (a, e) in alphas.iter().zip(&etas) {
        say(out, format!("{},{}", format_f64(*a), format_f64(*e)))?;
    }
    Ok(alphas.into_iter().zip(etas).collect())
}
