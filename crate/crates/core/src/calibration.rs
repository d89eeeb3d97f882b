//! Credible intervals, alpha sweeps over methods and seeds, and coverage.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CfmeError, Result};
use crate::estimators::{FusionConfig, FusionKernels, FusionModel, GaussianScalar, Method};
use crate::kernel_core::KernelSpec;
use crate::normal::two_sided_z;
use crate::synthetic::{
    format_f64, gen_logging_data, gen_policy_d3, true_eta, SettingId, SettingSpec,
};

/// `mean ± z(level)·sd`.
pub fn credible_interval(g: &GaussianScalar, level: f64) -> (f64, f64) {
    debug_assert!(level > 0.0 && level < 1.0, "level must lie in (0, 1)");
    let half = two_sided_z(level) * g.variance.max(0.0).sqrt();
    (g.mean - half, g.mean + half)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LengthscaleMode {
    /// Median heuristic on `D1` covariates and on pooled outcomes.
    Median,
    Explicit {
        x: Vec<f64>,
        r: Vec<f64>,
    },
}

/// Everything a sweep needs besides the seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub setting: SettingSpec,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub lengthscales: LengthscaleMode,
    pub fusion: FusionConfig,
    pub level: f64,
    pub mc_samples: usize,
    pub oracle_seed: u64,
}

impl SweepConfig {
    /// Defaults for a setting: its alpha grid, all Bayesian methods, `N = M = 200`, `L = 100`.
    pub fn for_setting(setting: SettingSpec) -> Self {
        Self {
            alphas: setting.default_alpha_grid(),
            setting,
            methods: Method::BAYESIAN.to_vec(),
            seeds: vec![0],
            n: 200,
            m: 200,
            l: 100,
            lengthscales: LengthscaleMode::Median,
            fusion: FusionConfig::default(),
            level: 0.95,
            mc_samples: 1_000_000,
            oracle_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return Err(CfmeError::input(
                "alpha grid, methods and seeds must be nonempty",
            ));
        }
        if self.n == 0 || self.m == 0 || self.l == 0 {
            return Err(CfmeError::input("N, M and L must be at least 1"));
        }
        if self.l > self.n {
            return Err(CfmeError::input(format!(
                "L = {} exceeds N = {}",
                self.l, self.n
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CfmeError::input(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if self.mc_samples == 0 {
            return Err(CfmeError::input("mc_samples must be at least 1"));
        }
        if let LengthscaleMode::Explicit { x, r } = &self.lengthscales {
            if x.len() != 2 || r.len() != 1 {
                return Err(CfmeError::input(
                    "explicit lengthscales need two values for x and one for r",
                ));
            }
        }
        Ok(())
    }
}

/// Fits the data-fusion model for one seed of a setting.
pub fn fit_seed(cfg: &SweepConfig, seed: u64) -> Result<(FusionModel, Vec<f64>)> {
    let (d1, d2) = gen_logging_data(&cfg.setting, cfg.n, cfg.m, seed)?;
    let (x, r, rt) = (d1.covariates(), d1.outcomes(), d2.inputs());
    let kernels = match &cfg.lengthscales {
        LengthscaleMode::Median => FusionKernels::median(&x, &r, &rt)?,
        LengthscaleMode::Explicit { x: lx, r: lr } => FusionKernels::new(
            KernelSpec::rbf(lx.clone(), 1.0)?,
            KernelSpec::rbf(lr.clone(), 1.0)?,
        )?,
    };
    let model = FusionModel::fit(x, r, rt, d2.y, kernels, cfg.fusion)?;
    Ok((model, d1.u))
}

/// Runs one estimator for one seed and policy.
pub fn estimate_once(
    cfg: &SweepConfig,
    alpha: f64,
    method: Method,
    seed: u64,
) -> Result<GaussianScalar> {
    let (model, logged_u) = fit_seed(cfg, seed)?;
    let d3 = gen_policy_d3(&cfg.setting, alpha, &logged_u, Some(cfg.l), seed)?;
    model.estimate(method, &d3.covariates())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: SettingId,
    pub alpha: f64,
    pub method: Method,
    pub seed: u64,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub true_eta: f64,
    /// `ok`, or `error: <message>` for a row whose estimator failed.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn estimate(&self) -> Option<GaussianScalar> {
        match (self.mean, self.variance) {
            (Some(mean), Some(variance)) if self.is_ok() => Some(GaussianScalar {
                mean,
                variance,
                raw_variance: variance,
            }),
            _ => None,
        }
    }
}

pub const SWEEP_CSV_HEADER: [&str; 10] = [
    "setting", "alpha", "method", "seed", "mean", "variance", "ci_low", "ci_high", "true_eta",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub level: f64,
    pub rows: Vec<SweepRow>,
}

/// One row per `(alpha, method, seed)`, ordered by that key.
///
/// Seeds are fitted in parallel on the current rayon pool; rows are merged in
/// a fixed order, so the output does not depend on scheduling.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let spec = cfg.setting;
    let truths: Vec<f64> = cfg
        .alphas
        .par_iter()
        .map(|&a| true_eta(&spec, a, cfg.mc_samples, cfg.oracle_seed))
        .collect::<Result<_>>()?;

    let per_seed: Vec<Vec<(usize, usize, SweepRow)>> =
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let fitted = fit_seed(cfg, seed);
                let mut rows = Vec::with_capacity(cfg.alphas.len() * cfg.methods.len());
                for (ai, &alpha) in cfg.alphas.iter().enumerate() {
                    let d3 = match &fitted {
                        Ok((_, u)) => gen_policy_d3(&spec, alpha, u, Some(cfg.l), seed)
                            .map(|d| d.covariates()),
                        Err(e) => Err(e.clone()),
                    };
                    for (mi, &method) in cfg.methods.iter().enumerate() {
                        let est = match (&fitted, &d3) {
                            (Ok((model, _)), Ok(d3)) => model.estimate(method, d3),
                            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                        };
                        let mut row = SweepRow {
                            setting: spec.id,
                            alpha,
                            method,
                            seed,
                            mean: None,
                            variance: None,
                            ci_low: None,
                            ci_high: None,
                            true_eta: truths[ai],
                            status: "ok".to_string(),
                        };
                        match est {
                            Ok(g) => {
                                let (lo, hi) = credible_interval(&g, cfg.level);
                                row.mean = Some(g.mean);
                                row.variance = Some(g.variance);
                                row.ci_low = Some(lo);
                                row.ci_high = Some(hi);
                            }
                            Err(e) => row.status = format!("error: {e}"),
                        }
                        rows.push((ai, mi, row));
                    }
                }
                rows
            })
            .collect();

    let mut keyed: Vec<(usize, usize, usize, SweepRow)> = per_seed
        .into_iter()
        .enumerate()
        .flat_map(|(si, rows)| rows.into_iter().map(move |(ai, mi, r)| (ai, mi, si, r)))
        .collect();
    keyed.sort_by_key(|&(ai, mi, si, _)| (ai, mi, si));
    Ok(SweepResult {
        level: cfg.level,
        rows: keyed.into_iter().map(|t| t.3).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: Method,
    pub covered: usize,
    pub evaluated: usize,
    /// Rows skipped because their estimator failed.
    pub excluded: usize,
    /// `covered / evaluated`, absent when nothing was evaluated.
    pub fraction: Option<f64>,
}

/// Per-method fraction of rows whose truth lies in the `level` interval,
/// recomputed from each row's mean and variance.
pub fn coverage(result: &SweepResult, level: f64) -> Result<Vec<MethodCoverage>> {
    if result.rows.is_empty() {
        return Err(CfmeError::input("coverage of an empty sweep"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(CfmeError::input(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let mut tally: BTreeMap<Method, (usize, usize, usize)> = BTreeMap::new();
    for row in &result.rows {
        let entry = tally.entry(row.method).or_default();
        match row.estimate() {
            Some(g) => {
                let (lo, hi) = credible_interval(&g, level);
                entry.1 += 1;
                if lo <= row.true_eta && row.true_eta <= hi {
                    entry.0 += 1;
                }
            }
            None => entry.2 += 1,
        }
    }
    Ok(tally
        .into_iter()
        .map(|(method, (covered, evaluated, excluded))| MethodCoverage {
            method,
            covered,
            evaluated,
            excluded,
            fraction: (evaluated > 0).then(|| covered as f64 / evaluated as f64),
        })
        .collect())
}

/// Plot series for one method and seed: `(alpha, mean, ci_low, ci_high, true_eta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub alpha: f64,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub true_eta: f64,
}

pub fn plot_series(result: &SweepResult, method: Method, seed: u64) -> Vec<PlotPoint> {
    let mut pts: Vec<PlotPoint> = result
        .rows
        .iter()
        .filter(|r| r.method == method && r.seed == seed)
        .map(|r| PlotPoint {
            alpha: r.alpha,
            mean: r.mean,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            true_eta: r.true_eta,
        })
        .collect();
    pts.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    pts
}

pub fn write_plot_csv<W: Write>(points: &[PlotPoint], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["alpha", "mean", "ci_low", "ci_high", "true_eta"])
        .map_err(csv_err)?;
    for p in points {
        wtr.write_record([
            format_f64(p.alpha),
            opt(p.mean),
            opt(p.ci_low),
            opt(p.ci_high),
            format_f64(p.true_eta),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()
        .map_err(|e| CfmeError::input(format!("csv write failed: {e}")))
}

fn csv_err(e: csv::Error) -> CfmeError {
    CfmeError::input(format!("csv error: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|e| CfmeError::input(format!("bad number `{s}`: {e}")))
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            wtr.write_record([
                r.setting.to_string(),
                format_f64(r.alpha),
                r.method.to_string(),
                r.seed.to_string(),
                opt(r.mean),
                opt(r.variance),
                opt(r.ci_low),
                opt(r.ci_high),
                format_f64(r.true_eta),
                r.status.clone(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()
            .map_err(|e| CfmeError::input(format!("csv write failed: {e}")))
    }

    /// Parses a table written by [`SweepResult::write_csv`]. The CSV carries
    /// no level, so the caller supplies it.
    pub fn read_csv<R: Read>(r: R, level: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != SWEEP_CSV_HEADER {
            return Err(CfmeError::input(format!(
                "unexpected sweep header {headers:?}"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| CfmeError::input(format!("bad number `{s}`: {e}")))
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            rows.push(SweepRow {
                setting: rec[0].parse()?,
                alpha: num(&rec[1])?,
                method: rec[2].parse()?,
                seed: rec[3]
                    .parse()
                    .map_err(|e| CfmeError::input(format!("bad seed: {e}")))?,
                mean: parse_opt(&rec[4])?,
                variance: parse_opt(&rec[5])?,
                ci_low: parse_opt(&rec[6])?,
                ci_high: parse_opt(&rec[7])?,
                true_eta: num(&rec[8])?,
                status: rec[9].to_string(),
            });
        }
        Ok(Self { level, rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep rows serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CfmeError::input(format!("bad sweep JSON: {e}")))
    }
}
