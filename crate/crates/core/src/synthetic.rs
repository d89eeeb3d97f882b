//! Synthetic off-policy evaluation problems (Settings A and B), target
//! policies indexed by `alpha`, and the Monte-Carlo ground truth.
//!
//! Every generator is a pure function of its inputs and a [`RngSeed`]. Each
//! dataset role draws from its own ChaCha stream, so changing `N` leaves
//! `D2` untouched and vice versa.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CfmeError, Result};
use crate::kernel_core::PointSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SettingId {
    A,
    B,
}

impl fmt::Display for SettingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettingId::A => "A",
            SettingId::B => "B",
        })
    }
}

impl FromStr for SettingId {
    type Err = CfmeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(SettingId::A),
            "B" | "b" => Ok(SettingId::B),
            _ => Err(CfmeError::input(format!("unknown setting `{s}`"))),
        }
    }
}

/// Closed-form data-generating process.
///
/// Setting A: `u ~ N(5, 2²)`, `a = 4 z`, `r = u + a + 0.05 z`,
/// `r̃ ~ U(−2, 2)`, `y = 2 sin(r̃/2) + 0.05 z`, target `a = α u + 0.05 z`.
///
/// Setting B: `u ~ N(5, 2²)`, `a = 3 z`, `r = cos u + sin a + 0.5 z`,
/// `r̃ ~ U(−2, 2)`, `y = 1.5 sin r̃ + 0.2 z`, target `a = 2 sin α + 0.5 z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub id: SettingId,
    pub context_mean: f64,
    pub context_scale: f64,
    pub logging_action_scale: f64,
    pub reward_noise: f64,
    pub r_tilde_low: f64,
    pub r_tilde_high: f64,
    pub outcome_noise: f64,
    pub policy_noise: f64,
}

impl SettingSpec {
    pub fn setting_a() -> Self {
        Self {
            id: SettingId::A,
            context_mean: 5.0,
            context_scale: 2.0,
            logging_action_scale: 4.0,
            reward_noise: 0.05,
            r_tilde_low: -2.0,
            r_tilde_high: 2.0,
            outcome_noise: 0.05,
            policy_noise: 0.05,
        }
    }

    pub fn setting_b() -> Self {
        Self {
            id: SettingId::B,
            context_mean: 5.0,
            context_scale: 2.0,
            logging_action_scale: 3.0,
            reward_noise: 0.5,
            r_tilde_low: -2.0,
            r_tilde_high: 2.0,
            outcome_noise: 0.2,
            policy_noise: 0.5,
        }
    }

    pub fn from_id(id: SettingId) -> Self {
        match id {
            SettingId::A => Self::setting_a(),
            SettingId::B => Self::setting_b(),
        }
    }

    /// Noiseless part of `r | u, a`.
    pub fn reward_mean(&self, u: f64, a: f64) -> f64 {
        match self.id {
            SettingId::A => u + a,
            SettingId::B => u.cos() + a.sin(),
        }
    }

    /// `E[y | r]`.
    pub fn true_f(&self, r: f64) -> f64 {
        match self.id {
            SettingId::A => 2.0 * (r / 2.0).sin(),
            SettingId::B => 1.5 * r.sin(),
        }
    }

    /// `sup |true_f|`.
    pub fn f_bound(&self) -> f64 {
        match self.id {
            SettingId::A => 2.0,
            SettingId::B => 1.5,
        }
    }

    /// Noiseless part of the target action law at context `u`.
    pub fn policy_mean(&self, alpha: f64, u: f64) -> f64 {
        match self.id {
            SettingId::A => alpha * u,
            SettingId::B => 2.0 * alpha.sin(),
        }
    }

    /// Default `alpha` range: `[−2, 2]` for A, `[−8, 8]` for B, 33 points each.
    pub fn default_alpha_range(&self) -> (f64, f64, usize) {
        match self.id {
            SettingId::A => (-2.0, 2.0, 33),
            SettingId::B => (-8.0, 8.0, 33),
        }
    }

    pub fn default_alpha_grid(&self) -> Vec<f64> {
        let (lo, hi, n) = self.default_alpha_range();
        linspace(lo, hi, n)
    }
}

/// `count` equispaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamRole {
    D1 = 1,
    D2 = 2,
    D3 = 3,
    Oracle = 4,
}

/// A seed together with the dataset role it feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: StreamRole,
}

impl RngSeed {
    pub fn new(seed: u64, stream: StreamRole) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream as u64);
        rng
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Logged sample `D1 = {(u_i, a_i, r_i)}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoggedData {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
    pub r: Vec<f64>,
}

/// Regression sample `D2 = {(r̃_j, y_j)}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionData {
    pub r_tilde: Vec<f64>,
    pub y: Vec<f64>,
}

/// Target-policy sample `D3 = {(u_l, a'_l)}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyData {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
}

impl LoggedData {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `(u, a)` pairs.
    pub fn covariates(&self) -> PointSet {
        PointSet::from_columns(&self.u, &self.a).expect("columns have equal length")
    }

    pub fn outcomes(&self) -> PointSet {
        PointSet::from_scalars(&self.r)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_columns(w, &["u", "a", "r"], &[&self.u, &self.a, &self.r])
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut cols = read_columns(r, &["u", "a", "r"])?.into_iter();
        let (u, a, r) = (
            cols.next().unwrap(),
            cols.next().unwrap(),
            cols.next().unwrap(),
        );
        Ok(Self { u, a, r })
    }
}

impl RegressionData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn inputs(&self) -> PointSet {
        PointSet::from_scalars(&self.r_tilde)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_columns(w, &["r_tilde", "y"], &[&self.r_tilde, &self.y])
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut cols = read_columns(r, &["r_tilde", "y"])?.into_iter();
        let (r_tilde, y) = (cols.next().unwrap(), cols.next().unwrap());
        Ok(Self { r_tilde, y })
    }
}

impl PolicyData {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn covariates(&self) -> PointSet {
        PointSet::from_columns(&self.u, &self.a).expect("columns have equal length")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_columns(w, &["u", "a"], &[&self.u, &self.a])
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut cols = read_columns(r, &["u", "a"])?.into_iter();
        let (u, a) = (cols.next().unwrap(), cols.next().unwrap());
        Ok(Self { u, a })
    }
}

/// Draws `D1` (size `n`) and `D2` (size `m`) from the setting's logging laws.
pub fn gen_logging_data(
    spec: &SettingSpec,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<(LoggedData, RegressionData)> {
    if n == 0 || m == 0 {
        return Err(CfmeError::input("N and M must be at least 1"));
    }
    let mut rng = RngSeed::new(seed, StreamRole::D1).rng();
    let mut d1 = LoggedData {
        u: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let u = spec.context_mean + spec.context_scale * normal(&mut rng);
        let a = spec.logging_action_scale * normal(&mut rng);
        let r = spec.reward_mean(u, a) + spec.reward_noise * normal(&mut rng);
        d1.u.push(u);
        d1.a.push(a);
        d1.r.push(r);
    }
    let mut rng = RngSeed::new(seed, StreamRole::D2).rng();
    let mut d2 = RegressionData {
        r_tilde: Vec::with_capacity(m),
        y: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let rt = rng.random_range(spec.r_tilde_low..spec.r_tilde_high);
        let y = spec.true_f(rt) + spec.outcome_noise * normal(&mut rng);
        d2.r_tilde.push(rt);
        d2.y.push(y);
    }
    Ok((d1, d2))
}

/// Pairs logged contexts with actions from the target policy `alpha`.
///
/// With `size = Some(L)` a seeded subsample of `L` contexts is taken without
/// replacement. The subsample and the action noise depend only on the seed,
/// so all `alpha` values share them.
pub fn gen_policy_d3(
    spec: &SettingSpec,
    alpha: f64,
    logged_u: &[f64],
    size: Option<usize>,
    seed: u64,
) -> Result<PolicyData> {
    if logged_u.is_empty() {
        return Err(CfmeError::input("need at least one logged context"));
    }
    let mut rng = RngSeed::new(seed, StreamRole::D3).rng();
    let u: Vec<f64> = match size {
        Some(l) if l > logged_u.len() => {
            return Err(CfmeError::input(format!(
                "requested L = {l} exceeds the {} logged contexts",
                logged_u.len()
            )))
        }
        Some(0) => return Err(CfmeError::input("L must be at least 1")),
        Some(l) if l < logged_u.len() => index::sample(&mut rng, logged_u.len(), l)
            .into_iter()
            .map(|i| logged_u[i])
            .collect(),
        _ => logged_u.to_vec(),
    };
    let a = u
        .iter()
        .map(|&ui| spec.policy_mean(alpha, ui) + spec.policy_noise * normal(&mut rng))
        .collect();
    Ok(PolicyData { u, a })
}

/// Monte-Carlo estimate of `E[true_f(r)]` under `u → policy(alpha) → r`.
pub fn true_eta(spec: &SettingSpec, alpha: f64, mc_samples: usize, seed: u64) -> Result<f64> {
    if mc_samples == 0 {
        return Err(CfmeError::input("need at least one Monte-Carlo sample"));
    }
    let mut rng = RngSeed::new(seed, StreamRole::Oracle).rng();
    let mut total = 0.0;
    for _ in 0..mc_samples {
        let u = spec.context_mean + spec.context_scale * normal(&mut rng);
        let a = spec.policy_mean(alpha, u) + spec.policy_noise * normal(&mut rng);
        let r = spec.reward_mean(u, a) + spec.reward_noise * normal(&mut rng);
        total += spec.true_f(r);
    }
    Ok(total / mc_samples as f64)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_columns<W: Write>(w: W, headers: &[&str], cols: &[&Vec<f64>]) -> Result<()> {
    let rows = cols[0].len();
    if cols.iter().any(|c| c.len() != rows) {
        return Err(CfmeError::input("columns differ in length"));
    }
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| CfmeError::input(format!("csv write failed: {e}"));
    wtr.write_record(headers).map_err(io)?;
    for i in 0..rows {
        wtr.write_record(cols.iter().map(|c| format_f64(c[i])))
            .map_err(io)?;
    }
    wtr.flush()
        .map_err(|e| CfmeError::input(format!("csv write failed: {e}")))?;
    Ok(())
}

fn read_columns<R: Read>(r: R, headers: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_reader(r);
    let found = rdr
        .headers()
        .map_err(|e| CfmeError::input(format!("csv read failed: {e}")))?;
    if found.iter().collect::<Vec<_>>() != headers {
        return Err(CfmeError::input(format!(
            "expected header {headers:?}, found {found:?}"
        )));
    }
    let mut cols = vec![Vec::new(); headers.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CfmeError::input(format!("csv read failed: {e}")))?;
        for (col, field) in cols.iter_mut().zip(rec.iter()) {
            col.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| CfmeError::input(format!("bad number `{field}`: {e}")))?,
            );
        }
    }
    Ok(cols)
}
