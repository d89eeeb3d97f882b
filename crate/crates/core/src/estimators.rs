//! Two-stage data-fusion estimators of `eta = E[f(R)]` under a target
//! covariate distribution.
//!
//! `D1 = {(x_i, r_i)}` links covariates to intermediate outcomes, `D2 =
//! {(r̃_j, y_j)}` gives noisy evaluations of `f`, and `D3 = {x'_l}` is a sample
//! from the target covariate distribution (for off-policy evaluation, logged
//! contexts paired with actions drawn from the target policy).
//!
//! A [`FusionModel`] is fitted once on `D1` and `D2`; every `D3`-independent
//! quantity is computed lazily and cached, so sweeping over many target
//! policies only costs one `K_xx + λI` solve per policy.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embeddings::{shift_average, shift_self_average};
use crate::error::{CfmeError, Result};
use crate::kernel_core::{gram, median_heuristic, KernelSpec, PointSet, RegFactor, SolveConfig};

/// Raw variances below this are reported as numerical trouble.
pub const NEGATIVE_VARIANCE_SLACK: f64 = -1e-8;

/// Posterior mean and variance of `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianScalar {
    pub mean: f64,
    /// Clamped at zero.
    pub variance: f64,
    /// Variance before clamping.
    pub raw_variance: f64,
}

impl GaussianScalar {
    pub fn from_raw(mean: f64, raw_variance: f64) -> Self {
        Self {
            mean,
            variance: raw_variance.max(0.0),
            raw_variance,
        }
    }

    pub fn point(mean: f64) -> Self {
        Self {
            mean,
            variance: 0.0,
            raw_variance: 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// True when the unclamped variance is negative beyond rounding slack.
    pub fn is_flagged(&self) -> bool {
        self.raw_variance < NEGATIVE_VARIANCE_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Plugin,
    Cfmp,
    BayesRcfme,
    BayesCfmp,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Plugin,
        Method::Cfmp,
        Method::BayesRcfme,
        Method::BayesCfmp,
    ];
    pub const BAYESIAN: [Method; 3] = [Method::Cfmp, Method::BayesRcfme, Method::BayesCfmp];

    pub fn name(self) -> &'static str {
        match self {
            Method::Plugin => "plugin",
            Method::Cfmp => "cfmp",
            Method::BayesRcfme => "bayes_rcfme",
            Method::BayesCfmp => "bayes_cfmp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CfmeError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CfmeError::input(format!("unknown method `{s}`")))
    }
}

/// Which matrix is regularised in `Θ₄ = K̂⁻¹ R_r̂r̃ (· + λ_f I)⁻¹ y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta4Kernel {
    /// `K_r̃r̃ + λ_f I`.
    #[default]
    K,
    /// `R_r̃r̃ + λ_f I`, matching the mean `μ₃`.
    R,
}

impl FromStr for Theta4Kernel {
    type Err = CfmeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(Theta4Kernel::K),
            "R" | "r" => Ok(Theta4Kernel::R),
            _ => Err(CfmeError::input(format!(
                "theta4 kernel must be K or R, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionKernels {
    /// Kernel on covariates (product RBF over `(u, a)` in the policy setting).
    pub x: KernelSpec,
    /// Base kernel on intermediate outcomes.
    pub r: KernelSpec,
    /// Prior kernel over outcomes; the nuclear kernel of `r` unless overridden.
    pub r_prior: KernelSpec,
}

impl FusionKernels {
    pub fn new(x: KernelSpec, r: KernelSpec) -> Result<Self> {
        let r_prior = KernelSpec::nuclear_of(&r)?;
        Ok(Self { x, r, r_prior })
    }

    /// Unit-amplitude RBFs with median-heuristic lengthscales; the outcome
    /// lengthscale pools `D1` outcomes and `D2` inputs.
    pub fn median(d1_x: &PointSet, d1_r: &PointSet, d2_r: &PointSet) -> Result<Self> {
        let x = KernelSpec::rbf(median_heuristic(d1_x)?, 1.0)?;
        let r = KernelSpec::rbf(median_heuristic(&d1_r.concat(d2_r)?)?, 1.0)?;
        Self::new(x, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Ridge `λ` of the embedding stage plus the jitter schedule shared by all solves.
    pub solve: SolveConfig,
    /// Noise/ridge `λ_f` of the regression stage.
    pub lambda_f: f64,
    pub theta4: Theta4Kernel,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            solve: SolveConfig::default(),
            lambda_f: 1e-2,
            theta4: Theta4Kernel::K,
        }
    }
}

impl FusionConfig {
    fn f_solve(&self) -> SolveConfig {
        SolveConfig {
            ridge: self.lambda_f,
            ..self.solve
        }
    }

    fn validate(&self) -> Result<()> {
        self.solve.validate()?;
        self.f_solve().validate()
    }
}

/// All three samples plus kernels and regularisation.
#[derive(Debug, Clone)]
pub struct FusionInputs {
    pub d1_x: PointSet,
    pub d1_r: PointSet,
    pub d2_r: PointSet,
    pub d2_y: Vec<f64>,
    pub d3_x: PointSet,
    pub kernels: FusionKernels,
    pub config: FusionConfig,
}

impl FusionInputs {
    pub fn fit(&self) -> Result<FusionModel> {
        FusionModel::fit(
            self.d1_x.clone(),
            self.d1_r.clone(),
            self.d2_r.clone(),
            self.d2_y.clone(),
            self.kernels.clone(),
            self.config,
        )
    }
}

pub fn plugin_point(inputs: &FusionInputs) -> Result<f64> {
    inputs.fit()?.plugin_point(&inputs.d3_x)
}

pub fn cfmp(inputs: &FusionInputs) -> Result<GaussianScalar> {
    inputs.fit()?.cfmp(&inputs.d3_x)
}

pub fn bayes_rcfme(inputs: &FusionInputs) -> Result<GaussianScalar> {
    inputs.fit()?.bayes_rcfme(&inputs.d3_x)
}

pub fn bayes_cfmp(inputs: &FusionInputs) -> Result<GaussianScalar> {
    inputs.fit()?.bayes_cfmp(&inputs.d3_x)
}

/// Quantities that depend on `D3` only through kernel averages.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTerms {
    /// `E = (1/L) 1ᵀ K_x'x (K_xx + λI)⁻¹`, stored as a column.
    pub e: DVector<f64>,
    /// `(1/L²) 1ᵀ K_x'x' 1`.
    pub f: f64,
    /// `(1/L²) 1ᵀ K_x'x (K_xx + λI)⁻¹ K_xx' 1`.
    pub g: f64,
}

/// Regression stage with the base kernel: KRR mean and GP posterior covariance at `r`.
#[derive(Debug, Clone)]
struct KrrStage {
    /// `(K_r̃r̃ + λ_f I)⁻¹ y`.
    coeffs: DVector<f64>,
    /// KRR / GP posterior mean at the `D1` outcomes.
    f_at_r: DVector<f64>,
    /// `K̃_rr = K_rr − K_rr̃ (K_r̃r̃ + λ_f I)⁻¹ K_r̃r`.
    post_cov: DMatrix<f64>,
}

/// Scalars of the BayesRCFME closed form that do not depend on `D3`.
#[derive(Debug, Clone)]
struct RcfmeStage {
    /// `K_rr R_rr⁻¹ R_rr̃ A`; the mean is `E` applied to it.
    mean_coeffs: DVector<f64>,
    b: f64,
    c: f64,
}

/// `D3`-independent pieces of the BayesCFMP closed form. `r̂ = (r, r̃)`.
#[derive(Debug, Clone)]
pub struct BayesCfmpParts {
    /// `K_rr̂ K_r̂r̂⁻¹ R_r̂r̃ (R_r̃r̃ + λ_f I)⁻¹ y`; the mean is `E` applied to it.
    pub mean_coeffs: DVector<f64>,
    /// `K_r̂r̂⁻¹ R_r̂r R_rr⁻¹ K_rr`, `(N+M) x N`.
    pub theta1: DMatrix<f64>,
    /// `K_r̂r̂⁻¹ R_r̂r̃ (K_r̃r̃ + λ_f I)⁻¹ y` (or `R_r̃r̃` per [`Theta4Kernel`]).
    pub theta4: DVector<f64>,
    /// Posterior covariance of `f` at `r̂` under the nuclear prior.
    pub r_bar: DMatrix<f64>,
    pub theta2_a: f64,
    pub theta2_b: f64,
    pub theta3_a: f64,
    pub theta3_b: f64,
    first_term_form: DMatrix<f64>,
}

/// Scalar terms of one BayesRCFME evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcfmeTerms {
    pub mean: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub g: f64,
}

impl RcfmeTerms {
    pub fn raw_variance(&self) -> f64 {
        self.b * self.f - self.c * self.g
    }
}

/// Scalar terms of one BayesCFMP evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesCfmpTerms {
    pub mean: f64,
    /// `E Θ₁ᵀ R̄ Θ₁ Eᵀ`.
    pub first: f64,
    pub theta2_a: f64,
    pub theta2_b: f64,
    pub theta3_a: f64,
    pub theta3_b: f64,
    pub f: f64,
    pub g: f64,
}

impl BayesCfmpTerms {
    pub fn raw_variance(&self) -> f64 {
        self.first + self.theta2_a * self.f - self.theta2_b * self.g + self.theta3_a * self.f
            - self.theta3_b * self.g
    }
}

type Cached<T> = OnceLock<std::result::Result<T, CfmeError>>;

fn cached<T>(cell: &Cached<T>, init: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(init).as_ref().map_err(Clone::clone)
}

/// Estimators fitted on `D1` and `D2`, ready to be queried with any `D3`.
#[derive(Debug)]
pub struct FusionModel {
    d1_x: PointSet,
    d1_r: PointSet,
    d2_r: PointSet,
    y: DVector<f64>,
    kernels: FusionKernels,
    config: FusionConfig,
    k_x_factor: RegFactor,
    krr: Cached<KrrStage>,
    rcfme: Cached<RcfmeStage>,
    cfmp3: Cached<BayesCfmpParts>,
}

impl FusionModel {
    pub fn fit(
        d1_x: PointSet,
        d1_r: PointSet,
        d2_r: PointSet,
        d2_y: Vec<f64>,
        kernels: FusionKernels,
        config: FusionConfig,
    ) -> Result<Self> {
        config.validate()?;
        if d1_x.is_empty() || d2_r.is_empty() {
            return Err(CfmeError::input("D1 and D2 must be nonempty"));
        }
        if d1_x.len() != d1_r.len() {
            return Err(CfmeError::input(
                "D1 covariates and outcomes differ in count",
            ));
        }
        if d2_r.len() != d2_y.len() {
            return Err(CfmeError::input("D2 inputs and targets differ in count"));
        }
        if d1_r.dim() != d2_r.dim() {
            return Err(CfmeError::input(
                "D1 outcomes and D2 inputs differ in dimension",
            ));
        }
        if kernels.x.dim() != d1_x.dim()
            || kernels.r.dim() != d1_r.dim()
            || kernels.r_prior.dim() != d1_r.dim()
        {
            return Err(CfmeError::input("kernel dimensions do not match the data"));
        }
        let k_xx = gram(&kernels.x, &d1_x, &d1_x)?;
        let k_x_factor = RegFactor::new(&k_xx, &config.solve)?;
        Ok(Self {
            d1_x,
            d1_r,
            d2_r,
            y: DVector::from_vec(d2_y),
            kernels,
            config,
            k_x_factor,
            krr: OnceLock::new(),
            rcfme: OnceLock::new(),
            cfmp3: OnceLock::new(),
        })
    }

    pub fn kernels(&self) -> &FusionKernels {
        &self.kernels
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn shift_terms(&self, d3_x: &PointSet) -> Result<ShiftTerms> {
        if d3_x.is_empty() {
            return Err(CfmeError::input("D3 must be nonempty"));
        }
        if d3_x.dim() != self.d1_x.dim() {
            return Err(CfmeError::input(
                "D3 covariates differ in dimension from D1",
            ));
        }
        let v = shift_average(&self.kernels.x, &self.d1_x, d3_x)?;
        let e = self.k_x_factor.solve_vec(&v);
        let g = e.dot(&v);
        let f = shift_self_average(&self.kernels.x, d3_x)?;
        Ok(ShiftTerms { e, f, g })
    }

    pub fn estimate(&self, method: Method, d3_x: &PointSet) -> Result<GaussianScalar> {
        match method {
            Method::Plugin => self.plugin_point(d3_x).map(GaussianScalar::point),
            Method::Cfmp => self.cfmp(d3_x),
            Method::BayesRcfme => self.bayes_rcfme(d3_x),
            Method::BayesCfmp => self.bayes_cfmp(d3_x),
        }
    }

    /// CFME weights composed with the KRR fit of `f`.
    pub fn plugin_point(&self, d3_x: &PointSet) -> Result<f64> {
        let s = self.shift_terms(d3_x)?;
        Ok(s.e.dot(&self.krr()?.f_at_r))
    }

    /// KRR / GP posterior mean of `f` at the `D1` outcomes.
    pub fn regression_at_outcomes(&self) -> Result<&DVector<f64>> {
        Ok(&self.krr()?.f_at_r)
    }

    /// GP on `f`, frequentist CFME on the outcome distribution.
    pub fn cfmp(&self, d3_x: &PointSet) -> Result<GaussianScalar> {
        let s = self.shift_terms(d3_x)?;
        let stage = self.krr()?;
        let mean = s.e.dot(&stage.f_at_r);
        let var = (&stage.post_cov * &s.e).dot(&s.e);
        Ok(GaussianScalar::from_raw(mean, var))
    }

    pub fn bayes_rcfme(&self, d3_x: &PointSet) -> Result<GaussianScalar> {
        let t = self.bayes_rcfme_terms(d3_x)?;
        Ok(GaussianScalar::from_raw(t.mean, t.raw_variance()))
    }

    pub fn bayes_rcfme_terms(&self, d3_x: &PointSet) -> Result<RcfmeTerms> {
        let s = self.shift_terms(d3_x)?;
        let stage = self.rcfme()?;
        Ok(RcfmeTerms {
            mean: s.e.dot(&stage.mean_coeffs),
            b: stage.b,
            c: stage.c,
            f: s.f,
            g: s.g,
        })
    }

    pub fn bayes_cfmp(&self, d3_x: &PointSet) -> Result<GaussianScalar> {
        let t = self.bayes_cfmp_terms(d3_x)?;
        Ok(GaussianScalar::from_raw(t.mean, t.raw_variance()))
    }

    pub fn bayes_cfmp_terms(&self, d3_x: &PointSet) -> Result<BayesCfmpTerms> {
        let s = self.shift_terms(d3_x)?;
        let p = self.bayes_cfmp_parts()?;
        Ok(BayesCfmpTerms {
            mean: s.e.dot(&p.mean_coeffs),
            first: (&p.first_term_form * &s.e).dot(&s.e),
            theta2_a: p.theta2_a,
            theta2_b: p.theta2_b,
            theta3_a: p.theta3_a,
            theta3_b: p.theta3_b,
            f: s.f,
            g: s.g,
        })
    }

    fn krr(&self) -> Result<&KrrStage> {
        cached(&self.krr, || {
            let k = &self.kernels.r;
            let k_tt = gram(k, &self.d2_r, &self.d2_r)?;
            let k_rt = gram(k, &self.d1_r, &self.d2_r)?;
            let k_rr = gram(k, &self.d1_r, &self.d1_r)?;
            let factor =
                RegFactor::new_accepting(&k_tt, &self.config.f_solve(), "K_r̃r̃ + λ_f I", |_| true)?;
            let coeffs = factor.solve_vec(&self.y);
            let f_at_r = &k_rt * &coeffs;
            let post_cov = k_rr - &k_rt * factor.solve(&k_rt.transpose());
            Ok(KrrStage {
                coeffs,
                f_at_r,
                post_cov,
            })
        })
    }

    fn rcfme(&self) -> Result<&RcfmeStage> {
        cached(&self.rcfme, || {
            let a = &self.krr()?.coeffs;
            let rk = &self.kernels.r_prior;
            let r_tt = gram(rk, &self.d2_r, &self.d2_r)?;
            let r_rt = gram(rk, &self.d1_r, &self.d2_r)?;
            let r_rr = gram(rk, &self.d1_r, &self.d1_r)?;
            let k_rr = gram(&self.kernels.r, &self.d1_r, &self.d1_r)?;
            let r_factor =
                RegFactor::new_accepting(&r_rr, &self.config.solve.jitter_only(), "R_rr", |_| {
                    true
                })?;
            let z = &r_rt * a;
            let r_inv_z = r_factor.solve_vec(&z);
            let b = (&r_tt * a).dot(a);
            let c = z.dot(&r_inv_z);
            Ok(RcfmeStage {
                mean_coeffs: &k_rr * r_inv_z,
                b,
                c,
            })
        })
    }

    /// `D3`-independent matrices and scalars of BayesCFMP.
    pub fn bayes_cfmp_parts(&self) -> Result<&BayesCfmpParts> {
        cached(&self.cfmp3, || self.compute_bayes_cfmp_parts())
    }

    fn compute_bayes_cfmp_parts(&self) -> Result<BayesCfmpParts> {
        let n = self.d1_r.len();
        let jitter_cfg = self.config.solve.jitter_only();
        let f_cfg = self.config.f_solve();
        let (kk, rk) = (&self.kernels.r, &self.kernels.r_prior);

        let r_hat = self.d1_r.concat(&self.d2_r)?;
        let k_hat = gram(kk, &r_hat, &r_hat)?;
        let r_hh = gram(rk, &r_hat, &r_hat)?;
        let r_h_r = r_hh.columns(0, n).into_owned();
        let r_h_t = r_hh.columns(n, self.d2_r.len()).into_owned();
        let r_tt = gram(rk, &self.d2_r, &self.d2_r)?;
        let r_rr = r_hh.view((0, 0), (n, n)).into_owned();
        let k_rr = k_hat.view((0, 0), (n, n)).into_owned();
        let k_r_h = k_hat.rows(0, n).into_owned();

        let k_hat_factor = RegFactor::new_accepting(&k_hat, &jitter_cfg, "K_r̂r̂", |_| true)?;
        let r_rr_factor = RegFactor::new_accepting(&r_rr, &jitter_cfg, "R_rr", |_| true)?;
        let r_tt_noisy = RegFactor::new_accepting(&r_tt, &f_cfg, "R_r̃r̃ + λ_f I", |_| true)?;

        // f under the nuclear prior: posterior mean weights and covariance at r̂.
        let gp_weights = r_tt_noisy.solve_vec(&self.y);
        let mean_coeffs = &k_r_h * k_hat_factor.solve_vec(&(&r_h_t * &gp_weights));
        let r_bar = symmetrize(&r_hh - &r_h_t * r_tt_noisy.solve(&r_h_t.transpose()));

        let theta1 = k_hat_factor.solve(&(&r_h_r * r_rr_factor.solve(&k_rr)));
        let theta4_inner = match self.config.theta4 {
            Theta4Kernel::K => self.krr()?.coeffs.clone(),
            Theta4Kernel::R => gp_weights,
        };
        let theta4 = k_hat_factor.solve_vec(&(&r_h_t * theta4_inner));

        // P = R_r̂r R_rr⁻¹ R_rr̂
        let p = symmetrize(&r_h_r * r_rr_factor.solve(&r_h_r.transpose()));
        let theta2_a = (&r_hh * &theta4).dot(&theta4);
        let theta2_b = (&p * &theta4).dot(&theta4);

        // W = K̂⁻¹ R̄ K̂⁻¹; tr(K̂⁻¹ R̂ K̂⁻¹ R̄) = tr(R̂ W) and tr(P K̂⁻¹ R̄ K̂⁻¹) = tr(P W).
        let half = k_hat_factor.solve(&r_bar);
        let w = symmetrize(k_hat_factor.solve(&half.transpose()));
        let theta3_a = r_hh.dot(&w);
        let theta3_b = p.dot(&w);

        let first_term_form = symmetrize(theta1.transpose() * &r_bar * &theta1);
        Ok(BayesCfmpParts {
            mean_coeffs,
            theta1,
            theta4,
            r_bar,
            theta2_a,
            theta2_b,
            theta3_a,
            theta3_b,
            first_term_form,
        })
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
