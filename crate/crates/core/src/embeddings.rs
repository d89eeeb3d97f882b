//! Conditional and counterfactual mean embeddings, frequentist and Bayesian.
//!
//! A fitted [`CmeModel`] holds the factorizations of `K_xx + λI` and of the
//! nuclear prior Gram `R_yy`. Frequentist embeddings come back as
//! [`WeightedEmbedding`]s over the training outcomes; the Bayesian
//! counterfactual posterior is an [`EmbeddingPosterior`].

use nalgebra::{DMatrix, DVector};

use crate::error::{CfmeError, Result};
use crate::kernel_core::{gram, KernelSpec, PointSet, RegFactor, SolveConfig};

/// Fitted conditional mean embedding of `Y | X`.
#[derive(Debug, Clone)]
pub struct CmeModel {
    train_x: PointSet,
    train_y: PointSet,
    kx: KernelSpec,
    ky: KernelSpec,
    ry: KernelSpec,
    solve: SolveConfig,
    k_factor: RegFactor,
    k_yy: DMatrix<f64>,
    r_factor: RegFactor,
}

/// Fits a CME with the nuclear prior `ry = ∫ ky ky` over `ky`.
pub fn fit_cme(
    train_x: &PointSet,
    train_y: &PointSet,
    kx: &KernelSpec,
    ky: &KernelSpec,
    solve: &SolveConfig,
) -> Result<CmeModel> {
    CmeModel::fit(
        train_x.clone(),
        train_y.clone(),
        kx.clone(),
        ky.clone(),
        KernelSpec::nuclear_of(ky)?,
        *solve,
    )
}

impl CmeModel {
    /// Fits with an explicit prior kernel `ry` over outcomes.
    pub fn fit(
        train_x: PointSet,
        train_y: PointSet,
        kx: KernelSpec,
        ky: KernelSpec,
        ry: KernelSpec,
        solve: SolveConfig,
    ) -> Result<Self> {
        if train_x.is_empty() {
            return Err(CfmeError::input("CME needs at least one training pair"));
        }
        Self::build(train_x, train_y, kx, ky, ry, solve)
    }

    /// A model with no observations: every posterior equals the GP prior.
    pub fn prior_only(
        x_dim: usize,
        y_dim: usize,
        kx: KernelSpec,
        ky: KernelSpec,
        ry: KernelSpec,
        solve: SolveConfig,
    ) -> Result<Self> {
        Self::build(
            PointSet::empty(x_dim),
            PointSet::empty(y_dim),
            kx,
            ky,
            ry,
            solve,
        )
    }

    fn build(
        train_x: PointSet,
        train_y: PointSet,
        kx: KernelSpec,
        ky: KernelSpec,
        ry: KernelSpec,
        solve: SolveConfig,
    ) -> Result<Self> {
        if train_x.len() != train_y.len() {
            return Err(CfmeError::input(format!(
                "{} covariates but {} outcomes",
                train_x.len(),
                train_y.len()
            )));
        }
        if train_x.dim() != kx.dim() || train_y.dim() != ky.dim() || ry.dim() != ky.dim() {
            return Err(CfmeError::input(
                "kernel dimensions do not match the training data",
            ));
        }
        let k_xx = gram(&kx, &train_x, &train_x)?;
        let k_factor = RegFactor::new(&k_xx, &solve)?;
        let k_yy = gram(&ky, &train_y, &train_y)?;
        let r_yy = gram(&ry, &train_y, &train_y)?;
        let r_factor =
            RegFactor::new_accepting(&r_yy, &solve.jitter_only(), "prior Gram R_yy", |_| true)?;
        Ok(Self {
            train_x,
            train_y,
            kx,
            ky,
            ry,
            solve,
            k_factor,
            k_yy,
            r_factor,
        })
    }

    pub fn len(&self) -> usize {
        self.train_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_x.is_empty()
    }

    pub fn train_x(&self) -> &PointSet {
        &self.train_x
    }

    pub fn train_y(&self) -> &PointSet {
        &self.train_y
    }

    pub fn kx(&self) -> &KernelSpec {
        &self.kx
    }

    pub fn ky(&self) -> &KernelSpec {
        &self.ky
    }

    pub fn ry(&self) -> &KernelSpec {
        &self.ry
    }

    pub fn solve_config(&self) -> &SolveConfig {
        &self.solve
    }

    /// Jitter added to `K_xx + λI` and to `R_yy`, respectively.
    pub fn jitters(&self) -> (f64, f64) {
        (self.k_factor.jitter(), self.r_factor.jitter())
    }

    /// `(K_xx + λI)⁻¹ B` through the cached factor.
    pub fn solve_k(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.k_factor.solve(b)
    }

    fn check_x(&self, pts: &PointSet) -> Result<()> {
        if pts.dim() != self.kx.dim() {
            return Err(CfmeError::input(format!(
                "query covariates have dimension {}, model expects {}",
                pts.dim(),
                self.kx.dim()
            )));
        }
        Ok(())
    }

    fn check_y(&self, pts: &PointSet) -> Result<()> {
        if pts.dim() != self.ky.dim() {
            return Err(CfmeError::input(format!(
                "query outcomes have dimension {}, model expects {}",
                pts.dim(),
                self.ky.dim()
            )));
        }
        Ok(())
    }

    /// Embedding of `Y | X = x`: weights `(K_xx + λI)⁻¹ k_Xx`.
    pub fn cme_weights(&self, x: &[f64]) -> Result<WeightedEmbedding> {
        if x.len() != self.kx.dim() {
            return Err(CfmeError::input("query covariate dimension mismatch"));
        }
        self.cfme(&PointSet::new(x.len(), x.to_vec())?)
    }

    /// Counterfactual mean embedding: the CME averaged over `shift_points`.
    pub fn cfme(&self, shift_points: &PointSet) -> Result<WeightedEmbedding> {
        let weights = self.shift_weights(shift_points)?;
        Ok(WeightedEmbedding {
            weights,
            anchors: self.train_y.clone(),
            kernel: self.ky.clone(),
        })
    }

    /// `(1/m) (K_xx + λI)⁻¹ K_Xx' 1`.
    pub(crate) fn shift_weights(&self, shift_points: &PointSet) -> Result<DVector<f64>> {
        if shift_points.is_empty() {
            return Err(CfmeError::input("shift set must be nonempty"));
        }
        self.check_x(shift_points)?;
        let v = shift_average(&self.kx, &self.train_x, shift_points)?;
        Ok(self.k_factor.solve_vec(&v))
    }

    /// Posterior mean vector and covariance matrix of `F(x, y) = μ_{Y|X=x}(y)`
    /// at the paired queries `(qx_i, qy_i)`.
    pub fn bayes_cme_posterior(
        &self,
        qx: &PointSet,
        qy: &PointSet,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if qx.len() != qy.len() {
            return Err(CfmeError::input(
                "query covariates and outcomes differ in count",
            ));
        }
        self.check_x(qx)?;
        self.check_y(qy)?;
        let q = qx.len();
        let prior = gram(&self.kx, qx, qx)?.component_mul(&gram(&self.ry, qy, qy)?);
        if self.is_empty() {
            return Ok((DVector::zeros(q), prior));
        }
        let k_xq = gram(&self.kx, &self.train_x, qx)?;
        let r_yq = gram(&self.ry, &self.train_y, qy)?;
        let a = self.k_factor.solve(&k_xq);
        let b = self.r_factor.solve(&r_yq);
        let kb = &self.k_yy * &b;
        let mean = DVector::from_iterator(q, (0..q).map(|i| a.column(i).dot(&kb.column(i))));
        let reduction = (k_xq.transpose() * &a).component_mul(&(r_yq.transpose() * &b));
        Ok((mean, prior - reduction))
    }

    /// Bayesian counterfactual posterior over the shift sample.
    pub fn embedding_posterior(&self, shift_points: &PointSet) -> Result<EmbeddingPosterior<'_>> {
        EmbeddingPosterior::new(self, shift_points)
    }
}

/// `(1/m) K_{train, shift} 1`.
pub(crate) fn shift_average(
    kernel: &KernelSpec,
    train: &PointSet,
    shift: &PointSet,
) -> Result<DVector<f64>> {
    let k = gram(kernel, train, shift)?;
    let m = shift.len() as f64;
    Ok(DVector::from_iterator(
        k.nrows(),
        k.row_iter().map(|row| row.sum() / m),
    ))
}

/// `(1/m²) 1ᵀ K_{shift, shift} 1`.
pub(crate) fn shift_self_average(kernel: &KernelSpec, shift: &PointSet) -> Result<f64> {
    let m = shift.len() as f64;
    Ok(gram(kernel, shift, shift)?.sum() / (m * m))
}

/// An RKHS element `Σ_i w_i k(anchor_i, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEmbedding {
    pub weights: DVector<f64>,
    pub anchors: PointSet,
    pub kernel: KernelSpec,
}

impl WeightedEmbedding {
    pub fn evaluate(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.kernel.dim() {
            return Err(CfmeError::input("evaluation point dimension mismatch"));
        }
        Ok(self
            .anchors
            .iter()
            .zip(self.weights.iter())
            .map(|(a, w)| w * self.kernel.eval_unchecked(a, y))
            .sum())
    }

    pub fn evaluate_many(&self, ys: &PointSet) -> Result<DVector<f64>> {
        let k = gram(&self.kernel, &self.anchors, ys)?;
        Ok(k.tr_mul(&self.weights))
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.sum()
    }
}

/// `⟨μ̂, f⟩ = Σ_i w_i f(anchor_i)`.
pub fn embedding_expectation(emb: &WeightedEmbedding, f_at_anchors: &[f64]) -> Result<f64> {
    if f_at_anchors.len() != emb.weights.len() {
        return Err(CfmeError::input(format!(
            "{} function values for {} anchors",
            f_at_anchors.len(),
            emb.weights.len()
        )));
    }
    Ok(emb
        .weights
        .iter()
        .zip(f_at_anchors)
        .map(|(w, f)| w * f)
        .sum())
}

/// Posterior GP of the counterfactual mean embedding given a shift sample.
///
/// Mean `m(y) = wᵀ K_yy R_yy⁻¹ r_Yy` and covariance
/// `κ(y, y') = f·r(y, y') − g·r_yY R_yy⁻¹ r_Yy'` with
/// `w = (K_xx + λI)⁻¹ K_xx' 1/m`, `f = 1ᵀ K_x'x' 1/m²`, `g = 1ᵀ K_x'x w/m`.
#[derive(Debug, Clone)]
pub struct EmbeddingPosterior<'a> {
    model: &'a CmeModel,
    shift_points: PointSet,
    weights: DVector<f64>,
    mean_coeffs: DVector<f64>,
    f: f64,
    g: f64,
}

impl<'a> EmbeddingPosterior<'a> {
    pub fn new(model: &'a CmeModel, shift_points: &PointSet) -> Result<Self> {
        let (weights, g) = if model.is_empty() {
            if shift_points.is_empty() {
                return Err(CfmeError::input("shift set must be nonempty"));
            }
            model.check_x(shift_points)?;
            (DVector::zeros(0), 0.0)
        } else {
            let v = shift_average(&model.kx, &model.train_x, shift_points)?;
            let w = model.shift_weights(shift_points)?;
            let g = w.dot(&v);
            (w, g)
        };
        let f = shift_self_average(&model.kx, shift_points)?;
        let kw = &model.k_yy * &weights;
        let mean_coeffs = model.r_factor.solve_vec(&kw);
        Ok(Self {
            model,
            shift_points: shift_points.clone(),
            weights,
            mean_coeffs,
            f,
            g,
        })
    }

    pub fn shift_points(&self) -> &PointSet {
        &self.shift_points
    }

    /// Averaged CME weights `w`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// `(1/m²) 1ᵀ K_x'x' 1`.
    pub fn f(&self) -> f64 {
        self.f
    }

    /// `(1/m²) 1ᵀ K_x'x (K_xx + λI)⁻¹ K_xx' 1`.
    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn mean(&self, y: &[f64]) -> Result<f64> {
        let ys = self.single(y)?;
        Ok(self.mean_many(&ys)?[0])
    }

    pub fn mean_many(&self, ys: &PointSet) -> Result<DVector<f64>> {
        self.model.check_y(ys)?;
        let r = gram(&self.model.ry, &self.model.train_y, ys)?;
        Ok(r.tr_mul(&self.mean_coeffs))
    }

    pub fn covariance(&self, y: &[f64], y2: &[f64]) -> Result<f64> {
        let a = self.single(y)?;
        let b = self.single(y2)?;
        Ok(self.cross_covariance(&a, &b)?[(0, 0)])
    }

    /// `κ(ys_i, ys2_j)` for all pairs.
    pub fn cross_covariance(&self, ys: &PointSet, ys2: &PointSet) -> Result<DMatrix<f64>> {
        self.model.check_y(ys)?;
        self.model.check_y(ys2)?;
        let prior = gram(&self.model.ry, ys, ys2)? * self.f;
        if self.model.is_empty() {
            return Ok(prior);
        }
        let r1 = gram(&self.model.ry, &self.model.train_y, ys)?;
        let r2 = gram(&self.model.ry, &self.model.train_y, ys2)?;
        let quad = r1.transpose() * self.model.r_factor.solve(&r2);
        Ok(prior - quad * self.g)
    }

    /// `(m(y), κ(y, y2))`.
    pub fn posterior(&self, y: &[f64], y2: &[f64]) -> Result<(f64, f64)> {
        Ok((self.mean(y)?, self.covariance(y, y2)?))
    }

    fn single(&self, y: &[f64]) -> Result<PointSet> {
        if y.len() != self.model.ky.dim() {
            return Err(CfmeError::input("query outcome dimension mismatch"));
        }
        PointSet::new(y.len(), y.to_vec())
    }
}
