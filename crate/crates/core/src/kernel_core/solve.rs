use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{CfmeError, NumericalError, Result};

/// Ridge and jitter settings for solves against `M + ridge·I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub ridge: f64,
    pub jitter_start: f64,
    pub jitter_max: f64,
    pub jitter_factor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-2,
            jitter_start: 1e-8,
            jitter_max: 1e-2,
            jitter_factor: 10.0,
        }
    }
}

impl SolveConfig {
    pub fn with_ridge(ridge: f64) -> Self {
        Self {
            ridge,
            ..Self::default()
        }
    }

    /// No ridge, jitter escalation only. Used for the unregularised `R⁻¹` solves.
    pub fn jitter_only(&self) -> Self {
        Self {
            ridge: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(CfmeError::input(format!(
                "ridge must be nonnegative, got {}",
                self.ridge
            )));
        }
        if !(self.jitter_start > 0.0
            && self.jitter_start <= self.jitter_max
            && self.jitter_max.is_finite())
        {
            return Err(CfmeError::input(format!(
                "need 0 < jitter_start <= jitter_max, got {} and {}",
                self.jitter_start, self.jitter_max
            )));
        }
        if self.jitter_factor.is_nan() || self.jitter_factor <= 1.0 {
            return Err(CfmeError::input("jitter_factor must exceed 1"));
        }
        Ok(())
    }

    /// 0, then `jitter_start` growing geometrically up to `jitter_max`.
    fn jitters(&self) -> impl Iterator<Item = f64> + '_ {
        let steps = std::iter::successors(Some(self.jitter_start), move |j| {
            let next = j * self.jitter_factor;
            (next <= self.jitter_max * (1.0 + 1e-12)).then_some(next)
        });
        std::iter::once(0.0).chain(steps)
    }
}

/// Cholesky factor of `M + (ridge + jitter)·I`.
#[derive(Debug, Clone)]
pub struct RegFactor {
    chol: Option<Cholesky<f64, Dyn>>,
    n: usize,
    ridge: f64,
    jitter: f64,
}

impl RegFactor {
    /// Factorizes `m + ridge·I`, escalating jitter while the factorization
    /// fails. A pivot `L_ii² < n·ε·max|M_ii|` counts as a failure.
    pub fn new(m: &DMatrix<f64>, cfg: &SolveConfig) -> Result<Self> {
        Self::new_accepting(m, cfg, "regularized solve", |_| true)
    }

    pub(crate) fn new_accepting(
        m: &DMatrix<f64>,
        cfg: &SolveConfig,
        context: &str,
        accept: impl Fn(&RegFactor) -> bool,
    ) -> Result<Self> {
        cfg.validate()?;
        if !m.is_square() {
            return Err(CfmeError::input(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        if n == 0 {
            return Ok(Self {
                chol: None,
                n,
                ridge: cfg.ridge,
                jitter: 0.0,
            });
        }
        let diag = m.diagonal();
        let max_diag = diag.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let min_diag = diag.iter().copied().fold(f64::INFINITY, f64::min);
        let mut last = 0.0;
        for jitter in cfg.jitters() {
            last = jitter;
            let shift = cfg.ridge + jitter;
            let mut a = m.clone();
            for i in 0..n {
                a[(i, i)] += shift;
            }
            let floor = n as f64 * f64::EPSILON * (max_diag + shift);
            if let Some(chol) = Cholesky::new(a) {
                let l = chol.l_dirty();
                let ok = (0..n).all(|i| {
                    let p = l[(i, i)];
                    p.is_finite() && p * p >= floor
                });
                if ok {
                    let f = Self {
                        chol: Some(chol),
                        n,
                        ridge: cfg.ridge,
                        jitter,
                    };
                    if accept(&f) {
                        return Ok(f);
                    }
                }
            }
        }
        Err(NumericalError {
            context: context.to_string(),
            size: n,
            last_jitter: last,
            max_diagonal: max_diag,
            min_diagonal: min_diag,
        }
        .into())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Jitter that was added on top of the ridge.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.n, "right-hand side has wrong row count");
        match &self.chol {
            Some(c) => c.solve(b),
            None => b.clone(),
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        assert_eq!(b.len(), self.n, "right-hand side has wrong length");
        match &self.chol {
            Some(c) => c.solve(b),
            None => b.clone(),
        }
    }

    /// Explicit inverse of the shifted matrix.
    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => c.inverse(),
            None => DMatrix::zeros(0, 0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegSolution {
    pub x: DMatrix<f64>,
    pub jitter: f64,
}

/// Solves `(M + ridge·I + jitter·I) X = B`.
///
/// Jitter starts at zero and escalates until both the factorization succeeds
/// and the residual satisfies `‖(M + (ridge + jitter) I) X − B‖_F ≤ 1e-8 ‖B‖_F`.
pub fn reg_solve(m: &DMatrix<f64>, cfg: &SolveConfig, b: &DMatrix<f64>) -> Result<RegSolution> {
    if b.nrows() != m.nrows() {
        return Err(CfmeError::input(format!(
            "right-hand side has {} rows, matrix has {}",
            b.nrows(),
            m.nrows()
        )));
    }
    let b_norm = b.norm();
    let residual_ok = |f: &RegFactor| {
        let x = f.solve(b);
        let mut r = m * &x - b;
        r += &x * (f.ridge + f.jitter);
        r.norm() <= 1e-8 * b_norm
    };
    let factor = RegFactor::new_accepting(m, cfg, "regularized solve", residual_ok)?;
    Ok(RegSolution {
        x: factor.solve(b),
        jitter: factor.jitter,
    })
}
