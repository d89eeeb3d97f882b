use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PointSet;
use crate::error::{CfmeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    /// Anisotropic squared-exponential kernel.
    Rbf,
    /// Lebesgue self-convolution of an RBF base kernel. The spec stores the
    /// base kernel's lengthscales and amplitude.
    NuclearRbf,
}

/// A positive-definite kernel with per-dimension lengthscales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscales: Vec<f64>,
    amplitude: f64,
}

impl KernelSpec {
    pub fn rbf(lengthscales: Vec<f64>, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Rbf, lengthscales, amplitude)
    }

    /// Nuclear-dominant kernel `r(y, y') = ∫ k(y, u) k(u, y') du` over the RBF `base`.
    pub fn nuclear_of(base: &KernelSpec) -> Result<Self> {
        if base.family != KernelFamily::Rbf {
            return Err(CfmeError::input(
                "nuclear kernels are only defined over an RBF base",
            ));
        }
        Self::new(
            KernelFamily::NuclearRbf,
            base.lengthscales.clone(),
            base.amplitude,
        )
    }

    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, amplitude: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(CfmeError::input("kernel needs at least one lengthscale"));
        }
        if lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(CfmeError::input(format!(
                "lengthscales must be positive, got {lengthscales:?}"
            )));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(CfmeError::input(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            family,
            lengthscales,
            amplitude,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `k(x, x)`, constant for both stationary families.
    pub fn diagonal(&self) -> f64 {
        match self.family {
            KernelFamily::Rbf => self.amplitude,
            KernelFamily::NuclearRbf => self.nuclear_scale(),
        }
    }

    fn nuclear_scale(&self) -> f64 {
        let vol: f64 = self
            .lengthscales
            .iter()
            .map(|l| (PI * l * l).sqrt())
            .product();
        self.amplitude * self.amplitude * vol
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(CfmeError::input(format!(
                "kernel of dimension {} evaluated at points of dimension {} and {}",
                self.dim(),
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        // Squared distance is summed per dimension in a fixed order, so
        // k(a, b) == k(b, a) bit for bit.
        let scaled: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = x - y;
                d * d / (l * l)
            })
            .sum();
        match self.family {
            KernelFamily::Rbf => self.amplitude * (-0.5 * scaled).exp(),
            KernelFamily::NuclearRbf => self.nuclear_scale() * (-0.25 * scaled).exp(),
        }
    }
}

pub fn rbf_eval(x: &[f64], x2: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::Rbf {
        return Err(CfmeError::input("rbf_eval called with a non-RBF kernel"));
    }
    spec.eval(x, x2)
}

pub fn nuclear_rbf_eval(y: &[f64], y2: &[f64], spec: &KernelSpec) -> Result<f64> {
    if spec.family != KernelFamily::NuclearRbf {
        return Err(CfmeError::input(
            "nuclear_rbf_eval called with a non-nuclear kernel",
        ));
    }
    spec.eval(y, y2)
}

/// Dense Gram matrix with entry `(i, j) = k(rows_i, cols_j)`.
///
/// Empty point sets give `0 x n` or `n x 0` matrices. When `rows` and `cols`
/// are the same set the result is filled symmetrically.
pub fn gram(spec: &KernelSpec, rows: &PointSet, cols: &PointSet) -> Result<DMatrix<f64>> {
    let (n, m) = (rows.len(), cols.len());
    if (n > 0 && rows.dim() != spec.dim()) || (m > 0 && cols.dim() != spec.dim()) {
        return Err(CfmeError::input(format!(
            "Gram of a {}-dimensional kernel over points of dimension {} and {}",
            spec.dim(),
            rows.dim(),
            cols.dim()
        )));
    }
    if std::ptr::eq(rows, cols) || rows == cols {
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            let pi = rows.point(i);
            for j in i..n {
                let v = spec.eval_unchecked(pi, rows.point(j));
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        return Ok(out);
    }
    Ok(DMatrix::from_fn(n, m, |i, j| {
        spec.eval_unchecked(rows.point(i), cols.point(j))
    }))
}

/// Per-dimension median of pairwise absolute differences over distinct pairs.
///
/// Falls back to 1.0 for a dimension with fewer than two distinct values or a
/// zero median.
pub fn median_heuristic(points: &PointSet) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(CfmeError::input(
            "median heuristic needs at least one point",
        ));
    }
    let n = points.len();
    let mut out = Vec::with_capacity(points.dim());
    for d in 0..points.dim() {
        let col = points.column(d);
        let mut diffs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                diffs.push((col[i] - col[j]).abs());
            }
        }
        let med = median(&mut diffs);
        out.push(match med {
            Some(m) if m > 0.0 && m.is_finite() => m,
            _ => 1.0,
        });
    }
    Ok(out)
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    })
}
