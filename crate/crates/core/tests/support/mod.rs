//! Independent dense-matrix transcriptions of the closed forms, used as test
//! oracles. Kernels are re-derived here and every inverse is an explicit LU
//! inverse, so nothing is shared with the Cholesky-based library path.
#![allow(dead_code)]

pub mod suites;

use bayes_cfme::estimators::{FusionConfig, FusionInputs, FusionKernels, Theta4Kernel};
use bayes_cfme::{KernelSpec, PointSet, SolveConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Points = Vec<Vec<f64>>;

pub fn rbf(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    (-0.5 * s).exp()
}

/// Closed-form self-convolution of the unit-amplitude RBF.
pub fn nuclear(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    let vol: f64 = ls
        .iter()
        .map(|l| (std::f64::consts::PI * l * l).sqrt())
        .product();
    vol * (-0.25 * s).exp()
}

pub fn mat(k: impl Fn(&[f64], &[f64]) -> f64, a: &Points, b: &Points) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| k(&a[i], &b[j]))
}

pub fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone()
        .try_inverse()
        .expect("oracle matrix is invertible")
}

pub fn plus_diag(m: &DMatrix<f64>, v: f64) -> DMatrix<f64> {
    m + DMatrix::identity(m.nrows(), m.ncols()) * v
}

pub fn ones(n: usize) -> DMatrix<f64> {
    DMatrix::from_element(n, 1, 1.0)
}

pub fn scalar(m: DMatrix<f64>) -> f64 {
    assert_eq!(m.shape(), (1, 1));
    m[(0, 0)]
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn scalars(v: &[f64]) -> Points {
    v.iter().map(|x| vec![*x]).collect()
}

/// Conditional-mean-embedding problem: training pairs and hyperparameters.
#[derive(Debug, Clone)]
pub struct CmeCase {
    pub x: Points,
    pub y: Points,
    pub lx: Vec<f64>,
    pub ly: Vec<f64>,
    pub lambda: f64,
}

impl CmeCase {
    /// `(mean, covariance)` of the CME posterior at paired queries.
    pub fn bayes_cme(&self, qx: &Points, qy: &Points) -> (DVector<f64>, DMatrix<f64>) {
        let kx = |a: &[f64], b: &[f64]| rbf(a, b, &self.lx);
        let ky = |a: &[f64], b: &[f64]| rbf(a, b, &self.ly);
        let ry = |a: &[f64], b: &[f64]| nuclear(a, b, &self.ly);
        let kinv = inv(&plus_diag(&mat(kx, &self.x, &self.x), self.lambda));
        let rinv = inv(&mat(ry, &self.y, &self.y));
        let kyy = mat(ky, &self.y, &self.y);
        let q = qx.len();
        let mut mean = DVector::zeros(q);
        let mut cov = DMatrix::zeros(q, q);
        for i in 0..q {
            let k_i = mat(kx, &vec![qx[i].clone()], &self.x);
            let r_i = mat(ry, &self.y, &vec![qy[i].clone()]);
            mean[i] = scalar(&k_i * &kinv * &kyy * &rinv * &r_i);
            for j in 0..q {
                let k_j = mat(kx, &self.x, &vec![qx[j].clone()]);
                let r_j = mat(ry, &self.y, &vec![qy[j].clone()]);
                cov[(i, j)] = kx(&qx[i], &qx[j]) * ry(&qy[i], &qy[j])
                    - scalar(&k_i * &kinv * &k_j) * scalar(r_i.transpose() * &rinv * &r_j);
            }
        }
        (mean, cov)
    }

    /// `(m(y), κ(y, y2))` of the counterfactual posterior over `shift`.
    pub fn bayes_cfme(&self, shift: &Points, y: &[f64], y2: &[f64]) -> (f64, f64) {
        let kx = |a: &[f64], b: &[f64]| rbf(a, b, &self.lx);
        let ky = |a: &[f64], b: &[f64]| rbf(a, b, &self.ly);
        let ry = |a: &[f64], b: &[f64]| nuclear(a, b, &self.ly);
        let m = shift.len();
        let one = ones(m);
        let kinv = inv(&plus_diag(&mat(kx, &self.x, &self.x), self.lambda));
        let rinv = inv(&mat(ry, &self.y, &self.y));
        let ksx = mat(kx, shift, &self.x);
        let kss = mat(kx, shift, shift);
        let r_y = mat(ry, &self.y, &vec![y.to_vec()]);
        let r_y2 = mat(ry, &self.y, &vec![y2.to_vec()]);
        let mean =
            scalar(one.transpose() * &ksx * &kinv * mat(ky, &self.y, &self.y) * &rinv * &r_y)
                / m as f64;
        let inner = &kss * ry(y, y2)
            - &ksx * &kinv * ksx.transpose() * scalar(r_y.transpose() * &rinv * &r_y2);
        let cov = scalar(one.transpose() * inner * &one) / (m * m) as f64;
        (mean, cov)
    }

    /// Frequentist CFME evaluated at `y`.
    pub fn cfme_eval(&self, shift: &Points, y: &[f64]) -> f64 {
        let kx = |a: &[f64], b: &[f64]| rbf(a, b, &self.lx);
        let ky = |a: &[f64], b: &[f64]| rbf(a, b, &self.ly);
        let kinv = inv(&plus_diag(&mat(kx, &self.x, &self.x), self.lambda));
        let w = kinv * mat(kx, &self.x, shift) * ones(shift.len()) / shift.len() as f64;
        scalar(w.transpose() * mat(ky, &self.y, &vec![y.to_vec()]))
    }
}

/// Data-fusion problem with one-dimensional outcomes.
#[derive(Debug, Clone)]
pub struct FusionCase {
    pub x: Points,
    pub r: Vec<f64>,
    pub rt: Vec<f64>,
    pub y: Vec<f64>,
    pub xs: Points,
    pub lx: Vec<f64>,
    pub lr: f64,
    pub lambda: f64,
    pub lambda_f: f64,
}

#[derive(Debug, Clone)]
pub struct BayesCfmpTerms {
    pub mean: f64,
    pub first: f64,
    pub theta1: DMatrix<f64>,
    pub theta4: DVector<f64>,
    pub r_bar: DMatrix<f64>,
    pub theta2_a: f64,
    pub theta2_b: f64,
    pub theta3_a: f64,
    pub theta3_b: f64,
    pub f: f64,
    pub g: f64,
    pub variance: f64,
}

impl FusionCase {
    pub fn random(rng: &mut ChaCha8Rng, n: usize, m: usize, l: usize) -> Self {
        let x: Points = (0..n)
            .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
            .collect();
        let mut r: Vec<f64> = x
            .iter()
            .map(|p| 0.5 * (p[0] + p[1]) + 0.3 * rng.random_range(-1.0..1.0))
            .collect();
        let mut rt: Vec<f64> = Vec::with_capacity(m);
        // Keep every outcome location apart so that no Gram matrix needs jitter
        // and the plain LU inverses below stay accurate.
        let sep = (4.0 / (n + m) as f64).min(0.2);
        for i in 0..n {
            while r[..i].iter().any(|o| (o - r[i]).abs() < sep) {
                r[i] = rng.random_range(-3.0..3.0);
            }
        }
        while rt.len() < m {
            let v = rng.random_range(-3.0..3.0);
            if r.iter().chain(rt.iter()).all(|o| (o - v).abs() >= sep) {
                rt.push(v);
            }
        }
        let y: Vec<f64> = rt
            .iter()
            .map(|v| v.sin() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let xs: Points = (0..l)
            .map(|_| vec![rng.random_range(-2.0..4.0), rng.random_range(-2.0..4.0)])
            .collect();
        Self {
            x,
            r,
            rt,
            y,
            xs,
            lx: vec![rng.random_range(0.6..1.2), rng.random_range(0.6..1.2)],
            lr: rng.random_range(0.4..0.7),
            lambda: rng.random_range(0.01..0.2),
            lambda_f: rng.random_range(0.01..0.2),
        }
    }

    /// Library inputs for the same problem. `base_as_prior` substitutes `R := K`.
    pub fn inputs(&self, theta4: Theta4Kernel, base_as_prior: bool) -> FusionInputs {
        let x = KernelSpec::rbf(self.lx.clone(), 1.0).unwrap();
        let r = KernelSpec::rbf(vec![self.lr], 1.0).unwrap();
        let mut kernels = FusionKernels::new(x, r.clone()).unwrap();
        if base_as_prior {
            kernels.r_prior = r;
        }
        FusionInputs {
            d1_x: PointSet::from_rows(&self.x).unwrap(),
            d1_r: PointSet::from_scalars(&self.r),
            d2_r: PointSet::from_scalars(&self.rt),
            d2_y: self.y.clone(),
            d3_x: PointSet::from_rows(&self.xs).unwrap(),
            kernels,
            config: FusionConfig {
                solve: SolveConfig::with_ridge(self.lambda),
                lambda_f: self.lambda_f,
                theta4,
            },
        }
    }

    pub fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn kx(&self) -> impl Fn(&[f64], &[f64]) -> f64 + '_ {
        move |a, b| rbf(a, b, &self.lx)
    }

    fn kr(&self) -> impl Fn(&[f64], &[f64]) -> f64 + '_ {
        move |a, b| rbf(a, b, &[self.lr])
    }

    fn rr(&self) -> impl Fn(&[f64], &[f64]) -> f64 + '_ {
        move |a, b| nuclear(a, b, &[self.lr])
    }

    fn yv(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.y.len(), 1, &self.y)
    }

    /// `E`, `F`, `G` as `1 x N` matrix and scalars.
    pub fn efg(&self) -> (DMatrix<f64>, f64, f64) {
        let l = self.xs.len() as f64;
        let one = ones(self.xs.len());
        let kinv = inv(&plus_diag(&mat(self.kx(), &self.x, &self.x), self.lambda));
        let ksx = mat(self.kx(), &self.xs, &self.x);
        let e = one.transpose() * &ksx * &kinv / l;
        let f = scalar(one.transpose() * mat(self.kx(), &self.xs, &self.xs) * &one) / (l * l);
        let g = scalar(one.transpose() * &ksx * &kinv * ksx.transpose() * &one) / (l * l);
        (e, f, g)
    }

    pub fn plugin(&self) -> f64 {
        let (e, _, _) = self.efg();
        let (r, rt) = (scalars(&self.r), scalars(&self.rt));
        let a = inv(&plus_diag(&mat(self.kr(), &rt, &rt), self.lambda_f)) * self.yv();
        scalar(e * mat(self.kr(), &r, &rt) * a)
    }

    pub fn cfmp(&self) -> (f64, f64) {
        let (e, _, _) = self.efg();
        let (r, rt) = (scalars(&self.r), scalars(&self.rt));
        let noisy_inv = inv(&plus_diag(&mat(self.kr(), &rt, &rt), self.lambda_f));
        let k_r_rt = mat(self.kr(), &r, &rt);
        let mean = scalar(&e * &k_r_rt * &noisy_inv * self.yv());
        let k_tilde = mat(self.kr(), &r, &r) - &k_r_rt * &noisy_inv * k_r_rt.transpose();
        (mean, scalar(&e * k_tilde * e.transpose()))
    }

    /// `(μ₂, σ²₂, B, C, F, G)`; `use_base_as_prior` substitutes `R := K`.
    pub fn bayes_rcfme(&self, use_base_as_prior: bool) -> (f64, f64, f64, f64, f64, f64) {
        let (e, f, g) = self.efg();
        let (r, rt) = (scalars(&self.r), scalars(&self.rt));
        let rk = |a: &[f64], b: &[f64]| {
            if use_base_as_prior {
                (self.kr())(a, b)
            } else {
                (self.rr())(a, b)
            }
        };
        let a = inv(&plus_diag(&mat(self.kr(), &rt, &rt), self.lambda_f)) * self.yv();
        let r_rr_inv = inv(&mat(rk, &r, &r));
        let r_r_rt = mat(rk, &r, &rt);
        let mean = scalar(&e * mat(self.kr(), &r, &r) * &r_rr_inv * &r_r_rt * &a);
        let b = scalar(a.transpose() * mat(rk, &rt, &rt) * &a);
        let c = scalar(a.transpose() * r_r_rt.transpose() * &r_rr_inv * &r_r_rt * &a);
        (mean, b * f - c * g, b, c, f, g)
    }

    pub fn bayes_cfmp(&self, theta4_uses_r: bool) -> BayesCfmpTerms {
        let (e, f, g) = self.efg();
        let (r, rt) = (scalars(&self.r), scalars(&self.rt));
        let hat: Points = r.iter().chain(rt.iter()).cloned().collect();
        let y = self.yv();
        let k_hat_inv = inv(&mat(self.kr(), &hat, &hat));
        let r_hh = mat(self.rr(), &hat, &hat);
        let r_h_r = mat(self.rr(), &hat, &r);
        let r_h_t = mat(self.rr(), &hat, &rt);
        let r_rr_inv = inv(&mat(self.rr(), &r, &r));
        let r_tt_noisy_inv = inv(&plus_diag(&mat(self.rr(), &rt, &rt), self.lambda_f));
        let k_tt_noisy_inv = inv(&plus_diag(&mat(self.kr(), &rt, &rt), self.lambda_f));

        let mean =
            scalar(&e * mat(self.kr(), &r, &hat) * &k_hat_inv * &r_h_t * &r_tt_noisy_inv * &y);
        let r_bar = &r_hh - &r_h_t * &r_tt_noisy_inv * r_h_t.transpose();
        let theta1 = &k_hat_inv * &r_h_r * &r_rr_inv * mat(self.kr(), &r, &r);
        let inner = if theta4_uses_r {
            &r_tt_noisy_inv
        } else {
            &k_tt_noisy_inv
        };
        let theta4 = &k_hat_inv * &r_h_t * inner * &y;
        let p = &r_h_r * &r_rr_inv * r_h_r.transpose();
        let theta2_a = scalar(theta4.transpose() * &r_hh * &theta4);
        let theta2_b = scalar(theta4.transpose() * &p * &theta4);
        let theta3_a = (&k_hat_inv * &r_hh * &k_hat_inv * &r_bar).trace();
        let theta3_b = (&p * &k_hat_inv * &r_bar * &k_hat_inv).trace();
        let first = scalar(&e * theta1.transpose() * &r_bar * &theta1 * e.transpose());
        let variance = first + theta2_a * f - theta2_b * g + theta3_a * f - theta3_b * g;
        BayesCfmpTerms {
            mean,
            first,
            theta1,
            theta4: theta4.column(0).into_owned(),
            r_bar,
            theta2_a,
            theta2_b,
            theta3_a,
            theta3_b,
            f,
            g,
            variance,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}
