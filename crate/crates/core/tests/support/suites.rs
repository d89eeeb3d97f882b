//! Whole-criterion checks shared by the integration tests and the acceptance
//! target. Each returns a one-line summary on success and the first violation
//! on failure.

use bayes_cfme::embeddings::CmeModel;
use bayes_cfme::estimators::Theta4Kernel;
use bayes_cfme::kernel_core::nuclear_rbf_eval;
use bayes_cfme::{KernelSpec, PointSet, SolveConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{close, linspace, rbf, CmeCase, FusionCase, Points};

pub type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn random_cme(rng: &mut ChaCha8Rng, n: usize) -> CmeCase {
    let x: Points = (0..n)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let y: Points = (0..n).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
    CmeCase {
        x,
        y,
        lx: vec![rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)],
        ly: vec![rng.random_range(0.3..1.0)],
        lambda: rng.random_range(0.01..0.3),
    }
}

/// Like [`random_cme`] but with outcomes on a jittered lattice and an outcome
/// lengthscale below the lattice spacing. The `R := K` identity cancels
/// `K_yy K_yy⁻¹`, which is only exact in floating point when `K_yy` is well
/// conditioned; near-duplicate outcomes would turn it into a test of jitter.
pub fn spread_cme(rng: &mut ChaCha8Rng, n: usize) -> CmeCase {
    let mut case = random_cme(rng, n);
    let spacing = 6.0 / n as f64;
    for (i, y) in case.y.iter_mut().enumerate() {
        y[0] = -3.0 + spacing * (i as f64 + rng.random_range(0.0..0.3));
    }
    case.ly = vec![spacing * rng.random_range(0.4..0.8)];
    case
}

/// Fits `case` with either the nuclear prior or `R := K`.
pub fn fit_cme(case: &CmeCase, base_as_prior: bool) -> CmeModel {
    let ky = KernelSpec::rbf(case.ly.clone(), 1.0).unwrap();
    let ry = if base_as_prior {
        ky.clone()
    } else {
        KernelSpec::nuclear_of(&ky).unwrap()
    };
    CmeModel::fit(
        PointSet::from_rows(&case.x).unwrap(),
        PointSet::from_rows(&case.y).unwrap(),
        KernelSpec::rbf(case.lx.clone(), 1.0).unwrap(),
        ky,
        ry,
        SolveConfig::with_ridge(case.lambda),
    )
    .unwrap()
}

fn random_shift(rng: &mut ChaCha8Rng, m: usize) -> Points {
    (0..m)
        .map(|_| vec![rng.random_range(-2.0..4.0), rng.random_range(-2.0..4.0)])
        .collect()
}

/// Estimator reductions and the `R := K` embedding identity.
pub fn reductions(instances: usize, seed: u64) -> Outcome {
    let mut rng = FusionCase::rng(seed);
    let (mut worst_cfmp, mut worst_rcfme, mut worst_embed) = (0.0f64, 0.0f64, 0.0f64);
    let y_grid = linspace(-4.0, 4.0, 50);
    for _ in 0..instances {
        let (n, m, l) = (
            rng.random_range(2..=20),
            rng.random_range(2..=20),
            rng.random_range(1..=10),
        );
        let case = FusionCase::random(&mut rng, n, m, l);
        let inputs = case.inputs(Theta4Kernel::K, true);
        let model = inputs.fit().map_err(|e| e.to_string())?;
        let plugin = model
            .plugin_point(&inputs.d3_x)
            .map_err(|e| e.to_string())?;
        let cfmp = model.cfmp(&inputs.d3_x).map_err(|e| e.to_string())?.mean;
        let rcfme = model
            .bayes_rcfme(&inputs.d3_x)
            .map_err(|e| e.to_string())?
            .mean;
        let scale = plugin.abs().max(1.0);
        worst_cfmp = worst_cfmp.max((cfmp - plugin).abs() / scale);
        worst_rcfme = worst_rcfme.max((rcfme - plugin).abs() / scale);
        check(worst_cfmp <= 1e-12, || {
            format!("cfmp mean {cfmp:e} vs plugin {plugin:e} (n={n}, m={m}, l={l})")
        })?;
        check(worst_rcfme <= 1e-8, || {
            format!("bayes_rcfme mean with R:=K {rcfme:e} vs plugin {plugin:e}")
        })?;

        let cme = spread_cme(&mut rng, n);
        let model = fit_cme(&cme, true);
        let shift = PointSet::from_rows(&random_shift(&mut rng, l)).unwrap();
        let freq = model.cfme(&shift).map_err(|e| e.to_string())?;
        let post = model
            .embedding_posterior(&shift)
            .map_err(|e| e.to_string())?;
        for &y in &y_grid {
            let a = post.mean(&[y]).map_err(|e| e.to_string())?;
            let b = freq.evaluate(&[y]).map_err(|e| e.to_string())?;
            worst_embed = worst_embed.max((a - b).abs() / b.abs().max(1.0));
        }
        check(worst_embed <= 1e-10, || {
            format!("Bayes mean with R:=K deviates from CFME by {worst_embed:e} (n={n})")
        })?;
    }
    Ok(format!(
        "{instances} instances; max rel. deviation cfmp {worst_cfmp:.1e}, bayes_rcfme {worst_rcfme:.1e}, embedding {worst_embed:.1e}"
    ))
}

/// Every closed form against the LU transcription.
pub fn transcription(instances: usize, seed: u64) -> Outcome {
    let mut rng = FusionCase::rng(seed);
    let mut worst = 0.0f64;
    let mut compare = |what: &str, got: f64, want: f64, tol: f64| -> Result<(), String> {
        let dev = (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(dev);
        check(close(got, want, tol), || {
            format!("{what}: library {got:e} vs transcription {want:e}")
        })
    };
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let mut cme = random_cme(&mut rng, n);
        // Spread the outcomes so the prior Gram stays well conditioned for LU.
        for (i, y) in cme.y.iter_mut().enumerate() {
            y[0] = -2.5 + 0.9 * i as f64 + rng.random_range(0.0..0.3);
        }
        let model = fit_cme(&cme, false);
        let qx = random_shift(&mut rng, 4);
        let qy: Points = (0..4).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let (mean, cov) = model
            .bayes_cme_posterior(
                &PointSet::from_rows(&qx).unwrap(),
                &PointSet::from_rows(&qy).unwrap(),
            )
            .map_err(|e| e.to_string())?;
        let (want_mean, want_cov) = cme.bayes_cme(&qx, &qy);
        for i in 0..qx.len() {
            compare("conditional posterior mean", mean[i], want_mean[i], 1e-8)?;
            for j in 0..qx.len() {
                compare(
                    "conditional posterior covariance",
                    cov[(i, j)],
                    want_cov[(i, j)],
                    1e-8,
                )?;
            }
        }
        let shift = random_shift(&mut rng, 3);
        let post = model
            .embedding_posterior(&PointSet::from_rows(&shift).unwrap())
            .map_err(|e| e.to_string())?;
        let (y, y2) = ([rng.random_range(-3.0..3.0)], [rng.random_range(-3.0..3.0)]);
        let (m, k) = post.posterior(&y, &y2).map_err(|e| e.to_string())?;
        let (wm, wk) = cme.bayes_cfme(&shift, &y, &y2);
        compare("counterfactual posterior mean", m, wm, 1e-8)?;
        compare("counterfactual posterior covariance", k, wk, 1e-8)?;

        let (n, m, l) = (
            rng.random_range(2..=5),
            rng.random_range(2..=5),
            rng.random_range(1..=3),
        );
        let case = FusionCase::random(&mut rng, n, m, l);
        let theta4 = if rng.random_bool(0.5) {
            Theta4Kernel::K
        } else {
            Theta4Kernel::R
        };
        let inputs = case.inputs(theta4, false);
        let fm = inputs.fit().map_err(|e| e.to_string())?;
        let d3 = &inputs.d3_x;
        let cf = fm.cfmp(d3).map_err(|e| e.to_string())?;
        let (m1, v1) = case.cfmp();
        compare("cfmp mean", cf.mean, m1, 1e-8)?;
        compare("cfmp variance", cf.raw_variance, v1, 1e-8)?;
        let t2 = fm.bayes_rcfme_terms(d3).map_err(|e| e.to_string())?;
        let (m2, v2, b, c, f, g) = case.bayes_rcfme(false);
        for (what, got, want) in [
            ("rcfme mean", t2.mean, m2),
            ("rcfme variance", t2.raw_variance(), v2),
            ("B", t2.b, b),
            ("C", t2.c, c),
            ("F", t2.f, f),
            ("G", t2.g, g),
        ] {
            compare(what, got, want, 1e-8)?;
        }
        let t3 = fm.bayes_cfmp_terms(d3).map_err(|e| e.to_string())?;
        let p3 = fm.bayes_cfmp_parts().map_err(|e| e.to_string())?;
        let w = case.bayes_cfmp(theta4 == Theta4Kernel::R);
        for (what, got, want) in [
            ("cfmp3 mean", t3.mean, w.mean),
            ("first term", t3.first, w.first),
            ("theta2 a", t3.theta2_a, w.theta2_a),
            ("theta2 b", t3.theta2_b, w.theta2_b),
            ("theta3 a", t3.theta3_a, w.theta3_a),
            ("theta3 b", t3.theta3_b, w.theta3_b),
            ("cfmp3 variance", t3.raw_variance(), w.variance),
        ] {
            compare(what, got, want, 1e-8)?;
        }
        for (got, want) in p3.theta1.iter().zip(w.theta1.iter()) {
            compare("theta1 entry", *got, *want, 1e-8)?;
        }
        for (got, want) in p3.r_bar.iter().zip(w.r_bar.iter()) {
            compare("R bar entry", *got, *want, 1e-8)?;
        }
        for (got, want) in p3.theta4.iter().zip(w.theta4.iter()) {
            compare("theta4 entry", *got, *want, 1e-8)?;
        }
    }
    Ok(format!(
        "{instances} instances across all closed forms; max rel. deviation {worst:.1e}"
    ))
}

/// `∫ k(y, u) k(u, y2) du` by composite Simpson on a window wide enough that
/// the truncated tails are far below double precision.
pub fn convolution_quadrature(y: f64, y2: f64, ls: f64) -> f64 {
    let lo = y.min(y2) - 14.0 * ls;
    let hi = y.max(y2) + 14.0 * ls;
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let f = |u: f64| rbf(&[y], &[u], &[ls]) * rbf(&[u], &[y2], &[ls]);
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

pub fn nuclear_quadrature() -> Outcome {
    let grid = linspace(-5.0, 5.0, 20);
    let mut worst = 0.0f64;
    for ls in [0.5, 1.0, 2.0] {
        let base = KernelSpec::rbf(vec![ls], 1.0).unwrap();
        let nuclear = KernelSpec::nuclear_of(&base).unwrap();
        for &y in &grid {
            for &y2 in &grid {
                let got = nuclear_rbf_eval(&[y], &[y2], &nuclear).map_err(|e| e.to_string())?;
                let want = convolution_quadrature(y, y2, ls);
                worst = worst.max((got - want).abs());
                check(worst <= 1e-6, || {
                    format!("ℓ={ls}, ({y}, {y2}): closed form {got:e} vs quadrature {want:e}")
                })?;
            }
        }
    }
    Ok(format!(
        "3 lengthscales x 400 pairs; max abs deviation {worst:.1e}"
    ))
}

/// Raw variances, Schur-complement orderings and posterior-below-prior.
pub fn variance_sanity(instances: usize, seed: u64) -> Outcome {
    let mut rng = FusionCase::rng(seed);
    let mut min_var = f64::INFINITY;
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..instances {
        let (n, m, l) = (
            rng.random_range(2..=12),
            rng.random_range(2..=12),
            rng.random_range(1..=6),
        );
        let case = FusionCase::random(&mut rng, n, m, l);
        let theta4 = if i % 2 == 0 {
            Theta4Kernel::K
        } else {
            Theta4Kernel::R
        };
        let inputs = case.inputs(theta4, false);
        let fm = inputs.fit().map_err(|e| e.to_string())?;
        let d3 = &inputs.d3_x;
        let v1 = fm.cfmp(d3).map_err(|e| e.to_string())?.raw_variance;
        let t2 = fm.bayes_rcfme_terms(d3).map_err(|e| e.to_string())?;
        let t3 = fm.bayes_cfmp_terms(d3).map_err(|e| e.to_string())?;
        let (v2, v3) = (t2.raw_variance(), t3.raw_variance());
        min_var = min_var.min(v1).min(v2).min(v3);
        check(v1 >= -1e-8 && v2 >= -1e-8 && v3 >= -1e-8, || {
            format!("instance {i}: raw variances {v1:e}, {v2:e}, {v3:e}")
        })?;
        check(t2.f >= t2.g - 1e-10 && t2.g >= -1e-10, || {
            format!("instance {i}: F={:e}, G={:e}", t2.f, t2.g)
        })?;
        check(t2.b >= t2.c - 1e-10, || {
            format!("instance {i}: B={:e} < C={:e}", t2.b, t2.c)
        })?;
        let second = t3.theta2_a * t3.f - t3.theta2_b * t3.g;
        let third = t3.theta3_a * t3.f - t3.theta3_b * t3.g;
        check(
            second >= -1e-8 && third >= -1e-8 && t3.first >= -1e-8,
            || {
                format!(
                    "instance {i}: variance parts first {:e}, second {second:e}, third {third:e}",
                    t3.first
                )
            },
        )?;

        let size = rng.random_range(1..=12);
        let cme = random_cme(&mut rng, size);
        let model = fit_cme(&cme, false);
        let q = random_shift(&mut rng, 5);
        let qy: Points = (0..5).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let (_, cov) = model
            .bayes_cme_posterior(
                &PointSet::from_rows(&q).unwrap(),
                &PointSet::from_rows(&qy).unwrap(),
            )
            .map_err(|e| e.to_string())?;
        let prior = model.ry().diagonal() * model.kx().diagonal();
        for j in 0..q.len() {
            max_excess = max_excess.max(cov[(j, j)] - prior);
        }
        let shift = PointSet::from_rows(&q).unwrap();
        let post = model
            .embedding_posterior(&shift)
            .map_err(|e| e.to_string())?;
        let lx = &cme.lx;
        let kss: f64 = q
            .iter()
            .flat_map(|a| q.iter().map(move |b| rbf(a, b, lx)))
            .sum::<f64>()
            / 25.0;
        for y in &qy {
            let k = post.covariance(y, y).map_err(|e| e.to_string())?;
            max_excess = max_excess.max(k - kss * model.ry().diagonal());
        }
        check(max_excess <= 1e-10, || {
            format!("instance {i}: posterior diagonal exceeds prior by {max_excess:e}")
        })?;
    }
    Ok(format!(
        "{instances} instances; min raw variance {min_var:.2e}, max posterior-minus-prior {max_excess:.1e}"
    ))
}

/// Shifting the counterfactual covariates 50 lengthscales away returns the prior.
pub fn shift_to_zero(seed: u64) -> Outcome {
    let mut rng = FusionCase::rng(seed);
    let mut worst_mean = 0.0f64;
    let mut worst_cov = 0.0f64;
    let grid = linspace(-4.0, 4.0, 25);
    for n in [5, 20, 60] {
        let cme = random_cme(&mut rng, n);
        let model = fit_cme(&cme, false);
        let shifted: Points = cme
            .x
            .iter()
            .map(|p| p.iter().zip(&cme.lx).map(|(v, l)| v + 50.0 * l).collect())
            .collect();
        let post = model
            .embedding_posterior(&PointSet::from_rows(&shifted).unwrap())
            .map_err(|e| e.to_string())?;
        let m = shifted.len() as f64;
        let kss: f64 = shifted
            .iter()
            .flat_map(|a| shifted.iter().map(|b| rbf(a, b, &cme.lx)))
            .sum::<f64>()
            / (m * m);
        for &y in &grid {
            worst_mean = worst_mean.max(post.mean(&[y]).map_err(|e| e.to_string())?.abs());
            for &y2 in grid.iter().step_by(3) {
                let k = post.covariance(&[y], &[y2]).map_err(|e| e.to_string())?;
                let prior = kss * super::nuclear(&[y], &[y2], &cme.ly);
                worst_cov = worst_cov.max((k - prior).abs());
            }
        }
        check(worst_mean <= 1e-6 && worst_cov <= 1e-6, || {
            format!("n={n}: |m| up to {worst_mean:e}, covariance off prior by {worst_cov:e}")
        })?;
    }
    Ok(format!(
        "max |m(y)| {worst_mean:.1e}, max covariance deviation from prior {worst_cov:.1e}"
    ))
}

/// Monte-Carlo truth at 10⁶ draws: spread across oracle seeds and the
/// Setting A value at α = −1.
pub fn oracle_stability(mc_samples: usize) -> Outcome {
    use bayes_cfme::synthetic::{true_eta, SettingSpec};
    let mut worst_spread = 0.0f64;
    for spec in [SettingSpec::setting_a(), SettingSpec::setting_b()] {
        let (lo, hi, _) = spec.default_alpha_range();
        for alpha in linspace(lo, hi, 5) {
            let etas: Vec<f64> = (0..5u64)
                .map(|s| true_eta(&spec, alpha, mc_samples, 1000 + s))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let spread = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - etas.iter().cloned().fold(f64::INFINITY, f64::min);
            worst_spread = worst_spread.max(spread);
            check(spread <= 0.01, || {
                format!("setting {}, α={alpha}: oracle spread {spread:e}", spec.id)
            })?;
            check(etas.iter().all(|e| e.abs() <= spec.f_bound()), || {
                format!("oracle outside the bound of f: {etas:?}")
            })?;
        }
    }
    let at_minus_one =
        true_eta(&SettingSpec::setting_a(), -1.0, mc_samples, 0).map_err(|e| e.to_string())?;
    check(at_minus_one.abs() <= 0.01, || {
        format!("setting A, α=−1: η = {at_minus_one:e}")
    })?;
    Ok(format!(
        "max spread over 5 seeds {worst_spread:.1e}; setting A η(−1) = {at_minus_one:.1e}"
    ))
}
