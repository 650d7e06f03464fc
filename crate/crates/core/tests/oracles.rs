//! Cross-checks against independent reference implementations and
//! closed-form distributional facts.

#![allow(clippy::excessive_precision)]

use ndarray::Array1;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::gamma_lr;
use verspace::data::sample_gaussian_mixture;
use verspace::equicorr::{exact_rn, exact_rn_half, limit_cdf, orthant_quadrature, EquicorrModel};
use verspace::estimator::{error_cdf, uniform_grid, GaussianMixtureSpec};
use verspace::features::sample_sphere_rows;
use verspace::sampler::chain_rng;
use verspace::special::{
    chi_square_cdf, regularized_gamma_p, regularized_gamma_q, std_normal_cdf, std_normal_quantile,
};
use verspace::stats::{dkw_half_width, ks_one_sample, ks_two_sample};

#[test]
fn incomplete_gamma_against_statrs() {
    for &s in &[0.05, 0.25, 1.0, 2.333, 9.0, 40.0] {
        for &x in &[1e-4, 0.1, 0.9, 2.0, 7.5, 30.0, 120.0] {
            let ours = regularized_gamma_p(s, x).unwrap();
            let theirs = gamma_lr(s, x);
            assert!(
                (ours - theirs).abs() < 1e-10,
                "P({s}, {x}): {ours} vs {theirs}"
            );
            let q = regularized_gamma_q(s, x).unwrap();
            assert!((ours + q - 1.0).abs() < 1e-12);
        }
    }
}

/// Reference values computed at 40 significant digits.
const NORMAL_CDF_REFERENCE: [(f64, f64); 11] = [
    (-37.0, 5.725_571_222_524_576_8e-300),
    (-20.0, 2.753_624_118_606_233_7e-89),
    (-8.0, 6.220_960_574_271_784_1e-16),
    (-6.0, 9.865_876_450_376_981_4e-10),
    (-4.0, 3.167_124_183_311_992_1e-5),
    (-2.0, 0.022_750_131_948_179_207),
    (-1.0, 0.158_655_253_931_457_05),
    (-0.5, 0.308_537_538_725_986_9),
    (0.5, 0.691_462_461_274_013_1),
    (1.0, 0.841_344_746_068_542_95),
    (3.0, 0.998_650_101_968_369_9),
];

const NORMAL_QUANTILE_REFERENCE: [(f64, f64); 8] = [
    (1e-15, -7.941_345_326_170_996_8),
    (1e-8, -5.612_001_244_174_788_7),
    (1e-3, -3.090_232_306_167_813_5),
    (0.025, -1.959_963_984_540_054_2),
    (0.3, -0.524_400_512_708_040_78),
    (0.8, 0.841_621_233_572_914_2),
    (0.975, 1.959_963_984_540_054_2),
    (0.5, 0.0),
];

#[test]
fn normal_functions_against_reference() {
    for &(x, p) in &NORMAL_CDF_REFERENCE {
        let ours = std_normal_cdf(x);
        assert!(((ours - p) / p).abs() < 1e-12, "Φ({x}) = {ours}, want {p}");
    }
    for &(p, x) in &NORMAL_QUANTILE_REFERENCE {
        let ours = std_normal_quantile(p).unwrap();
        assert!(
            (ours - x).abs() <= 1e-12 * x.abs().max(1.0),
            "Φ⁻¹({p}) = {ours}, want {x}"
        );
    }
    // Coarse bulk agreement with statrs, whose erfc is accurate to ~1e-11.
    let normal = Normal::standard();
    for k in -40..=40 {
        let x = k as f64 * 0.1;
        let (ours, theirs) = (std_normal_cdf(x), normal.cdf(x));
        assert!((ours - theirs).abs() < 1e-9, "x {x}: {ours} vs {theirs}");
    }
}

#[test]
fn chi_square_against_statrs() {
    for &k in &[1.0, 3.0, 50.0, 200.0] {
        let dist = ChiSquared::new(k).unwrap();
        for &x in &[0.5, k, 2.0 * k] {
            assert!((chi_square_cdf(k, x).unwrap() - dist.cdf(x)).abs() < 1e-10);
        }
    }
}

#[test]
fn mixture_mahalanobis_is_chi_square() {
    let d = 20;
    let mut rng = chain_rng(8, 0);
    let data = sample_gaussian_mixture(d, 2.0, 10_000, &mut rng).unwrap();
    let spec = GaussianMixtureSpec::isotropic(d, 2.0).unwrap();
    let mu = Array1::from(spec.mu().to_vec());
    let dists: Vec<f64> = data
        .points()
        .rows()
        .into_iter()
        .zip(data.labels())
        .map(|(x, &y)| {
            let r = &x * f64::from(y) - &mu;
            r.dot(&r)
        })
        .collect();
    let ks = ks_one_sample(&dists, |x| chi_square_cdf(d as f64, x).unwrap());
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn mixture_signed_mean_is_mu() {
    let d = 10;
    let mut rng = chain_rng(4, 0);
    let data = sample_gaussian_mixture(d, 5.0, 100_000, &mut rng).unwrap();
    let y = Array1::from(
        data.labels()
            .iter()
            .map(|&v| f64::from(v))
            .collect::<Vec<_>>(),
    );
    let mean = data.points().t().dot(&y) / 100_000.0;
    let mu = GaussianMixtureSpec::isotropic(d, 5.0).unwrap();
    let gap: f64 = mean
        .iter()
        .zip(mu.mu())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(gap < 0.02 * (d as f64).sqrt(), "gap {gap}");
    let norm: f64 = mu.mu().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!((norm - 5.0).abs() < 1e-12);
}

#[test]
fn sphere_rows_have_zero_mean() {
    let mut rng = chain_rng(12, 0);
    let u = sample_sphere_rows(100_000, 10, &mut rng).unwrap();
    let mean = u.mean_axis(ndarray::Axis(0)).unwrap();
    assert!(mean.dot(&mean).sqrt() <= 0.02);
    let one = sample_sphere_rows(50, 1, &mut rng).unwrap();
    assert!(one.iter().all(|&v| v == 1.0 || v == -1.0));
}

#[test]
fn independent_cdf_estimates_agree_within_dkw() {
    // Two independent M = 10⁴ estimates of the same error law.
    let grid = uniform_grid(512);
    let draw = |seed| {
        let mut rng = chain_rng(seed, 0);
        let errs: Vec<f64> = (0..10_000)
            .map(|_| {
                std_normal_cdf(
                    -2.0 + rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal),
                )
            })
            .collect();
        errs
    };
    let (a, b) = (draw(1), draw(2));
    let ca = error_cdf(&a, &grid).unwrap();
    let cb = error_cdf(&b, &grid).unwrap();
    let sup = ca
        .cdf
        .iter()
        .zip(&cb.cdf)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(sup <= 0.03, "sup {sup}");
    assert!(2.0 * dkw_half_width(10_000, 0.01) <= 0.033);
    assert!(ks_two_sample(&a, &b) <= 0.03);
}

#[test]
fn orthant_quadrature_against_trapezoid() {
    // Independent oracle: composite trapezoid on a fine uniform grid.
    for &(n, rho) in &[(5usize, 0.3), (40, 0.7), (300, 0.2)] {
        let m = EquicorrModel::new(n, rho).unwrap();
        let a = m.a();
        let h = 1e-4;
        let mut total = 0.0;
        let steps = (30.0 / h) as usize;
        for k in 0..=steps {
            let z = -12.0 + k as f64 * h;
            let f = std_normal_cdf(a * z).powi(n as i32) * (-0.5 * z * z).exp()
                / (2.0 * std::f64::consts::PI).sqrt();
            total += if k == 0 || k == steps { 0.5 * f } else { f };
        }
        total *= h;
        let q = orthant_quadrature(&m);
        assert!(
            ((q - total) / total).abs() < 1e-8,
            "n {n} rho {rho}: {q} vs {total}"
        );
    }
}

#[test]
fn exact_rn_limits_and_half_case() {
    let m = EquicorrModel::new(2000, 0.5).unwrap();
    for &eps in &[1e-4, 5e-4, 2e-3] {
        let exact = exact_rn(&m, eps).unwrap();
        assert!((exact - exact_rn_half(2000, eps)).abs() < 1e-8);
        assert!((exact - limit_cdf(&m, eps).unwrap()).abs() < 1e-3);
    }
    // At other correlations the exact CDF approaches the Gamma limit.
    let gap = |n| {
        let m = EquicorrModel::new(n, 0.3).unwrap();
        let eps = 2.0 * m.gamma_shape() / n as f64;
        (exact_rn(&m, eps).unwrap() - limit_cdf(&m, eps).unwrap()).abs()
    };
    assert!(gap(10_000) < gap(100));
}
