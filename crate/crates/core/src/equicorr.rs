//! The equicorrelated model: every pair of label-signed, unit-norm feature
//! vectors has inner product `ρ`, so `ζ_i = √(1−ρ) Z_i + √ρ Z` with shared
//! `Z`. The version-space volume is the orthant probability
//! `E[Φ(aZ)^n]` with `a = √(ρ/(1−ρ))`, and the population error of a draw
//! given `Z` is `1 − Φ(aZ)`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::{weighted_error_cdf, ErrorCdf};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::special::{ln_gamma, ln_std_normal_cdf, ln_std_normal_pdf, regularized_gamma_p};
pub use crate::special::{std_normal_cdf, std_normal_quantile};

/// `n` training points with pairwise correlation `ρ ∈ (0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquicorrModel {
    n: usize,
    rho: f64,
}

impl EquicorrModel {
    pub fn new(n: usize, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid(format!(
                "correlation must lie in (0, 1), got {rho}"
            )));
        }
        Ok(Self { n, rho })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `√(ρ / (1 − ρ))`.
    pub fn a(&self) -> f64 {
        (self.rho / (1.0 - self.rho)).sqrt()
    }

    /// `(1 − ρ) / ρ`, equal to `1/a²`.
    pub fn gamma_shape(&self) -> f64 {
        (1.0 - self.rho) / self.rho
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, rho: self.rho }
    }
}

const Z_LOWER: f64 = -12.0;
const Z_UPPER: f64 = 12.0;

fn log_integrand(n: f64, a: f64, z: f64) -> f64 {
    n * ln_std_normal_cdf(a * z) + ln_std_normal_pdf(z)
}

/// Maximizer of the (concave) log-integrand, by golden-section search.
fn log_integrand_peak(n: f64, a: f64) -> f64 {
    let g = |z: f64| log_integrand(n, a, z);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (Z_LOWER, 80.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (g(x1), g(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = g(x1);
        }
    }
    0.5 * (lo + hi)
}

/// `ln ∫_{lower}^{∞} Φ(az)^n φ(z) dz`, integrating a peak-rescaled integrand.
fn ln_partial_orthant(n: usize, a: f64, lower: f64) -> f64 {
    let nf = n as f64;
    let peak = log_integrand_peak(nf, a);
    let upper = Z_UPPER.max(peak + 8.0);
    let lower = lower.max(Z_LOWER);
    if lower >= upper {
        return f64::NEG_INFINITY;
    }
    let shift = log_integrand(nf, a, peak.clamp(lower, upper));
    let mut breaks: Vec<f64> = (0..)
        .map(|k| Z_LOWER + k as f64)
        .take_while(|&z| z < upper)
        .filter(|&z| z > lower)
        .collect();
    breaks.extend([lower, upper]);
    if peak > lower && peak < upper {
        breaks.push(peak);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let result = integrate(
        |z| (log_integrand(nf, a, z) - shift).exp(),
        &breaks,
        QuadratureOptions {
            rel_tol: 1e-13,
            abs_tol: 0.0,
            max_segments: 8192,
        },
    );
    result.value.ln() + shift
}

/// `ln P(ζ_1 >= 0, …, ζ_n >= 0)` by adaptive quadrature.
pub fn ln_orthant_quadrature(model: &EquicorrModel) -> f64 {
    if model.n == 0 {
        return 0.0;
    }
    ln_partial_orthant(model.n, model.a(), Z_LOWER)
}

/// `E_Z[Φ(aZ)^n]`, the exact orthant probability.
pub fn orthant_quadrature(model: &EquicorrModel) -> f64 {
    ln_orthant_quadrature(model).exp()
}

/// Log of the large-`nρ` orthant formula.
pub fn ln_orthant_asymptotic(model: &EquicorrModel) -> Result<f64> {
    if model.n < 2 {
        return Err(Error::invalid("asymptotic orthant formula needs n >= 2"));
    }
    let s = model.gamma_shape();
    let ln_n = (model.n as f64).ln();
    Ok(0.5 * s.ln() + ln_gamma(s) + 0.5 * (s - 1.0) * (4.0 * PI * ln_n).ln() - s * ln_n)
}

/// `√s Γ(s) (4π log n)^{(s−1)/2} n^{−s}` with `s = (1−ρ)/ρ`.
pub fn orthant_asymptotic(model: &EquicorrModel) -> Result<f64> {
    Ok(ln_orthant_asymptotic(model)?.exp())
}

/// `1 − (1−ρ)/(nρ)`: large-`nρ` probability that one more equicorrelated
/// point is classified correctly by a version-space draw.
pub fn next_point_correct_asymptotic(model: &EquicorrModel) -> f64 {
    1.0 - model.gamma_shape() / model.n as f64
}

/// Exact counterpart `P_{n+1} / P_n` from two quadratures.
pub fn next_point_correct_exact(model: &EquicorrModel) -> f64 {
    (ln_orthant_quadrature(&model.with_n(model.n + 1)) - ln_orthant_quadrature(model)).exp()
}

/// `P(U <= nε)` for `U ~ Gamma((1−ρ)/ρ, 1)`: the limiting population-error CDF.
pub fn limit_cdf(model: &EquicorrModel, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(format!(
            "error level must be >= 0, got {eps}"
        )));
    }
    regularized_gamma_p(model.gamma_shape(), model.n as f64 * eps)
}

/// `ε* = (1−ρ)/(nρ)`.
pub fn critical_value(model: &EquicorrModel) -> f64 {
    model.gamma_shape() / model.n as f64
}

/// Exact finite-`n` population-error CDF, the ratio
/// `E[1(1−Φ(aZ) <= ε) Φ(aZ)^n] / E[Φ(aZ)^n]`, by quadrature.
pub fn exact_rn(model: &EquicorrModel, eps: f64) -> Result<f64> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::invalid(format!(
            "error level must be >= 0, got {eps}"
        )));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    if eps >= 1.0 {
        return Ok(1.0);
    }
    // 1 − Φ(az) <= ε  ⇔  z >= Φ⁻¹(1 − ε)/a, written via the lower tail.
    let threshold = -std_normal_quantile(eps)? / model.a();
    let num = ln_partial_orthant(model.n, model.a(), threshold);
    let den = ln_orthant_quadrature(model);
    Ok((num - den).exp().min(1.0))
}

/// Closed form of [`exact_rn`] at `ρ = 1/2`, where `Φ(Z)` is uniform:
/// `1 − (1−ε)^{n+1}`.
pub fn exact_rn_half(n: usize, eps: f64) -> f64 {
    let eps = eps.clamp(0.0, 1.0);
    1.0 - (1.0 - eps).powf(n as f64 + 1.0)
}

/// Importance-sampling oracle for the population-error CDF: draws
/// `Z ~ N(0, 1)`, weights each draw by `Φ(aZ)^n` and records the error
/// `1 − Φ(aZ)`.
pub fn simulate_equicorr_rn<R: Rng + ?Sized>(
    model: &EquicorrModel,
    n_draws: usize,
    grid: &[f64],
    rng: &mut R,
) -> Result<ErrorCdf> {
    if n_draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    let a = model.a();
    let n = model.n as f64;
    let mut errors = Vec::with_capacity(n_draws);
    let mut log_weights = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let z: f64 = rng.sample(StandardNormal);
        errors.push(std_normal_cdf(-a * z));
        log_weights.push(if model.n == 0 {
            0.0
        } else {
            n * ln_std_normal_cdf(a * z)
        });
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NumericalAbort(
            "all importance weights underflowed; use more draws or a smaller n".into(),
        ));
    }
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    weighted_error_cdf(&errors, &weights, grid)
}

/// Explicit unit-norm realization of the equicorrelated Gram structure in
/// dimension `n + m + 1`: point `k` is `√(1−ρ) e_{k+1} + √ρ e_0`, all labels +1.
/// Returns `(train, test)` with `n` and `m` points.
pub fn equicorrelated_dataset(
    n: usize,
    m: usize,
    rho: f64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    EquicorrModel::new(n, rho)?;
    let dim = n + m + 1;
    let own = (1.0 - rho).sqrt();
    let shared = rho.sqrt();
    let block = |offset: usize, count: usize| {
        let mut x = Array2::<f64>::zeros((count, dim));
        for k in 0..count {
            x[[k, 0]] = shared;
            x[[k, 1 + offset + k]] = own;
        }
        LabeledDataset::new(x, vec![1; count])
    };
    Ok((block(0, n)?, block(n, m)?))
}

/// Population error of `w` on the equicorrelated construction: a fresh test
/// point contributes an independent standard-normal coordinate, so the error
/// is `Φ(−a w_0)`.
pub fn equicorr_population_error(w: ArrayView1<f64>, model: &EquicorrModel) -> f64 {
    std_normal_cdf(-model.a() * w[0])
}

/// One row of the quadrature-vs-asymptotic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryRow {
    pub n: usize,
    pub rho: f64,
    pub quadrature: f64,
    pub asymptotic: f64,
    pub ratio: f64,
}

pub fn theory_row(model: &EquicorrModel) -> Result<TheoryRow> {
    let ln_quad = ln_orthant_quadrature(model);
    let ln_asym = ln_orthant_asymptotic(model)?;
    Ok(TheoryRow {
        n: model.n,
        rho: model.rho,
        quadrature: ln_quad.exp(),
        asymptotic: ln_asym.exp(),
        ratio: (ln_asym - ln_quad).exp(),
    })
}

/// `n,rho,quadrature,asymptotic,ratio` rows.
pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut out = String::from("n,rho,quadrature,asymptotic,ratio\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:e},{:e},{}",
            r.n, r.rho, r.quadrature, r.asymptotic, r.ratio
        )
        .expect("string write");
    }
    out
}
