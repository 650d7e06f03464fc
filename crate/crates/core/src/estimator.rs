//! Test errors of weight vectors, error CDFs over a chain, the Gaussian
//! mixture's closed-form error and Bayes bound, and construction of
//! near-worst-case interpolators.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::special::std_normal_cdf;
use crate::stats::ks_two_sample;

/// Default ε-grid resolution.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Two-component Gaussian mixture `½(N(μ, Σ), +1) + ½(N(−μ, Σ), −1)` with
/// diagonal `Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    mu: Vec<f64>,
    sigma_diag: Vec<f64>,
}

impl GaussianMixtureSpec {
    pub fn new(mu: Vec<f64>, sigma_diag: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma_diag.len() || mu.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: sigma_diag.len(),
            });
        }
        if sigma_diag.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("covariance must be positive definite"));
        }
        let spec = Self { mu, sigma_diag };
        if !(spec.snr() > 0.0) {
            return Err(Error::invalid("mixture mean must be non-zero"));
        }
        Ok(spec)
    }

    /// `μ = (snr/√d, …)`, `Σ = I`.
    pub fn isotropic(dim: usize, snr: f64) -> Result<Self> {
        if dim == 0 || !(snr > 0.0) {
            return Err(Error::invalid(
                "isotropic mixture needs dim >= 1 and snr > 0",
            ));
        }
        let m = snr / (dim as f64).sqrt();
        Self::new(vec![m; dim], vec![1.0; dim])
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma_diag(&self) -> &[f64] {
        &self.sigma_diag
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `√(μᵀ Σ⁻¹ μ)`.
    pub fn snr(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.sigma_diag)
            .map(|(m, s)| m * m / s)
            .sum::<f64>()
            .sqrt()
    }
}

/// `Φ(−wᵀμ / √(wᵀΣw))`, the error of `sign(wᵀx)` on the mixture.
pub fn population_error_gaussian(w: ArrayView1<f64>, spec: &GaussianMixtureSpec) -> Result<f64> {
    if w.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: w.len(),
        });
    }
    let signal: f64 = w.iter().zip(&spec.mu).map(|(a, b)| a * b).sum();
    let spread: f64 = w
        .iter()
        .zip(&spec.sigma_diag)
        .map(|(a, s)| a * a * s)
        .sum::<f64>()
        .sqrt();
    if spread == 0.0 {
        return Err(Error::invalid("zero weight vector has no population error"));
    }
    Ok(std_normal_cdf(-signal / spread))
}

/// Bayes error `Φ(−√(μᵀΣ⁻¹μ))`, a lower bound for every linear classifier.
pub fn bayes_lower_bound(spec: &GaussianMixtureSpec) -> f64 {
    std_normal_cdf(-spec.snr())
}

/// Fraction of points with `y · wᵀφ(x) < 0`. Zero margins count as correct.
pub fn empirical_error(w: ArrayView1<f64>, test: &LabeledDataset, map: &FeatureMap) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let features = map.transform(test.points())?;
    if features.ncols() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: features.ncols(),
            found: w.len(),
        });
    }
    let scores = features.dot(&w);
    Ok(count_errors(scores.view(), test.labels()) as f64 / test.len() as f64)
}

fn count_errors(scores: ArrayView1<f64>, labels: &[i8]) -> usize {
    scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| f64::from(y) * s < 0.0)
        .count()
}

const ERROR_BLOCK: usize = 256;

/// Empirical test error of every row of `weights` against pre-mapped test
/// features, evaluated in parallel blocks.
pub fn empirical_errors(
    weights: &Array2<f64>,
    test_features: &Array2<f64>,
    labels: &[i8],
) -> Result<Vec<f64>> {
    if labels.is_empty() || labels.len() != test_features.nrows() {
        return Err(Error::invalid(
            "test labels must be non-empty and match the features",
        ));
    }
    if weights.ncols() != test_features.ncols() {
        return Err(Error::DimensionMismatch {
            expected: test_features.ncols(),
            found: weights.ncols(),
        });
    }
    let m = labels.len() as f64;
    let blocks: Vec<usize> = (0..weights.nrows()).step_by(ERROR_BLOCK).collect();
    let per_block: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&start| {
            let end = (start + ERROR_BLOCK).min(weights.nrows());
            let scores = weights.slice(s![start..end, ..]).dot(&test_features.t());
            scores
                .axis_iter(Axis(0))
                .map(|row| count_errors(row, labels) as f64 / m)
                .collect()
        })
        .collect();
    Ok(per_block.into_iter().flatten().collect())
}

/// `n` equally spaced points on `[0, 1]`, endpoints included.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// CDF estimates of test error on an ε-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCdf {
    pub grid: Vec<f64>,
    pub cdf: Vec<f64>,
    pub n_models: usize,
    /// Number of test points; 0 for population errors.
    pub n_test: usize,
}

impl ErrorCdf {
    fn validate_grid(grid: &[f64]) -> Result<()> {
        if grid.is_empty() {
            return Err(Error::invalid("empty ε-grid"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("ε-grid must be strictly increasing"));
        }
        if grid.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::invalid("ε-grid must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Largest absolute gap to `reference` over the grid.
    pub fn sup_distance_to(&self, reference: impl Fn(f64) -> f64) -> f64 {
        self.grid
            .iter()
            .zip(&self.cdf)
            .map(|(&e, &c)| (c - reference(e)).abs())
            .fold(0.0, f64::max)
    }

    /// Value at the largest grid point not exceeding `eps` (0 below the grid).
    pub fn value_at(&self, eps: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= eps);
        if k == 0 {
            0.0
        } else {
            self.cdf[k - 1]
        }
    }

    /// `epsilon,cdf` rows, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,cdf\n");
        for (e, c) in self.grid.iter().zip(&self.cdf) {
            writeln!(out, "{},{}", fmt_decimal(*e), fmt_decimal(*c)).expect("string write");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("epsilon,cdf") {
            return Err(Error::Data("missing `epsilon,cdf` header".into()));
        }
        let mut grid = Vec::new();
        let mut cdf = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (e, c) = line
                .split_once(',')
                .ok_or_else(|| Error::Data(format!("malformed row {line:?}")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Data(format!("bad number {v:?}")))
            };
            grid.push(parse(e)?);
            cdf.push(parse(c)?);
        }
        Self::validate_grid(&grid)?;
        Ok(Self {
            grid,
            cdf,
            n_models: 0,
            n_test: 0,
        })
    }
}

/// Shortest round-trip decimal rendering shared by the CSV writers.
pub fn fmt_decimal(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

/// Fraction of errors at or below each grid value.
pub fn error_cdf(errors: &[f64], grid: &[f64]) -> Result<ErrorCdf> {
    if errors.is_empty() {
        return Err(Error::invalid("no errors to summarize"));
    }
    ErrorCdf::validate_grid(grid)?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let cdf = grid
        .iter()
        .map(|&e| sorted.partition_point(|&x| x <= e) as f64 / m)
        .collect();
    Ok(ErrorCdf {
        grid: grid.to_vec(),
        cdf,
        n_models: errors.len(),
        n_test: 0,
    })
}

/// Weighted variant of [`error_cdf`]; weights need not be normalized.
pub fn weighted_error_cdf(errors: &[f64], weights: &[f64], grid: &[f64]) -> Result<ErrorCdf> {
    if errors.is_empty() || errors.len() != weights.len() {
        return Err(Error::invalid(
            "errors and weights must be non-empty and equal length",
        ));
    }
    ErrorCdf::validate_grid(grid)?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NumericalAbort(
            "weights sum to zero or overflow".into(),
        ));
    }
    let mut order: Vec<usize> = (0..errors.len()).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]));
    let mut cumulative = Vec::with_capacity(order.len());
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        cumulative.push(acc);
    }
    let cdf = grid
        .iter()
        .map(|&e| {
            let k = order.partition_point(|&i| errors[i] <= e);
            if k == 0 {
                0.0
            } else {
                (cumulative[k - 1] / total).min(1.0)
            }
        })
        .collect();
    Ok(ErrorCdf {
        grid: grid.to_vec(),
        cdf,
        n_models: errors.len(),
        n_test: 0,
    })
}

/// `sample_index,error` rows.
pub fn errors_to_csv(errors: &[f64]) -> String {
    let mut out = String::from("sample_index,error\n");
    for (i, e) in errors.iter().enumerate() {
        writeln!(out, "{i},{}", fmt_decimal(*e)).expect("string write");
    }
    out
}

/// Linear-interpolation sample quantile.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("quantile needs data and p in [0, 1]"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// 90th minus 10th percentile.
pub fn interdecile_width(values: &[f64]) -> Result<f64> {
    Ok(quantile(values, 0.9)? - quantile(values, 0.1)?)
}

/// Largest two-sample KS distance between any pair of chains' errors.
pub fn chain_agreement(per_chain: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..per_chain.len() {
        for j in i + 1..per_chain.len() {
            worst = worst.max(ks_two_sample(&per_chain[i], &per_chain[j]));
        }
    }
    worst
}

/// Full-batch logistic gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticConfig {
    /// Step is `lr_scale · 4 / ‖X‖²_op`, where `‖X‖²_op / 4` bounds the
    /// curvature of the summed logistic loss.
    pub lr_scale: f64,
    pub max_iters: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            lr_scale: 1.0,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub weights: Array1<f64>,
    pub iterations: usize,
    /// Every margin strictly positive at exit.
    pub separated: bool,
}

fn operator_norm_sq(x: &Array2<f64>) -> f64 {
    let mut v = Array1::<f64>::from_elem(x.ncols(), 1.0 / (x.ncols() as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..100 {
        let u = x.t().dot(&x.dot(&v));
        let n = u.dot(&u).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        estimate = n;
        v = u / n;
    }
    estimate
}

fn sigmoid_neg(z: f64) -> f64 {
    // σ(−z) = 1 / (1 + e^z)
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// Minimizes `Σ log(1 + exp(−rowᵢᵀw))` from `w = 0`, stopping once every
/// margin is positive. Rows are label-signed feature vectors.
pub fn fit_logistic(signed_rows: &Array2<f64>, config: &LogisticConfig) -> LogisticFit {
    let mut w = Array1::<f64>::zeros(signed_rows.ncols());
    let lip = operator_norm_sq(signed_rows);
    if lip == 0.0 {
        return LogisticFit {
            weights: w,
            iterations: 0,
            separated: false,
        };
    }
    let step = config.lr_scale * 4.0 / lip;
    let mut margins = Array1::<f64>::zeros(signed_rows.nrows());
    for iter in 0..config.max_iters {
        if margins.iter().all(|&m| m > 0.0) {
            return LogisticFit {
                weights: w,
                iterations: iter,
                separated: true,
            };
        }
        let coeff = margins.mapv(sigmoid_neg);
        let descent = signed_rows.t().dot(&coeff);
        w.scaled_add(step, &descent);
        margins = signed_rows.dot(&w);
    }
    let separated = margins.iter().all(|&m| m > 0.0);
    LogisticFit {
        weights: w,
        iterations: config.max_iters,
        separated,
    }
}

/// How the "bad" points of a worst-case construction are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorstCaseConfig {
    /// Defaults to `(N − 1) − n` for feature dimension `N`.
    pub n_bad: Option<usize>,
    /// Pool points combined (with Uniform(0, 1) weights) into each bad point.
    pub combo_size: usize,
    pub logistic: LogisticConfig,
    /// Training accuracy below this raises the warning flag.
    pub min_train_accuracy: f64,
}

impl Default for WorstCaseConfig {
    fn default() -> Self {
        Self {
            n_bad: None,
            combo_size: 3,
            logistic: LogisticConfig::default(),
            min_train_accuracy: 0.99,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WorstCase {
    pub weights: Array1<f64>,
    pub n_bad: usize,
    pub train_accuracy: f64,
    pub bad_accuracy: f64,
    pub iterations: usize,
    pub separated: bool,
    /// Set when training accuracy on the original points fell short.
    pub warning: bool,
}

/// Bad points in feature space: nonnegative random combinations of the
/// label-flipped pool vectors `−y_j φ(x_j)`, each rescaled to `target_norm`.
/// They are fitted with label +1, so `rows` are returned already signed.
pub fn bad_points<R: Rng + ?Sized>(
    pool_features: &Array2<f64>,
    pool_labels: &[i8],
    n_bad: usize,
    combo_size: usize,
    target_norm: f64,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if n_bad == 0 {
        return Ok(Array2::zeros((0, pool_features.ncols())));
    }
    if combo_size == 0 || pool_labels.len() < combo_size {
        return Err(Error::invalid(format!(
            "pool of {} points cannot supply combinations of {combo_size}",
            pool_labels.len()
        )));
    }
    let mut rows = Array2::<f64>::zeros((n_bad, pool_features.ncols()));
    for mut row in rows.rows_mut() {
        loop {
            row.fill(0.0);
            for j in rand::seq::index::sample(rng, pool_labels.len(), combo_size) {
                let c: f64 = rng.random();
                row.scaled_add(-c * f64::from(pool_labels[j]), &pool_features.row(j));
            }
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row *= target_norm / n;
                break;
            }
        }
    }
    Ok(rows)
}

fn signed_rows(features: &Array2<f64>, labels: &[i8]) -> Array2<f64> {
    let mut rows = features.clone();
    for (mut row, &y) in rows.axis_iter_mut(Axis(0)).zip(labels) {
        row *= f64::from(y);
    }
    rows
}

fn accuracy(rows: &Array2<f64>, w: &Array1<f64>) -> f64 {
    if rows.nrows() == 0 {
        return 1.0;
    }
    let margins = rows.dot(w);
    margins.iter().filter(|&&m| m >= 0.0).count() as f64 / rows.nrows() as f64
}

/// Fits logistic GD on the training rows plus pre-built, pre-signed bad rows.
pub fn fit_with_bad_points(
    train_features: &Array2<f64>,
    train_labels: &[i8],
    bad_rows: &Array2<f64>,
    config: &WorstCaseConfig,
) -> Result<WorstCase> {
    let good = signed_rows(train_features, train_labels);
    let all = ndarray::concatenate(Axis(0), &[good.view(), bad_rows.view()])
        .map_err(|e| Error::invalid(e.to_string()))?;
    let fit = fit_logistic(&all, &config.logistic);
    let train_accuracy = accuracy(&good, &fit.weights);
    let bad_accuracy = accuracy(bad_rows, &fit.weights);
    Ok(WorstCase {
        n_bad: bad_rows.nrows(),
        train_accuracy,
        bad_accuracy,
        iterations: fit.iterations,
        separated: fit.separated,
        warning: train_accuracy < config.min_train_accuracy,
        weights: fit.weights,
    })
}

/// Constructs an interpolator of `train` with deliberately poor test error by
/// appending bad points built from `pool`, a labeled sample disjoint from
/// `train` and drawn from the same distribution.
pub fn worst_case_classifier<R: Rng + ?Sized>(
    train: &LabeledDataset,
    pool: &LabeledDataset,
    map: &FeatureMap,
    config: &WorstCaseConfig,
    rng: &mut R,
) -> Result<WorstCase> {
    let dim = map.output_dim();
    if train.len() >= dim {
        return Err(Error::invalid(format!(
            "worst-case construction needs n < feature dimension ({} >= {dim})",
            train.len()
        )));
    }
    let n_bad = config.n_bad.unwrap_or(dim - 1 - train.len());
    let train_features = map.transform(train.points())?;
    let target_norm = train_features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .sum::<f64>()
        / train.len().max(1) as f64;
    let pool_features = map.transform(pool.points())?;
    let bad = bad_points(
        &pool_features,
        pool.labels(),
        n_bad,
        config.combo_size,
        target_norm,
        rng,
    )?;
    fit_with_bad_points(&train_features, train.labels(), &bad, config)
}
