//! Task execution. Everything here is computed in memory; files are written
//! by the caller only after a task has finished.

use std::env;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Array2, Axis};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use verspace::data::{
    load_idx, make_binary_task, sample_gaussian_mixture, LabeledDataset, Standardization,
};
use verspace::equicorr::{
    critical_value, exact_rn, limit_cdf, simulate_equicorr_rn, theory_csv, theory_row,
    EquicorrModel,
};
use verspace::estimator::{
    bayes_lower_bound, chain_agreement, empirical_error, empirical_errors, error_cdf,
    errors_to_csv, fmt_decimal, interdecile_width, population_error_gaussian, quantile,
    uniform_grid, worst_case_classifier, ErrorCdf, GaussianMixtureSpec, LogisticConfig,
    WorstCaseConfig,
};
use verspace::features::{build_constraints, FeatureMap};
use verspace::sampler::{chain_rng, concat_chains, sample_chains, ConstraintSet};

use crate::config::{ChainSettings, Dataset, ExperimentConfig, IdxFiles, ImageSettings, Task};
use crate::error::CliError;

/// Environment variable naming the dataset root directory.
pub const DATA_DIR_ENV: &str = "VERSPACE_DATA_DIR";

pub const MNIST_URL: &str = "https://ossci-datasets.s3.amazonaws.com/mnist/";
pub const FASHION_MNIST_URL: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/";

// Random streams of the run seed. Chains use streams 0..k.
const STREAM_TRAIN_SPLIT: u64 = 1 << 40;
const STREAM_TEST_SPLIT: u64 = STREAM_TRAIN_SPLIT + 1;
const STREAM_PROJECTION: u64 = STREAM_TRAIN_SPLIT + 2;
const STREAM_MIXTURE: u64 = STREAM_TRAIN_SPLIT + 3;
const STREAM_BAD_POINTS: u64 = STREAM_TRAIN_SPLIT + 4;
const STREAM_EQUICORR: u64 = STREAM_TRAIN_SPLIT + 5;

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    fn new(name: &str, contents: String) -> Self {
        Self {
            name: name.to_string(),
            contents: contents.into_bytes(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub artifacts: Vec<Artifact>,
    /// Design choices in effect for this run.
    pub knobs: Value,
    pub diagnostics: Value,
}

pub fn execute(config: &ExperimentConfig) -> Result<Execution, CliError> {
    config.validate()?;
    match config.task {
        Task::ImageLinear | Task::ImageRrf => run_image(config),
        Task::GaussianLinear => run_gaussian(config),
        Task::EquicorrTheory => run_equicorr(config),
        Task::WorstCase => run_worst_case(config),
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    chain_rng(seed, stream)
}

/// Sampled interpolators with per-chain bookkeeping.
pub struct Interpolators {
    pub weights: Array2<f64>,
    pub chain_lengths: Vec<usize>,
    pub steps_per_chain: Vec<usize>,
}

impl Interpolators {
    pub fn split_by_chain(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.chain_lengths.len());
        let mut start = 0;
        for &len in &self.chain_lengths {
            out.push(values[start..start + len].to_vec());
            start += len;
        }
        out
    }
}

pub fn sample_interpolators(
    constraints: &ConstraintSet,
    chain: &ChainSettings,
    seed: u64,
) -> Result<Interpolators, CliError> {
    let chains = sample_chains(constraints, &chain.chain_config(seed), chain.chains)?;
    Ok(Interpolators {
        weights: concat_chains(&chains),
        chain_lengths: chains.iter().map(|c| c.len()).collect(),
        steps_per_chain: chains.iter().map(|c| c.steps()).collect(),
    })
}

fn chain_diagnostics(samples: &Interpolators, errors: &[f64]) -> Result<Value, CliError> {
    Ok(json!({
        "chains": samples.chain_lengths.len(),
        "samples_per_chain": samples.chain_lengths,
        "steps_per_chain": samples.steps_per_chain,
        "chain_agreement_ks": chain_agreement(&samples.split_by_chain(errors)),
        "median_error": quantile(errors, 0.5)?,
        "interdecile_width": interdecile_width(errors)?,
    }))
}

fn cdf_artifacts(cdf: &ErrorCdf, errors: &[f64]) -> Vec<Artifact> {
    vec![
        Artifact::new("cdf.csv", cdf.to_csv()),
        Artifact::new("errors.csv", errors_to_csv(errors)),
    ]
}

fn sampler_knobs(config: &ExperimentConfig) -> Value {
    json!({
        "chain": config.chain,
        "seed": config.seed,
        "initialization": "normalized perceptron on the Gram matrix, rescaled to norm sqrt(N)",
        "arc_intersection": "single-arc intersection around theta = 0",
        "grid_points": config.grid_points,
        "zero_margin": "sign(0) = +1; zero-margin test points count as correct",
    })
}

// ---------------------------------------------------------------- images

/// Locations of the four IDX files, probing `name` and `name.gz`.
pub fn resolve_idx_files(settings: &ImageSettings) -> Result<IdxFiles, CliError> {
    let (subdir, url) = match settings.dataset {
        Dataset::Files => {
            return settings
                .files
                .clone()
                .ok_or_else(|| CliError::Config("dataset \"files\" needs a `files` block".into()))
        }
        Dataset::Mnist => ("mnist", MNIST_URL),
        Dataset::FashionMnist => ("fashion-mnist", FASHION_MNIST_URL),
    };
    let root = env::var_os(DATA_DIR_ENV).map(PathBuf::from).ok_or_else(|| {
        CliError::Data(format!(
            "{DATA_DIR_ENV} is not set; place the IDX files from {url} under ${DATA_DIR_ENV}/{subdir}/"
        ))
    })?;
    let dir = root.join(subdir);
    let find = |stem: &str| -> Result<PathBuf, CliError> {
        [dir.join(stem), dir.join(format!("{stem}.gz"))]
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| {
                CliError::Data(format!(
                    "missing {stem}[.gz] in {} (download from {url})",
                    dir.display()
                ))
            })
    };
    Ok(IdxFiles {
        train_images: find("train-images-idx3-ubyte")?,
        train_labels: find("train-labels-idx1-ubyte")?,
        test_images: find("t10k-images-idx3-ubyte")?,
        test_labels: find("t10k-labels-idx1-ubyte")?,
    })
}

/// Whether the IDX files for `dataset` can be found.
pub fn dataset_available(dataset: Dataset) -> bool {
    let settings = ImageSettings {
        dataset,
        ..ImageSettings::default()
    };
    resolve_idx_files(&settings).is_ok()
}

fn load_task(images: &Path, labels: &Path, classes: (u8, u8)) -> Result<LabeledDataset, CliError> {
    let images = load_idx(images)?;
    let labels = load_idx(labels)?;
    Ok(make_binary_task(&images, &labels, classes.0, classes.1)?)
}

fn stack(a: &LabeledDataset, b: &LabeledDataset) -> Result<LabeledDataset, CliError> {
    let points = concatenate(Axis(0), &[a.points().view(), b.points().view()])
        .map_err(|e| CliError::Data(e.to_string()))?;
    let labels = a.labels().iter().chain(b.labels()).copied().collect();
    Ok(LabeledDataset::new(points, labels)?)
}

/// Training sample, test sample and held-out pool of one binary image task.
pub struct ImageSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Training-file points used neither for training nor testing.
    pub pool: LabeledDataset,
    pub standardization: Option<Standardization>,
    pub test_from_test_file: usize,
    pub test_from_train_file: usize,
}

/// Draws `n` training points from the training file and `m` test points
/// from the test file, topping the test set up with held-out training-file
/// points when the test file has fewer than `m` examples of the two classes.
/// Standardization statistics come from the whole two-class training file.
pub fn prepare_images(
    settings: &ImageSettings,
    n: usize,
    seed: u64,
    salt: u64,
) -> Result<ImageSplit, CliError> {
    let files = resolve_idx_files(settings)?;
    let classes = settings.classes()?;
    let train_all = load_task(&files.train_images, &files.train_labels, classes)?;
    let test_all = load_task(&files.test_images, &files.test_labels, classes)?;
    if n >= train_all.len() {
        return Err(CliError::Config(format!(
            "n = {n} but the training file has {} points of the two classes",
            train_all.len()
        )));
    }
    let standardization = if settings.standardize {
        Some(Standardization::fit(train_all.points())?)
    } else {
        None
    };
    let (train, rest) =
        train_all.split_random(n, &mut rng(seed, STREAM_TRAIN_SPLIT + 16 * salt))?;
    let mut test_rng = rng(seed, STREAM_TEST_SPLIT + 16 * salt);
    let m = settings.m;
    let (test, pool, from_test, from_train) = if test_all.len() >= m {
        let (test, _) = test_all.split_random(m, &mut test_rng)?;
        (test, rest, m, 0)
    } else {
        let need = m - test_all.len();
        if need > rest.len() {
            return Err(CliError::Data(format!(
                "not enough points for m = {m} test points"
            )));
        }
        let (fill, pool) = rest.split_random(need, &mut test_rng)?;
        (stack(&test_all, &fill)?, pool, test_all.len(), need)
    };
    let apply = |d: LabeledDataset| -> Result<LabeledDataset, CliError> {
        match &standardization {
            Some(s) => Ok(s.apply(&d)?),
            None => Ok(d),
        }
    };
    Ok(ImageSplit {
        train: apply(train)?,
        test: apply(test)?,
        pool: apply(pool)?,
        standardization,
        test_from_test_file: from_test,
        test_from_train_file: from_train,
    })
}

/// Per-feature standardization of `train`/`test` feature matrices fitted on `fit_on`.
fn standardize_features(
    fit_on: &Array2<f64>,
    mats: [&Array2<f64>; 2],
) -> Result<[Array2<f64>; 2], CliError> {
    let s = Standardization::fit(fit_on)?;
    let mean = ndarray::Array1::from(s.mean.clone());
    let scale = ndarray::Array1::from(s.scale.clone());
    Ok(mats.map(|m| (m - &mean) / &scale))
}

fn run_image(config: &ExperimentConfig) -> Result<Execution, CliError> {
    let image = config.image.as_ref().expect("resolved config");
    let split = prepare_images(image, image.n, config.seed, 0)?;
    let d = split.train.dim();
    let mut artifacts = Vec::new();
    let mut feature_knobs = json!({ "kind": "linear" });
    let (train_f, test_f) = match config.rrf {
        None => {
            if image.n >= d {
                return Err(CliError::Config(format!("interpolation needs n < d = {d}")));
            }
            (split.train.points().clone(), split.test.points().clone())
        }
        Some(rrf) => {
            let map = FeatureMap::sample_random_relu(
                rrf.n_features,
                d,
                &mut rng(config.seed, STREAM_PROJECTION),
            )?;
            let mut train_f = map.transform(split.train.points())?;
            let mut test_f = map.transform(split.test.points())?;
            if rrf.standardize_features {
                let pool_f = map.transform(split.pool.points())?;
                let fit_on = concatenate(Axis(0), &[train_f.view(), pool_f.view()])
                    .map_err(|e| CliError::Data(e.to_string()))?;
                [train_f, test_f] = standardize_features(&fit_on, [&train_f, &test_f])?;
            }
            artifacts.push(Artifact::new(
                "projection.csv",
                matrix_csv(map.projection().expect("relu map")),
            ));
            feature_knobs = json!({
                "kind": "random_relu",
                "n_features": rrf.n_features,
                "alpha": image.n as f64 / rrf.n_features as f64,
                "projection_rows": "Gaussian draws normalized to the unit sphere",
                "standardize_features": rrf.standardize_features,
            });
            (train_f, test_f)
        }
    };
    let train = LabeledDataset::new(train_f, split.train.labels().to_vec())?;
    let map = FeatureMap::linear(train.dim());
    let constraints = build_constraints(&train, &map)?;
    let samples = sample_interpolators(&constraints, &config.chain, config.seed)?;
    let errors = empirical_errors(&samples.weights, &test_f, split.test.labels())?;
    let train_errors = empirical_errors(&samples.weights, train.points(), train.labels())?;
    let mut cdf = error_cdf(&errors, &uniform_grid(config.grid_points))?;
    cdf.n_test = split.test.len();
    artifacts.splice(0..0, cdf_artifacts(&cdf, &errors));

    let mut diagnostics = chain_diagnostics(&samples, &errors)?;
    diagnostics["max_train_error"] = json!(train_errors.iter().copied().fold(0.0, f64::max));
    diagnostics["cdf_at_0.05"] = json!(cdf.value_at(0.05));
    diagnostics["cdf_at_0.08"] = json!(cdf.value_at(0.08));
    diagnostics["n_test"] = json!(split.test.len());
    diagnostics["test_from_test_file"] = json!(split.test_from_test_file);
    diagnostics["test_from_train_file"] = json!(split.test_from_train_file);
    diagnostics["input_dim"] = json!(d);
    let mut knobs = sampler_knobs(config);
    knobs["features"] = feature_knobs;
    knobs["standardization"] = standardization_knob(image);
    knobs["training_sample"] =
        json!("uniform without replacement from the two-class training file");
    Ok(Execution {
        artifacts,
        knobs,
        diagnostics,
    })
}

fn standardization_knob(image: &ImageSettings) -> Value {
    if image.standardize {
        json!({ "mode": "per_feature", "fitted_on": "two-class training file", "zero_variance_scale": 1.0 })
    } else {
        json!({ "mode": "none" })
    }
}

fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|&v| fmt_decimal(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

// -------------------------------------------------------------- gaussian

fn run_gaussian(config: &ExperimentConfig) -> Result<Execution, CliError> {
    let g = config.gaussian.expect("resolved config");
    let spec = GaussianMixtureSpec::isotropic(g.dim, g.snr)?;
    let train = sample_gaussian_mixture(g.dim, g.snr, g.n, &mut rng(config.seed, STREAM_MIXTURE))?;
    let constraints = build_constraints(&train, &FeatureMap::linear(g.dim))?;
    let samples = sample_interpolators(&constraints, &config.chain, config.seed)?;
    let errors = samples
        .weights
        .rows()
        .into_iter()
        .map(|w| population_error_gaussian(w, &spec))
        .collect::<Result<Vec<_>, _>>()?;
    let cdf = error_cdf(&errors, &uniform_grid(config.grid_points))?;
    let mut diagnostics = chain_diagnostics(&samples, &errors)?;
    let bound = bayes_lower_bound(&spec);
    diagnostics["bayes_lower_bound"] = json!(bound);
    diagnostics["min_error"] = json!(errors.iter().copied().fold(f64::INFINITY, f64::min));
    diagnostics["all_above_bound"] = json!(errors.iter().all(|&e| e >= bound));
    diagnostics["alpha"] = json!(g.n as f64 / g.dim as f64);
    let mut knobs = sampler_knobs(config);
    knobs["features"] = json!({ "kind": "linear" });
    knobs["mixture"] = json!({ "mu": "snr / sqrt(d) in every coordinate", "sigma": "identity" });
    knobs["error"] = json!("closed-form population error");
    Ok(Execution {
        artifacts: cdf_artifacts(&cdf, &errors),
        knobs,
        diagnostics,
    })
}

// -------------------------------------------------------------- equicorr

/// Evaluation grid for the limit CDF at `(n, ρ)`: a few multiples of the
/// Gamma mean `shape/n`, clipped to `[0, 1]`.
pub fn equicorr_grid(model: &EquicorrModel, points: usize) -> Vec<f64> {
    let upper = (10.0 * model.gamma_shape().max(1.0) / model.n() as f64).min(1.0);
    uniform_grid(points)
        .into_iter()
        .map(|t| t * upper)
        .collect()
}

fn run_equicorr(config: &ExperimentConfig) -> Result<Execution, CliError> {
    let e = config.equicorr.as_ref().expect("resolved config");
    let mut rows = Vec::new();
    for &rho in &e.rhos {
        for &n in &e.ns {
            rows.push(theory_row(&EquicorrModel::new(n, rho)?)?);
        }
    }
    let mut cdf_csv = String::from("n,rho,epsilon,limit_cdf,exact,simulated\n");
    let mut sup_gaps = Vec::new();
    for (k, &rho) in e.rhos.iter().enumerate() {
        let model = EquicorrModel::new(e.cdf_n, rho)?;
        let grid = equicorr_grid(&model, config.grid_points);
        let sim = simulate_equicorr_rn(
            &model,
            e.cdf_draws,
            &grid,
            &mut rng(config.seed, STREAM_EQUICORR + 16 * k as u64),
        )?;
        let mut gap = 0.0f64;
        for (&eps, &s) in grid.iter().zip(&sim.cdf) {
            let limit = limit_cdf(&model, eps)?;
            let exact = exact_rn(&model, eps)?;
            gap = gap.max((s - limit).abs());
            cdf_csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.cdf_n,
                fmt_decimal(rho),
                fmt_decimal(eps),
                fmt_decimal(limit),
                fmt_decimal(exact),
                fmt_decimal(s)
            ));
        }
        sup_gaps.push(json!({
            "rho": rho,
            "critical_value": critical_value(&model),
            "sup_simulated_vs_limit": gap,
        }));
    }
    let diagnostics = json!({
        "ratios": rows.iter().map(|r| json!({"n": r.n, "rho": r.rho, "ratio": r.ratio})).collect::<Vec<_>>(),
        "limit_cdf": sup_gaps,
    });
    let knobs = json!({
        "seed": config.seed,
        "quadrature": "adaptive Gauss-Kronrod 7/15 on [-12, max(12, z_peak + 8)], rel_tol 1e-13, log-space integrand",
        "simulation": "importance weights Phi(aZ)^n in log space",
        "cdf_draws": e.cdf_draws,
    });
    Ok(Execution {
        artifacts: vec![
            Artifact::new("theory.csv", theory_csv(&rows)),
            Artifact::new("limit_cdf.csv", cdf_csv),
        ],
        knobs,
        diagnostics,
    })
}

// ------------------------------------------------------------ worst case

/// Columns with non-zero spread; constant (e.g. blank-border) pixels carry no
/// direction a classifier can use.
fn effective_dim(points: &Array2<f64>) -> usize {
    points
        .columns()
        .into_iter()
        .filter(|c| c.iter().any(|&v| v != c[0]))
        .count()
}

fn run_worst_case(config: &ExperimentConfig) -> Result<Execution, CliError> {
    let image = config.image.as_ref().expect("resolved config");
    let wc = config.worst_case.as_ref().expect("resolved config");
    let mut csv = String::from(
        "n,n_bad,worst_case_error,train_accuracy,bad_accuracy,iterations,separated,warning,typical_median_error\n",
    );
    let mut per_n = Vec::new();
    for (k, &n) in wc.ns.iter().enumerate() {
        let salt = k as u64 + 1;
        let split = prepare_images(image, n, config.seed, salt)?;
        let map = FeatureMap::linear(split.train.dim());
        let pool_and_train = stack(&split.train, &split.pool)?;
        let d_eff = effective_dim(pool_and_train.points());
        if n + 1 >= d_eff && wc.n_bad.is_none() {
            return Err(CliError::Config(format!(
                "n = {n} leaves no room for bad points (d_eff = {d_eff})"
            )));
        }
        let cfg = WorstCaseConfig {
            n_bad: Some(wc.n_bad.unwrap_or(d_eff - 1 - n)),
            combo_size: wc.combo_size,
            logistic: LogisticConfig {
                lr_scale: wc.lr_scale,
                max_iters: wc.max_iters,
            },
            min_train_accuracy: wc.min_train_accuracy,
        };
        let fit = worst_case_classifier(
            &split.train,
            &split.pool,
            &map,
            &cfg,
            &mut rng(config.seed, STREAM_BAD_POINTS + 16 * salt),
        )?;
        let worst_error = empirical_error(fit.weights.view(), &split.test, &map)?;
        let constraints = build_constraints(&split.train, &map)?;
        let samples =
            sample_interpolators(&constraints, &config.chain, config.seed.wrapping_add(salt))?;
        let typical = empirical_errors(&samples.weights, split.test.points(), split.test.labels())?;
        let median = quantile(&typical, 0.5)?;
        csv.push_str(&format!(
            "{n},{},{},{},{},{},{},{},{}\n",
            fit.n_bad,
            fmt_decimal(worst_error),
            fmt_decimal(fit.train_accuracy),
            fmt_decimal(fit.bad_accuracy),
            fit.iterations,
            fit.separated,
            fit.warning,
            fmt_decimal(median)
        ));
        per_n.push(json!({
            "n": n,
            "effective_dim": d_eff,
            "worst_case_error": worst_error,
            "typical_median_error": median,
            "gd_separated": fit.separated,
            "gd_warning": fit.warning,
            "gd_iterations": fit.iterations,
            "chain_agreement_ks": chain_agreement(&samples.split_by_chain(&typical)),
        }));
    }
    let mut knobs = sampler_knobs(config);
    knobs["standardization"] = standardization_knob(image);
    knobs["bad_points"] = json!({
        "scheme": "Uniform(0,1)-weighted nonnegative combinations of -y x over held-out training-file points, label +1, rescaled to the mean training-point norm",
        "combo_size": wc.combo_size,
        "n_bad": wc.n_bad.map_or_else(|| json!("(d_eff - 1) - n"), |v| json!(v)),
    });
    knobs["gradient_descent"] = json!({
        "loss": "logistic, full batch, from w = 0",
        "step": "lr_scale * 4 / ||X||_op^2",
        "lr_scale": wc.lr_scale,
        "max_iters": wc.max_iters,
        "stop": "all margins positive",
        "min_train_accuracy": wc.min_train_accuracy,
    });
    Ok(Execution {
        artifacts: vec![Artifact::new("worst_case.csv", csv)],
        knobs,
        diagnostics: json!({ "per_n": per_n }),
    })
}
