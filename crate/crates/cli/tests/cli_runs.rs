use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;
use verspace::data::IdxTensor;

const SIDE: usize = 6;

fn verspace() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_verspace"));
    cmd.env_remove("VERSPACE_DATA_DIR");
    cmd
}

fn run(args: &[&str], config: Option<&Value>, dir: &Path) -> Output {
    let mut cmd = verspace();
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(cfg) = config {
        let path = dir.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn run_json(dir: &Path) -> Value {
    serde_json::from_str(&read(dir, "run.json")).unwrap()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// Pixel `k` of an image of `class`: a class-specific stripe pattern plus
/// deterministic jitter.
fn pixel(class: u8, index: usize, k: usize) -> u8 {
    let (row, col) = (k / SIDE, k % SIDE);
    let on = match class {
        3 => row % 2 == 0,
        7 => col % 2 == 0,
        _ => row == col,
    };
    let jitter = ((index * 7919 + k * 104_729) % 61) as u8;
    if on {
        180 + jitter
    } else {
        jitter
    }
}

fn write_split(dir: &Path, prefix: &str, classes: &[(u8, usize)]) {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut index = 0;
    for &(class, count) in classes {
        for _ in 0..count {
            images.extend((0..SIDE * SIDE).map(|k| pixel(class, index, k)));
            labels.push(class);
            index += 1;
        }
    }
    let n = labels.len();
    let images = IdxTensor::new(vec![n, SIDE, SIDE], images).unwrap();
    let labels = IdxTensor::new(vec![n], labels).unwrap();
    fs::write(dir.join(format!("{prefix}-images")), images.to_bytes()).unwrap();
    fs::write(dir.join(format!("{prefix}-labels")), labels.to_bytes()).unwrap();
}

/// Two-class training and test files with a distractor class; the test file
/// is smaller than the requested test set.
fn synthetic_images(dir: &Path) -> Value {
    write_split(dir, "train", &[(3, 120), (5, 30), (7, 120)]);
    write_split(dir, "test", &[(7, 25), (3, 25), (5, 10)]);
    let p = |s: &str| dir.join(s).display().to_string();
    json!({
        "dataset": "files",
        "files": {
            "train_images": p("train-images"),
            "train_labels": p("train-labels"),
            "test_images": p("test-images"),
            "test_labels": p("test-labels"),
        },
        "class_pos": 3,
        "class_neg": 7,
        "n": 12,
        "m": 80,
    })
}

fn small_chain() -> Value {
    json!({ "n_samples": 400, "warmup": 100, "thinning": 5, "chains": 2 })
}

fn sha256_of(path: PathBuf) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn gaussian_linear_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "gaussian_linear",
        "chain": { "n_samples": 1000 },
        "gaussian": { "dim": 100, "snr": 2.0, "n": 50 },
    });
    assert_ok(&run(&["gaussian-linear"], Some(&cfg), dir.path()));

    let cdf = read(dir.path(), "cdf.csv");
    assert!(cdf.starts_with("epsilon,cdf\n"));
    assert!(!cdf.contains('\r'));
    let rows = csv_rows(&cdf);
    assert_eq!(rows.len(), 512);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[1])));
    assert!(rows
        .windows(2)
        .all(|w| w[0][1] <= w[1][1] && w[0][0] < w[1][0]));

    let errors = read(dir.path(), "errors.csv");
    assert!(errors.starts_with("sample_index,error\n"));
    assert_eq!(errors.lines().count(), 1001);

    let record = run_json(dir.path());
    assert_eq!(record["task"], "gaussian_linear");
    assert_eq!(record["config"]["gaussian"]["n"], 50);
    for entry in record["outputs"].as_array().unwrap() {
        let file = entry["file"].as_str().unwrap();
        assert_eq!(
            entry["sha256"],
            sha256_of(dir.path().join("out").join(file))
        );
    }
    assert_eq!(record["diagnostics"]["all_above_bound"], true);
    assert!(record["knobs"]["zero_margin"].is_string());
    assert_eq!(record["diagnostics"]["alpha"], 0.5);
}

#[test]
fn equicorr_theory_table() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "equicorr_theory",
        "grid_points": 64,
        "equicorr": { "ns": [1000], "rhos": [0.5], "cdf_n": 200, "cdf_draws": 5000 },
    });
    assert_ok(&run(&["equicorr-theory"], Some(&cfg), dir.path()));
    let theory = read(dir.path(), "theory.csv");
    let mut lines = theory.lines();
    assert_eq!(lines.next(), Some("n,rho,quadrature,asymptotic,ratio"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], &["1000", "0.5"]);
    let quad: f64 = row[2].parse().unwrap();
    let asym: f64 = row[3].parse().unwrap();
    assert!((quad * 1001.0 - 1.0).abs() < 1e-9);
    assert!((asym * 1000.0 - 1.0).abs() < 1e-12);

    let cdf = read(dir.path(), "limit_cdf.csv");
    assert!(cdf.starts_with("n,rho,epsilon,limit_cdf,exact,simulated\n"));
    assert_eq!(cdf.lines().count(), 65);
}

#[test]
fn image_linear_on_idx_files() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "image_linear",
        "chain": small_chain(),
        "image": synthetic_images(dir.path()),
    });
    assert_ok(&run(&["image-linear"], Some(&cfg), dir.path()));
    let record = run_json(dir.path());
    let diag = &record["diagnostics"];
    assert_eq!(diag["max_train_error"], 0.0);
    assert_eq!(diag["n_test"], 80);
    assert_eq!(diag["test_from_test_file"], 50);
    assert_eq!(diag["test_from_train_file"], 30);
    assert_eq!(diag["input_dim"], 36);
    assert_eq!(record["knobs"]["standardization"]["mode"], "per_feature");
    // The stripe classes are easy: typical interpolators rarely err.
    assert!(diag["median_error"].as_f64().unwrap() < 0.2);
    assert_eq!(csv_rows(&read(dir.path(), "errors.csv")).len(), 400);
}

#[test]
fn image_rrf_persists_projection() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "image_rrf",
        "chain": small_chain(),
        "image": synthetic_images(dir.path()),
        "rrf": { "n_features": 24, "standardize_features": true },
    });
    assert_ok(&run(&["image-rrf"], Some(&cfg), dir.path()));
    let projection = read(dir.path(), "projection.csv");
    let rows: Vec<Vec<f64>> = projection
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        assert_eq!(r.len(), 36);
        assert!((r.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    }
    let record = run_json(dir.path());
    assert_eq!(record["knobs"]["features"]["standardize_features"], true);
    assert_eq!(record["knobs"]["features"]["alpha"], 0.5);
    assert_eq!(record["diagnostics"]["max_train_error"], 0.0);
}

#[test]
fn worst_case_table() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "worst_case",
        "chain": small_chain(),
        "image": synthetic_images(dir.path()),
        "worst_case": { "ns": [8, 12], "max_iters": 20000 },
    });
    assert_ok(&run(&["worst-case"], Some(&cfg), dir.path()));
    let table = read(dir.path(), "worst_case.csv");
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("n,n_bad,worst_case_error,train_accuracy,bad_accuracy,iterations,separated,warning,typical_median_error")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "8");
    let record = run_json(dir.path());
    assert!(record["knobs"]["bad_points"]["scheme"].is_string());
    assert!(record["knobs"]["gradient_descent"]["max_iters"].is_number());
}

#[test]
fn seed_flag_overrides_config() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "task": "gaussian_linear",
        "seed": 1,
        "chain": { "n_samples": 200, "warmup": 10, "thinning": 2, "chains": 2 },
        "gaussian": { "dim": 20, "snr": 2.0, "n": 5 },
    });
    assert_ok(&run(
        &["gaussian-linear", "--seed", "9", "--threads", "2"],
        Some(&cfg),
        dir.path(),
    ));
    let first = read(dir.path(), "errors.csv");
    assert_eq!(run_json(dir.path())["config"]["seed"], 9);
    assert_ok(&run(&["gaussian-linear"], Some(&cfg), dir.path()));
    assert_ne!(read(dir.path(), "errors.csv"), first);
    assert_ok(&run(
        &["gaussian-linear", "--seed", "9"],
        Some(&cfg),
        dir.path(),
    ));
    assert_eq!(read(dir.path(), "errors.csv"), first);
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let typo = json!({ "task": "gaussian_linear", "gausian": {} });
    assert_eq!(
        run(&["gaussian-linear"], Some(&typo), dir.path())
            .status
            .code(),
        Some(2)
    );
    let mismatch = json!({ "task": "equicorr_theory" });
    assert_eq!(
        run(&["gaussian-linear"], Some(&mismatch), dir.path())
            .status
            .code(),
        Some(2)
    );
    let not_interpolating = json!({ "task": "gaussian_linear", "gaussian": { "dim": 5, "n": 5 } });
    assert_eq!(
        run(&["gaussian-linear"], Some(&not_interpolating), dir.path())
            .status
            .code(),
        Some(2)
    );
    assert!(!dir.path().join("out").join("run.json").exists());
}

#[test]
fn missing_data_exits_3() {
    let dir = TempDir::new().unwrap();
    let out = run(&["image-linear"], None, dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("VERSPACE_DATA_DIR"));

    let empty = dir.path().join("data");
    fs::create_dir_all(&empty).unwrap();
    let out = verspace()
        .env("VERSPACE_DATA_DIR", &empty)
        .args(["image-linear", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn contradictory_labels_exit_4() {
    let dir = TempDir::new().unwrap();
    // Every image is identical, so any three training points include both
    // labels and the cone {w : y_i x_i.w >= 0} has no interior.
    let image: Vec<u8> = (0..SIDE * SIDE).map(|k| (k * 5) as u8).collect();
    let write = |prefix: &str, labels: Vec<u8>| {
        let n = labels.len();
        let pixels = image
            .iter()
            .copied()
            .cycle()
            .take(n * SIDE * SIDE)
            .collect();
        let images = IdxTensor::new(vec![n, SIDE, SIDE], pixels).unwrap();
        let labels = IdxTensor::new(vec![n], labels).unwrap();
        fs::write(
            dir.path().join(format!("{prefix}-images")),
            images.to_bytes(),
        )
        .unwrap();
        fs::write(
            dir.path().join(format!("{prefix}-labels")),
            labels.to_bytes(),
        )
        .unwrap();
    };
    let mut image_cfg = synthetic_images(dir.path());
    write("train", vec![3, 7, 3, 7]);
    write("test", vec![3, 7]);
    image_cfg["n"] = json!(3);
    image_cfg["m"] = json!(2);
    image_cfg["standardize"] = json!(false);
    let cfg = json!({ "task": "image_linear", "chain": small_chain(), "image": image_cfg });
    let out = run(&["image-linear"], Some(&cfg), dir.path());
    assert_eq!(
        out.status.code(),
        Some(4),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
