//! Datasets: IDX ingestion, binary-task extraction, standardization and
//! synthetic Gaussian mixtures.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::GaussianMixtureSpec;

/// Per-feature affine transform `x ↦ (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Per-feature mean and population standard deviation; zero-variance
    /// features keep scale 1.
    pub fn fit(points: &Array2<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::invalid("standardization needs at least two points"));
        }
        let mean = points.mean_axis(Axis(0)).expect("non-empty");
        let var = points.var_axis(Axis(0), 0.0);
        let scale = var.mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
        Ok(Self {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
        })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: data.dim(),
            });
        }
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        let points = (data.points() - &mean) / &scale;
        Ok(LabeledDataset {
            points,
            labels: data.labels.clone(),
            standardization: Some(self.clone()),
        })
    }
}

/// Points with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Array2<f64>,
    labels: Vec<i8>,
    standardization: Option<Standardization>,
}

impl LabeledDataset {
    pub fn new(points: Array2<f64>, labels: Vec<i8>) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.nrows(),
                found: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::invalid(format!("label {bad} is not ±1")));
        }
        Ok(Self {
            points,
            labels,
            standardization: None,
        })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: self.points.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            standardization: self.standardization.clone(),
        }
    }

    /// Draws `n` points uniformly without replacement. Returns the sample
    /// and the remaining points, both in original order.
    pub fn split_random<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Self, Self)> {
        if n > self.len() {
            return Err(Error::Data(format!(
                "requested {n} points from a dataset of {}",
                self.len()
            )));
        }
        let mut picked = rand::seq::index::sample(rng, self.len(), n).into_vec();
        picked.sort_unstable();
        let mut mask = vec![false; self.len()];
        picked.iter().for_each(|&i| mask[i] = true);
        let rest: Vec<usize> = (0..self.len()).filter(|&i| !mask[i]).collect();
        Ok((self.select(&picked), self.select(&rest)))
    }

    /// Copy with every label negated.
    pub fn flip_labels(&self) -> Self {
        Self {
            points: self.points.clone(),
            labels: self.labels.iter().map(|&y| -y).collect(),
            standardization: self.standardization.clone(),
        }
    }
}

/// Centre and scale each feature using the dataset's own statistics.
pub fn standardize(data: &LabeledDataset) -> Result<LabeledDataset> {
    Standardization::fit(data.points())?.apply(data)
}

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_UBYTE: u8 = 0x08;

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 255 {
            return Err(Error::Idx(format!("unsupported rank {}", dims.len())));
        }
        let expected = checked_len(&dims)?;
        if expected != data.len() {
            return Err(Error::Idx(format!(
                "shape {dims:?} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Idx("truncated header".into()));
        }
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        let rank = bytes[3] as usize;
        if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || rank == 0 {
            return Err(Error::Idx(format!(
                "bad magic: expected {IDX_LABELS_MAGIC:#010x} (labels) or {IDX_IMAGES_MAGIC:#010x} (images), found {magic:#010x}"
            )));
        }
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::Idx("truncated dimension list".into()));
        }
        let dims: Vec<usize> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let expected = checked_len(&dims)?;
        let payload = &bytes[header..];
        if payload.len() < expected {
            return Err(Error::Idx(format!(
                "truncated payload: shape {dims:?} needs {expected} bytes, found {}",
                payload.len()
            )));
        }
        if payload.len() > expected {
            return Err(Error::Idx(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        Ok(Self {
            dims,
            data: payload.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&[0, 0, IDX_UBYTE, self.dims.len() as u8]);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn magic(&self) -> u32 {
        u32::from_be_bytes([0, 0, IDX_UBYTE, self.dims.len() as u8])
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| {
            if d > u32::MAX as usize {
                return None;
            }
            acc.checked_mul(d)
        })
        .ok_or_else(|| Error::Idx(format!("shape overflow for dimensions {dims:?}")))
}

/// Reads an IDX file; names ending in `.gz` are decompressed transparently.
pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&shown, e))?;
    let mut bytes = Vec::new();
    let gz = path.extension().is_some_and(|e| e == "gz");
    let read = if gz {
        GzDecoder::new(file).read_to_end(&mut bytes)
    } else {
        BufReader::new(file).read_to_end(&mut bytes)
    };
    read.map_err(|e| Error::io(&shown, e))?;
    IdxTensor::parse(&bytes)
}

/// Keeps two classes, flattens each image, and maps `class_pos → +1`,
/// `class_neg → −1`. Pixel values stay in raw byte units.
pub fn make_binary_task(
    images: &IdxTensor,
    labels: &IdxTensor,
    class_pos: u8,
    class_neg: u8,
) -> Result<LabeledDataset> {
    if class_pos == class_neg {
        return Err(Error::invalid("binary task needs two distinct classes"));
    }
    if labels.dims().len() != 1 || images.dims().len() < 2 {
        return Err(Error::Data(format!(
            "expected rank-1 labels and rank>=2 images, got {:?} and {:?}",
            labels.dims(),
            images.dims()
        )));
    }
    let count = images.dims()[0];
    if labels.dims()[0] != count {
        return Err(Error::Data(format!(
            "{count} images but {} labels",
            labels.dims()[0]
        )));
    }
    let dim: usize = images.dims()[1..].iter().product();
    let keep: Vec<(usize, i8)> = labels
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| match c {
            c if c == class_pos => Some((i, 1)),
            c if c == class_neg => Some((i, -1)),
            _ => None,
        })
        .collect();
    for class in [class_pos, class_neg] {
        if !labels.data().contains(&class) {
            return Err(Error::Data(format!(
                "class {class} does not occur in the labels"
            )));
        }
    }
    let mut points = Array2::<f64>::zeros((keep.len(), dim));
    for (row, &(i, _)) in points.rows_mut().into_iter().zip(&keep) {
        let pixels = &images.data()[i * dim..(i + 1) * dim];
        row.into_iter()
            .zip(pixels)
            .for_each(|(v, &p)| *v = f64::from(p));
    }
    LabeledDataset::new(points, keep.into_iter().map(|(_, y)| y).collect())
}

/// `n` draws of `(x, y)`: fair-coin `y`, `x ~ N(y μ, Σ)` with diagonal `Σ`.
pub fn sample_mixture<R: Rng + ?Sized>(
    spec: &GaussianMixtureSpec,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let dim = spec.dim();
    let sd: Vec<f64> = spec.sigma_diag().iter().map(|v| v.sqrt()).collect();
    let mut points = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for mut row in points.rows_mut() {
        let y: i8 = if rng.random::<bool>() { 1 } else { -1 };
        for (j, v) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *v = f64::from(y) * spec.mu()[j] + sd[j] * z;
        }
        labels.push(y);
    }
    LabeledDataset::new(points, labels)
}

/// Isotropic mixture with `μ = (snr/√d, …, snr/√d)` and `Σ = I`.
pub fn sample_gaussian_mixture<R: Rng + ?Sized>(
    dim: usize,
    snr: f64,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    sample_mixture(&GaussianMixtureSpec::isotropic(dim, snr)?, n, rng)
}

/// Loads `label,x1,...,xd` rows with ±1 labels. A non-numeric first line is
/// treated as a header.
pub fn load_csv_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&shown, e))?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&shown, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Ok(label) = fields[0].parse::<f64>() else {
            if lineno == 0 {
                continue;
            }
            return Err(Error::Data(format!("{shown}:{}: bad label", lineno + 1)));
        };
        let y = if label == 1.0 {
            1
        } else if label == -1.0 {
            -1
        } else {
            return Err(Error::Data(format!(
                "{shown}:{}: label {label} is not ±1",
                lineno + 1
            )));
        };
        let d = fields.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Data(format!("{shown}:{}: ragged row", lineno + 1)));
        }
        for f in &fields[1..] {
            values
                .push(f.parse::<f64>().map_err(|_| {
                    Error::Data(format!("{shown}:{}: bad value {f:?}", lineno + 1))
                })?);
        }
        labels.push(y);
    }
    let dim = dim.unwrap_or(0);
    let points = Array2::from_shape_vec((labels.len(), dim), values)
        .map_err(|e| Error::Data(e.to_string()))?;
    LabeledDataset::new(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::chain_rng;
    use ndarray::array;
    use std::io::Write;

    #[test]
    fn parse_labels() {
        let t = IdxTensor::parse(&[0, 0, 8, 1, 0, 0, 0, 2, 0, 1]).unwrap();
        assert_eq!(t.dims(), &[2]);
        assert_eq!(t.data(), &[0, 1]);
        assert_eq!(t.magic(), IDX_LABELS_MAGIC);
    }

    #[test]
    fn parse_images() {
        let mut bytes = vec![0, 0, 8, 3];
        for d in [1u32, 2, 2] {
            bytes.extend_from_slice(&d.to_be_bytes());
        }
        bytes.extend_from_slice(&[0, 255, 128, 64]);
        let t = IdxTensor::parse(&bytes).unwrap();
        assert_eq!(t.dims(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0, 255, 128, 64]);
        assert_eq!(t.magic(), IDX_IMAGES_MAGIC);
        assert_eq!(t.to_bytes(), bytes);
    }

    #[test]
    fn bad_magic_names_values() {
        let err = IdxTensor::parse(&[0, 0, 9, 1, 0, 0, 0, 0])
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("0x00000801") && err.contains("0x00000901"),
            "{err}"
        );
    }

    #[test]
    fn truncated_and_overflowing_payloads() {
        assert!(IdxTensor::parse(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]).is_err());
        assert!(IdxTensor::parse(&[0, 0, 8, 1, 0, 0]).is_err());
        let mut big = vec![0, 0, 8, 4];
        for _ in 0..4 {
            big.extend_from_slice(&u32::MAX.to_be_bytes());
        }
        let err = IdxTensor::parse(&big).unwrap_err().to_string();
        assert!(err.contains("overflow"), "{err}");
    }

    #[test]
    fn gz_files_are_decompressed() {
        let tensor = IdxTensor::new(vec![3], vec![7, 8, 9]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels-idx1-ubyte.gz");
        let mut enc = flate2::write::GzEncoder::new(
            File::create(&path).unwrap(),
            flate2::Compression::default(),
        );
        enc.write_all(&tensor.to_bytes()).unwrap();
        enc.finish().unwrap();
        assert_eq!(load_idx(&path).unwrap(), tensor);

        let raw = dir.path().join("labels-idx1-ubyte");
        std::fs::write(&raw, tensor.to_bytes()).unwrap();
        assert_eq!(load_idx(&raw).unwrap(), tensor);
    }

    fn toy_images() -> (IdxTensor, IdxTensor) {
        let images = IdxTensor::new(vec![4, 1, 2], vec![1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let labels = IdxTensor::new(vec![4], vec![0, 1, 2, 0]).unwrap();
        (images, labels)
    }

    #[test]
    fn binary_task_filters_and_flattens() {
        let (images, labels) = toy_images();
        let task = make_binary_task(&images, &labels, 0, 1).unwrap();
        assert_eq!(task.dim(), 2);
        assert_eq!(task.labels(), &[1, -1, 1]);
        assert_eq!(task.points(), &array![[1.0, 2.0], [3.0, 4.0], [7.0, 8.0]]);
        assert!(make_binary_task(&images, &labels, 0, 10).is_err());
        assert!(make_binary_task(&images, &labels, 1, 1).is_err());
    }

    #[test]
    fn standardize_degenerate_column() {
        let data = LabeledDataset::new(array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]], vec![1, -1, 1])
            .unwrap();
        let s = standardize(&data).unwrap();
        assert!(s.points().column(1).iter().all(|&v| v == 0.0));
        let rec = s.standardization().unwrap();
        assert_eq!(rec.scale[1], 1.0);
        let col = s.points().column(0);
        assert!(col.mean().unwrap().abs() < 1e-12);
        assert!((col.var(0.0) - 1.0).abs() < 1e-12);
        assert!(standardize(&data.select(&[0])).is_err());
    }

    #[test]
    fn test_data_uses_training_statistics() {
        let train = LabeledDataset::new(array![[0.0], [2.0]], vec![1, -1]).unwrap();
        let test = LabeledDataset::new(array![[10.0], [12.0]], vec![1, 1]).unwrap();
        let rec = Standardization::fit(train.points()).unwrap();
        let t = rec.apply(&test).unwrap();
        assert_eq!(t.points(), &array![[9.0], [11.0]]);
    }

    #[test]
    fn mixture_mean_norm_is_snr() {
        let spec = GaussianMixtureSpec::isotropic(50, 2.0).unwrap();
        let norm = spec.mu().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 2.0).abs() < 1e-12);
        let mut rng = chain_rng(8, 0);
        let data = sample_gaussian_mixture(10, 5.0, 100_000, &mut rng).unwrap();
        let mu = GaussianMixtureSpec::isotropic(10, 5.0).unwrap();
        let mut signed_mean = Array1::<f64>::zeros(10);
        for (x, &y) in data.points().rows().into_iter().zip(data.labels()) {
            signed_mean.scaled_add(f64::from(y), &x);
        }
        signed_mean /= data.len() as f64;
        for (m, t) in signed_mean.iter().zip(mu.mu()) {
            assert!((m - t).abs() < 0.02 * 10f64.sqrt());
        }
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let data = LabeledDataset::new(
            Array2::from_shape_fn((20, 2), |(i, j)| (i * 2 + j) as f64),
            vec![1; 20],
        )
        .unwrap();
        let (a, rest) = data.split_random(5, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(rest.len(), 15);
        let (b, _) = data.split_random(5, &mut chain_rng(3, 0)).unwrap();
        assert_eq!(a, b);
        for x in a.points().rows() {
            assert!(rest.points().rows().into_iter().all(|r| r != x));
        }
        assert!(data.split_random(21, &mut chain_rng(3, 0)).is_err());
    }

    #[test]
    fn csv_dataset_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "label,a,b\n1,0.5,2\n-1,3,4\n").unwrap();
        let d = load_csv_dataset(&path).unwrap();
        assert_eq!(d.labels(), &[1, -1]);
        assert_eq!(d.points(), &array![[0.5, 2.0], [3.0, 4.0]]);
        std::fs::write(&path, "1,0.5\n2,3\n").unwrap();
        assert!(load_csv_dataset(&path).is_err());
    }

    #[test]
    fn rejects_non_sign_labels() {
        assert!(LabeledDataset::new(array![[1.0]], vec![0]).is_err());
        assert!(LabeledDataset::new(array![[1.0]], vec![1, 1]).is_err());
    }
}
