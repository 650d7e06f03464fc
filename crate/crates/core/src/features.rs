//! Feature maps `φ` and assembly of version-space constraints.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::sampler::ConstraintSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Linear,
    RandomRelu,
}

/// `φ(x) = x` or `φ(x) = max(Ux, 0)` with unit-norm rows of `U`.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
    projection: Option<Array2<f64>>,
    input_dim: usize,
}

impl FeatureMap {
    pub fn linear(dim: usize) -> Self {
        Self {
            kind: FeatureKind::Linear,
            projection: None,
            input_dim: dim,
        }
    }

    /// Wraps a given `N × d` projection; every row must have unit norm.
    pub fn random_relu(projection: Array2<f64>) -> Result<Self> {
        for (i, row) in projection.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if (n - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "projection row {i} has norm {n}, expected 1"
                )));
            }
        }
        let input_dim = projection.ncols();
        Ok(Self {
            kind: FeatureKind::RandomRelu,
            projection: Some(projection),
            input_dim,
        })
    }

    /// Draws `U` with rows uniform on the sphere `S^{d-1}`.
    pub fn sample_random_relu<R: Rng + ?Sized>(
        n_features: usize,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::random_relu(sample_sphere_rows(n_features, input_dim, rng)?)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn projection(&self) -> Option<&Array2<f64>> {
        self.projection.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        match &self.projection {
            Some(u) => u.nrows(),
            None => self.input_dim,
        }
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        match self.kind {
            FeatureKind::Linear => {
                if x.len() != self.input_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.input_dim,
                        found: x.len(),
                    });
                }
                Ok(linear_map(x))
            }
            FeatureKind::RandomRelu => random_relu_map(x, self),
        }
    }

    /// Row-wise `φ` over an `n × d` matrix.
    pub fn transform(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: points.ncols(),
            });
        }
        match &self.projection {
            None => Ok(points.clone()),
            Some(u) => Ok(points.dot(&u.t()).mapv_into(relu)),
        }
    }
}

fn relu(z: f64) -> f64 {
    z.max(0.0)
}

pub fn linear_map(x: ArrayView1<f64>) -> Array1<f64> {
    x.to_owned()
}

/// `n_rows` independent Gaussian vectors, each normalized to unit length.
pub fn sample_sphere_rows<R: Rng + ?Sized>(
    n_rows: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    if dim == 0 {
        return Err(Error::invalid("sphere dimension must be at least 1"));
    }
    let mut rows = Array2::<f64>::zeros((n_rows, dim));
    for mut row in rows.rows_mut() {
        loop {
            row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let n = row.dot(&row).sqrt();
            if n > 0.0 {
                row /= n;
                break;
            }
        }
    }
    Ok(rows)
}

pub fn random_relu_map(x: ArrayView1<f64>, map: &FeatureMap) -> Result<Array1<f64>> {
    let u = map
        .projection
        .as_ref()
        .ok_or_else(|| Error::invalid("random_relu_map needs a random-ReLU feature map"))?;
    if x.len() != u.ncols() {
        return Err(Error::DimensionMismatch {
            expected: u.ncols(),
            found: x.len(),
        });
    }
    Ok(u.dot(&x).mapv_into(relu))
}

/// Rows `y_i φ(x_i)`; `w` interpolates the data iff every row dots `w` to `>= 0`.
pub fn build_constraints(data: &LabeledDataset, map: &FeatureMap) -> Result<ConstraintSet> {
    let mut rows = map.transform(data.points())?;
    for (i, (mut row, &y)) in rows.axis_iter_mut(Axis(0)).zip(data.labels()).enumerate() {
        if row.iter().all(|&v| v == 0.0) {
            return Err(Error::Data(format!(
                "feature vector of training point {i} is all zero"
            )));
        }
        row *= f64::from(y);
    }
    ConstraintSet::new(rows)
}
