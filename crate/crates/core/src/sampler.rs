//! Rejection-free elliptical slice sampling from a standard Gaussian
//! restricted to the polyhedral cone `{w : A w >= 0}`.
//!
//! Every constraint `a_i` cuts the ellipse `w(θ) = w cos θ + ν sin θ` in a
//! half-circle of angles centred at `atan2(a_iᵀν, a_iᵀw)`. Because the
//! current state (θ = 0) satisfies all constraints, each half-circle contains
//! zero and their intersection is a single arc around zero, so the feasible
//! slice is computed exactly in O(n) per step and θ is drawn uniformly from
//! it. No proposal is ever rejected.

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::TWO_PI;

/// Relative size below which a constraint's trace on the ellipse is ignored.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Relative size of a rounding-level violation that is repaired rather than fatal.
pub const ROUNDING_TOL: f64 = 1e-10;
/// Perceptron update cap used to find a strictly feasible starting point.
pub const PERCEPTRON_MAX_UPDATES: usize = 1_000_000;

/// The rows `y_i φ(x_i)ᵀ` that define the version-space cone.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    rows: Array2<f64>,
    row_norms: Array1<f64>,
}

impl ConstraintSet {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("constraint matrix has non-finite entries"));
        }
        let row_norms: Array1<f64> = rows.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        if let Some(i) = row_norms.iter().position(|&n| n == 0.0) {
            return Err(Error::invalid(format!(
                "constraint row {i} is identically zero"
            )));
        }
        Ok(Self { rows, row_norms })
    }

    /// No constraints in `dim` dimensions.
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            rows: Array2::zeros((0, dim)),
            row_norms: Array1::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn rows(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn row_norms(&self) -> &Array1<f64> {
        &self.row_norms
    }

    /// `A w`.
    pub fn products(&self, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_dim(w.len())?;
        Ok(self.rows.dot(&w))
    }

    pub fn is_feasible(&self, w: ArrayView1<f64>) -> Result<bool> {
        Ok(self.products(w)?.iter().all(|&p| p >= 0.0))
    }

    pub fn is_strictly_feasible(&self, w: ArrayView1<f64>) -> Result<bool> {
        Ok(self.products(w)?.iter().all(|&p| p > 0.0))
    }

    /// `A Aᵀ`, entries `y_i y_j φ(x_i)ᵀφ(x_j)`.
    pub fn gram(&self) -> Array2<f64> {
        self.rows.dot(&self.rows.t())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

/// Disjoint arcs of the circle `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularIntervalSet {
    intervals: Vec<(f64, f64)>,
    total_measure: f64,
}

impl AngularIntervalSet {
    pub fn full_circle() -> Self {
        Self {
            intervals: vec![(0.0, TWO_PI)],
            total_measure: TWO_PI,
        }
    }

    /// The arc `[lo, hi]` with `-π <= lo <= 0 <= hi <= π`, stored on `[0, 2π)`.
    fn around_zero(lo: f64, hi: f64) -> Self {
        debug_assert!((-PI..=0.0).contains(&lo) && (0.0..=PI).contains(&hi));
        let intervals = if lo < 0.0 {
            vec![(0.0, hi), (TWO_PI + lo, TWO_PI)]
        } else {
            vec![(0.0, hi)]
        };
        Self {
            intervals,
            total_measure: hi - lo,
        }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }

    pub fn contains(&self, theta: f64) -> bool {
        let t = theta.rem_euclid(TWO_PI);
        self.intervals.iter().any(|&(lo, hi)| lo <= t && t <= hi)
    }

    /// Maps `offset ∈ [0, total_measure)` to an angle in `(-π, π]`,
    /// walking the intervals in order.
    pub fn angle_at(&self, offset: f64) -> f64 {
        let mut rest = offset;
        let mut theta = self.intervals.last().map_or(0.0, |iv| iv.1);
        for &(lo, hi) in &self.intervals {
            let width = hi - lo;
            if rest < width {
                theta = lo + rest;
                break;
            }
            rest -= width;
        }
        if theta > PI {
            theta - TWO_PI
        } else {
            theta
        }
    }
}

/// Feasible angles `{θ : A (state cos θ + direction sin θ) >= 0}`.
pub fn feasible_arcs(
    state: ArrayView1<f64>,
    direction: ArrayView1<f64>,
    constraints: &ConstraintSet,
) -> Result<AngularIntervalSet> {
    let at_state = constraints.products(state)?;
    let at_direction = constraints.products(direction)?;
    let scale = norm(state) + norm(direction);
    arc_from_products(&at_state, &at_direction, constraints.row_norms(), scale)
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

fn arc_from_products(
    at_state: &Array1<f64>,
    at_direction: &Array1<f64>,
    row_norms: &Array1<f64>,
    scale: f64,
) -> Result<AngularIntervalSet> {
    let mut lo = -PI;
    let mut hi = PI;
    let mut active = false;
    for ((&alpha, &beta), &row_norm) in at_state.iter().zip(at_direction).zip(row_norms) {
        let radius = alpha.hypot(beta);
        if radius < DEGENERATE_TOL * row_norm * scale {
            continue;
        }
        if alpha < 0.0 {
            return Err(Error::NumericalAbort(format!(
                "current state violates a constraint (product {alpha:e}); empty slice"
            )));
        }
        let centre = beta.atan2(alpha);
        lo = lo.max(centre - FRAC_PI_2);
        hi = hi.min(centre + FRAC_PI_2);
        active = true;
    }
    if !active {
        return Ok(AngularIntervalSet::full_circle());
    }
    if hi - lo <= 0.0 {
        return Err(Error::NumericalAbort(
            "feasible slice collapsed to a point".to_string(),
        ));
    }
    Ok(AngularIntervalSet::around_zero(lo, hi))
}

/// Chain length and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub n_samples: usize,
    pub warmup: usize,
    pub thinning: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            warmup: 1_000,
            thinning: 10,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("chain needs at least one sample"));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning stride must be at least 1"));
        }
        Ok(())
    }

    /// Number of kernel applications: warm-up plus `thinning` per stored sample.
    pub fn total_steps(&self) -> usize {
        self.warmup + self.thinning * self.n_samples
    }
}

/// Thinned draws from the constrained Gaussian, one row per sample.
#[derive(Debug, Clone)]
pub struct WeightChain {
    samples: Array2<f64>,
    config: ChainConfig,
    steps: usize,
}

impl WeightChain {
    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Kernel applications performed, including warm-up.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// The LIN-ESS transition kernel with `A w` cached for the current state.
struct Kernel<'a> {
    constraints: &'a ConstraintSet,
    state: Array1<f64>,
    products: Array1<f64>,
}

impl<'a> Kernel<'a> {
    fn new(constraints: &'a ConstraintSet, state: Array1<f64>) -> Result<Self> {
        let products = constraints.products(state.view())?;
        if products.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid("initial state is infeasible"));
        }
        Ok(Self {
            constraints,
            state,
            products,
        })
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let dim = self.state.len();
        let direction: Array1<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let at_direction = self.constraints.rows().dot(&direction);
        let scale = norm(self.state.view()) + norm(direction.view());
        let arcs = arc_from_products(
            &self.products,
            &at_direction,
            self.constraints.row_norms(),
            scale,
        )?;
        let u: f64 = rng.random();
        let mut theta = arcs.angle_at(u * arcs.total_measure());

        // Rounding near an arc endpoint can leave a product slightly negative;
        // such angles are pulled toward θ = 0, which is strictly inside the arc.
        for _ in 0..64 {
            let (sin, cos) = theta.sin_cos();
            let candidate = &self.state * cos + &direction * sin;
            let products = self.constraints.rows().dot(&candidate);
            match worst_violation(
                &products,
                self.constraints.row_norms(),
                norm(candidate.view()),
            ) {
                Violation::None => {
                    self.state = candidate;
                    self.products = products;
                    return Ok(());
                }
                Violation::Rounding => theta *= 0.5,
                Violation::Fatal(rel) => {
                    return Err(Error::NumericalAbort(format!(
                        "proposal violates a constraint by relative {rel:e}"
                    )));
                }
            }
        }
        Err(Error::NumericalAbort(
            "could not repair rounding-level infeasibility".to_string(),
        ))
    }
}

enum Violation {
    None,
    Rounding,
    Fatal(f64),
}

fn worst_violation(products: &Array1<f64>, row_norms: &Array1<f64>, w_norm: f64) -> Violation {
    let mut worst = 0.0f64;
    for (&p, &rn) in products.iter().zip(row_norms) {
        if p < 0.0 {
            worst = worst.max(-p / (rn * w_norm));
        }
    }
    if worst == 0.0 && products.iter().all(|&p| p >= 0.0) {
        Violation::None
    } else if worst <= ROUNDING_TOL {
        Violation::Rounding
    } else {
        Violation::Fatal(worst)
    }
}

/// One LIN-ESS transition from a feasible `state`.
pub fn elliptical_slice_step<R: Rng + ?Sized>(
    state: ArrayView1<f64>,
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let mut kernel = Kernel::new(constraints, state.to_owned())?;
    kernel.step(rng)?;
    Ok(kernel.state)
}

/// A strictly feasible weight vector, found with normalized perceptron
/// updates run on the Gram matrix. The result is rescaled to norm `√N`,
/// the typical radius of the standard Gaussian.
pub fn initial_feasible_point<R: Rng + ?Sized>(
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let dim = constraints.dim();
    if constraints.is_empty() {
        return Ok((0..dim).map(|_| rng.sample(StandardNormal)).collect());
    }
    let n = constraints.len();
    let gram = constraints.gram();
    let inv_norms = constraints.row_norms().mapv(|v| 1.0 / v);
    let mut coeffs = Array1::<f64>::zeros(n);
    let mut margins = Array1::<f64>::zeros(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut updates = 0usize;

    loop {
        let mut clean_pass = false;
        while !clean_pass {
            clean_pass = true;
            order.shuffle(rng);
            for &i in &order {
                if margins[i] <= 0.0 {
                    clean_pass = false;
                    updates += 1;
                    if updates > PERCEPTRON_MAX_UPDATES {
                        return Err(Error::Infeasible(format!(
                            "no strictly feasible point after {PERCEPTRON_MAX_UPDATES} perceptron updates"
                        )));
                    }
                    coeffs[i] += inv_norms[i];
                    margins.scaled_add(inv_norms[i], &gram.column(i));
                }
            }
        }
        let w = constraints.rows().t().dot(&coeffs);
        let direct = constraints.rows().dot(&w);
        if direct.iter().all(|&p| p > 0.0) {
            let scale = (dim as f64).sqrt() / norm(w.view());
            let w = w * scale;
            // Rescaling may round a tiny margin to zero; fall back to the raw vector.
            if constraints.rows().dot(&w).iter().all(|&p| p > 0.0) {
                return Ok(w);
            }
            return Ok(constraints.rows().t().dot(&coeffs));
        }
        // Gram-side margins drifted from the direct evaluation; resynchronize.
        margins = direct;
    }
}

/// A deterministic random source for chain `stream` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs one chain: warm-up, then keeps every `thinning`-th state.
pub fn sample_version_space<R: Rng + ?Sized>(
    constraints: &ConstraintSet,
    config: &ChainConfig,
    rng: &mut R,
) -> Result<WeightChain> {
    config.validate()?;
    let start = initial_feasible_point(constraints, rng)?;
    let mut kernel = Kernel::new(constraints, start)?;
    let mut samples = Array2::<f64>::zeros((config.n_samples, constraints.dim()));
    let mut stored = 0;
    let total = config.total_steps();
    for step in 0..total {
        kernel.step(rng)?;
        if step >= config.warmup && (step - config.warmup + 1).is_multiple_of(config.thinning) {
            samples.row_mut(stored).assign(&kernel.state);
            stored += 1;
        }
    }
    debug_assert_eq!(stored, config.n_samples);
    Ok(WeightChain {
        samples,
        config: *config,
        steps: total,
    })
}

/// Runs `n_chains` independent chains in parallel on the current rayon pool,
/// splitting `config.n_samples` between them (earlier chains take the
/// remainder). Chain `k` draws from stream `k` of `config.seed`; output order
/// is by `k`.
pub fn sample_chains(
    constraints: &ConstraintSet,
    config: &ChainConfig,
    n_chains: usize,
) -> Result<Vec<WeightChain>> {
    config.validate()?;
    if n_chains == 0 || n_chains > config.n_samples {
        return Err(Error::invalid(format!(
            "chain count must lie in 1..={}, got {n_chains}",
            config.n_samples
        )));
    }
    let base = config.n_samples / n_chains;
    let extra = config.n_samples % n_chains;
    (0..n_chains)
        .into_par_iter()
        .map(|k| {
            let per_chain = ChainConfig {
                n_samples: base + usize::from(k < extra),
                ..*config
            };
            let mut rng = chain_rng(config.seed, k as u64);
            sample_version_space(constraints, &per_chain, &mut rng)
        })
        .collect()
}

/// Stacks chain samples row-wise in chain order.
pub fn concat_chains(chains: &[WeightChain]) -> Array2<f64> {
    let views: Vec<_> = chains.iter().map(|c| c.samples().view()).collect();
    if views.is_empty() {
        return Array2::zeros((0, 0));
    }
    ndarray::concatenate(Axis(0), &views).expect("chains share a dimension")
}
