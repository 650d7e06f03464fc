//! Globally adaptive Gauss-Kronrod (G7/K15) integration on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_segments: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_segments: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub segments: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrates `f` over `[breakpoints[0], breakpoints[last]]`.
///
/// Breakpoints seed the initial partition so narrow features at known
/// locations are resolved. They must be sorted and contain at least two
/// points.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    opts: QuadratureOptions,
) -> QuadratureResult {
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut heap: BinaryHeap<Segment> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| kronrod15(&f, w[0], w[1]))
        .collect();

    let totals = |heap: &BinaryHeap<Segment>| {
        heap.iter()
            .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error))
    };

    let (mut value, mut error) = totals(&heap);
    while error > opts.abs_tol.max(opts.rel_tol * value.abs()) && heap.len() < opts.max_segments {
        let worst = heap.pop().expect("non-empty partition");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval exhausted at machine precision.
            heap.push(worst);
            break;
        }
        let left = kronrod15(&f, worst.lo, mid);
        let right = kronrod15(&f, mid, worst.hi);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    let (value, error) = totals(&heap);
    QuadratureResult {
        value,
        error_estimate: error,
        segments: heap.len(),
        converged: error <= opts.abs_tol.max(opts.rel_tol * value.abs()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(
            |x| x.powi(6) - 2.0 * x,
            &[0.0, 2.0],
            QuadratureOptions::default(),
        );
        assert!((r.value - (128.0 / 7.0 - 4.0)).abs() < 1e-13);
        assert_eq!(r.segments, 1);
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        let r = integrate(
            crate::special::std_normal_pdf,
            &[-12.0, 0.0, 12.0],
            QuadratureOptions::default(),
        );
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn narrow_peak_is_resolved() {
        let width: f64 = 1e-3;
        let f = |x: f64| (-(x - 0.3) * (x - 0.3) / (2.0 * width * width)).exp();
        let r = integrate(f, &[-1.0, 0.0, 0.5, 1.0], QuadratureOptions::default());
        let exact = width * (2.0 * std::f64::consts::PI).sqrt();
        assert!(((r.value - exact) / exact).abs() < 1e-10);
    }
}
