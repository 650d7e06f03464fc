//! Kolmogorov-Smirnov statistics and related bounds used by the
//! validation code.

/// One-sample KS result.
#[derive(Debug, Clone, Copy)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `sup_x |F_n(x) − F(x)|` against a continuous reference CDF, with the
/// asymptotic p-value (Stephens' small-sample correction).
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
    KsResult {
        statistic,
        p_value: kolmogorov_sf(lambda),
    }
}

/// Survival function of the Kolmogorov distribution,
/// `2 Σ_{k>=1} (−1)^{k−1} exp(−2 k² λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS distance between empirical CDFs.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Dvoretzky–Kiefer–Wolfowitz half-width at confidence `1 − alpha`.
pub fn dkw_half_width(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * n as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_sample_has_small_statistic() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let r = ks_one_sample(&xs, |x| x.clamp(0.0, 1.0));
        assert!((r.statistic - 0.0005).abs() < 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn shifted_sample_is_rejected() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| 0.2 + 0.8 * (i as f64 + 0.5) / 1000.0)
            .collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value < 1e-6);
    }

    #[test]
    fn kolmogorov_known_quantiles() {
        // 1% and 5% critical values of the limiting distribution.
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 2e-4);
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 2e-4);
    }

    #[test]
    fn two_sample_distance() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[5.0, 6.0]), 1.0);
        assert!((ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dkw_at_ten_thousand() {
        assert!(dkw_half_width(10_000, 0.01) < 0.017);
    }
}
