//! Small statistics helpers: Gaussian tail, Monte Carlo standard errors and
//! a one-sample Kolmogorov-Smirnov normality test.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Minimum sample count accepted by [`ks_gaussian_test`].
pub const KS_MIN_SAMPLES: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("KS test needs at least {KS_MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples have zero variance")]
    ZeroVariance,
    #[error("samples contain non-finite values")]
    NonFinite,
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// BPSK bit error probability on an unfaded AWGN channel at `γ = E_s/N_0` (dB).
pub fn bpsk_awgn_ber(gamma_db: f64) -> f64 {
    q_function((2.0 * 10f64.powf(gamma_db / 10.0)).sqrt())
}

/// SNR (dB) at which [`bpsk_awgn_ber`] equals `ber`, by bisection.
pub fn bpsk_awgn_snr_for_ber(ber: f64) -> f64 {
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bpsk_awgn_ber(mid) > ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard error of a proportion estimated from `n` Bernoulli trials.
pub fn proportion_se(p: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    /// Supremum distance between empirical and fitted CDFs.
    pub statistic: f64,
    pub p_value: f64,
    pub passed: bool,
    pub mean: f64,
    pub variance: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov distribution tail `Q_KS(λ)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = sign * (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided KS test against a normal law with the sample mean and variance.
///
/// The p-value uses the asymptotic Kolmogorov distribution with the usual
/// finite-sample correction `λ = (√n + 0.12 + 0.11/√n)·D`.
pub fn ks_gaussian_test(samples: &[f64], significance: f64) -> Result<KsOutcome, StatsError> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(StatsError::TooFewSamples(n));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(variance > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|_| StatsError::ZeroVariance)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let statistic = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max);
    let sn = nf.sqrt();
    let p_value = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * statistic);
    Ok(KsOutcome { statistic, p_value, passed: p_value >= significance, mean, variance, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn q_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        let q1 = q_function(1.0);
        assert!((q1 - 0.158_655_253_931_457).abs() < 1e-12, "{q1}");
        assert!((bpsk_awgn_ber(0.0) - 0.078_649_603_525_143).abs() < 1e-12);
        let g = bpsk_awgn_snr_for_ber(1e-2);
        assert!((bpsk_awgn_ber(g) - 1e-2).abs() < 1e-12);
        assert!((g - 4.32).abs() < 0.01);
    }

    #[test]
    fn ks_accepts_gaussian_rejects_uniform() {
        let mut r = rng::stream(1, &[]);
        let g: Vec<f64> = (0..100_000).map(|_| 3.0 + 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let out = ks_gaussian_test(&g, 1e-3).unwrap();
        assert!(out.passed, "{out:?}");
        let u: Vec<f64> = (0..100_000).map(|_| r.random::<f64>()).collect();
        let out = ks_gaussian_test(&u, 1e-3).unwrap();
        assert!(!out.passed);
        assert!(out.p_value < 1e-10);
    }

    #[test]
    fn ks_errors() {
        assert_eq!(ks_gaussian_test(&[1.0; 10], 1e-3), Err(StatsError::TooFewSamples(10)));
        assert_eq!(ks_gaussian_test(&[1.0; 2000], 1e-3), Err(StatsError::ZeroVariance));
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Classical critical values: Q(1.3581) = 0.05, Q(1.9495) = 0.001.
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_tail(1.9495) - 0.001).abs() < 1e-5);
    }
}
