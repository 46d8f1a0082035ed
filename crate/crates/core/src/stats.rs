//! Distribution tails and small descriptive helpers.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

/// Upper tail `P(X > x)` of a χ² variable with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(df).expect("positive degrees of freedom");
    d.sf(x).clamp(0.0, 1.0)
}

/// Upper tail of an F(d1, d2) variable.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    let d = FisherSnedecor::new(d1, d2).expect("positive degrees of freedom");
    d.sf(x).clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population variance (divisor `n`).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn chi2_reference_values() {
        // 95th percentiles
        assert_abs_diff_eq!(chi2_sf(3.841458820694124, 1.0), 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(chi2_sf(18.307038053275146, 10.0), 0.05, epsilon = 1e-12);
        assert_eq!(chi2_sf(0.0, 3.0), 1.0);
    }

    #[test]
    fn chi2_tail_monotone() {
        let mut prev = 1.0;
        for i in 1..200 {
            let p = chi2_sf(i as f64 * 0.5, 7.0);
            assert!(p <= prev && (0.0..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn f_reference_value() {
        // qf(0.95, 3, 20) = 3.098391
        assert_abs_diff_eq!(f_sf(3.0983912121407795, 3.0, 20.0), 0.05, epsilon = 1e-9);
    }

    #[test]
    fn quantile_interpolates() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&x, 0.0), 1.0);
        assert_eq!(quantile(&x, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&x, 0.5), 2.5);
    }
}
