//! Small statistics helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator. NaN for fewer than two values.
pub fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_var(xs).sqrt()
}

/// Mean and its plug-in standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), sample_sd(xs) / (xs.len() as f64).sqrt())
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Upper-tail p-value for a one-sided test of H0: effect <= 0.
pub fn one_sided_upper_p(z: f64) -> f64 {
    1.0 - normal_cdf(z)
}

/// z-statistic that tolerates a zero standard error: a zero effect with zero
/// SE is a zero statistic rather than NaN.
pub fn z_statistic(effect: f64, se: f64) -> f64 {
    if se > 0.0 {
        effect / se
    } else if effect == 0.0 {
        0.0
    } else {
        effect.signum() * f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(m, 2.5, epsilon = 1e-12);
        // sd = sqrt(5/3), se = sd / 2
        assert_abs_diff_eq!(se, (5.0f64 / 3.0).sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(1.96), 0.975, epsilon = 1e-3);
    }

    #[test]
    fn zero_se_zero_effect_is_midpoint() {
        assert_eq!(z_statistic(0.0, 0.0), 0.0);
        assert_eq!(one_sided_upper_p(0.0), 0.5);
        assert_eq!(z_statistic(1.0, 0.0), f64::INFINITY);
    }
}
