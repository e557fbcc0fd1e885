//! Small summary statistics for Monte Carlo output.

use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959963984540054;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the `n − 1` variance.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One-sided Clopper–Pearson upper bound for a binomial proportion.
pub fn clopper_pearson_upper(successes: u64, trials: u64, confidence: f64) -> Result<f64> {
    if trials == 0 || successes > trials || !(0.0..1.0).contains(&confidence) {
        return Err(Error::InvalidArgument(format!(
            "Clopper-Pearson needs 0 <= k <= n, n > 0 and confidence in [0, 1); got k={successes}, n={trials}"
        )));
    }
    if successes == trials {
        return Ok(1.0);
    }
    let beta = Beta::new(successes as f64 + 1.0, (trials - successes) as f64)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(beta.inverse_cdf(confidence))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_error(&[1.0, 2.0, 3.0]) - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn clopper_pearson_reference_values() {
        // Zero successes: 1 − (1 − c)^{1/n}.
        let u = clopper_pearson_upper(0, 100, 0.99).unwrap();
        assert!((u - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-10);
        // scipy.stats.beta.ppf(0.99, 6, 95) = 0.125852
        let u = clopper_pearson_upper(5, 100, 0.99).unwrap();
        assert!((u - 0.125_851_730_7).abs() < 1e-8, "{u}");
        assert_eq!(clopper_pearson_upper(7, 7, 0.99).unwrap(), 1.0);
        assert!(clopper_pearson_upper(8, 7, 0.99).is_err());
    }
}
