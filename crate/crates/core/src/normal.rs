//! Standard normal helpers.

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln cdf(x)`, accurate far into the lower tail.
pub fn log_cdf(x: f64) -> f64 {
    if x > -20.0 {
        return cdf(x).ln();
    }
    // Asymptotic series of the Mills ratio.
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// The `q` quantile of the standard normal distribution.
pub fn gaussian_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(q));
    }
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * q))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent CDF: Simpson's rule on the density from 0.
    fn simpson_cdf(x: f64) -> f64 {
        let n = 20_000;
        let h = x / n as f64;
        let mut acc = pdf(0.0) + pdf(x);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(k as f64 * h);
        }
        0.5 + acc * h / 3.0
    }

    fn bisect_quantile(q: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if simpson_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_reference_points() {
        assert_eq!(gaussian_quantile(0.5).unwrap(), 0.0);
        let z95 = gaussian_quantile(0.95).unwrap();
        assert!((z95 - 1.6448536).abs() < 1e-6);
        assert!((z95 - bisect_quantile(0.95)).abs() < 1e-10);
        let z = gaussian_quantile(0.9999).unwrap();
        assert!((z - 3.7190).abs() < 1e-4);
        assert!((z - bisect_quantile(0.9999)).abs() < 1e-9);
    }

    #[test]
    fn quantile_domain() {
        for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(gaussian_quantile(q).is_err());
        }
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        let below = log_cdf(-20.0 - 1e-9);
        let above = log_cdf(-20.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
        assert!(log_cdf(-40.0).is_finite());
        assert!((log_cdf(1.0) - cdf(1.0).ln()).abs() < 1e-15);
    }
}
