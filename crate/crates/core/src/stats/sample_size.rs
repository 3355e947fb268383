use super::special::z;
use crate::error::{check_probability, invalid, Result};

fn check(delta: f64, alpha: f64, beta: f64) -> Result<()> {
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    check_probability("alpha", alpha)?;
    check_probability("beta", beta)
}

/// Trials needed to resolve a threshold test at margin `delta` around `p_hat`.
pub fn required_n_threshold(p_hat: f64, delta: f64, alpha: f64, beta: f64) -> Result<usize> {
    check(delta, alpha, beta)?;
    check_probability("p_hat", p_hat)?;
    let zs = z(1.0 - alpha / 2.0) + z(1.0 - beta);
    Ok((zs * zs * 2.0 * p_hat * (1.0 - p_hat) / (delta * delta)).ceil() as usize)
}

/// Per-version trials needed to detect a one-sided drop from `p_b` to `p_c`.
pub fn required_n_regression(p_b: f64, p_c: f64, delta: f64, alpha: f64, beta: f64) -> Result<usize> {
    check(delta, alpha, beta)?;
    check_probability("p_b", p_b)?;
    check_probability("p_c", p_c)?;
    let zs = z(1.0 - alpha) + z(1.0 - beta);
    let var = p_b * (1.0 - p_b) + p_c * (1.0 - p_c);
    // guard against 1-ulp overshoot turning an exact integer into the next one
    let raw = zs * zs * var / (delta * delta);
    Ok((raw - 1e-9).ceil().max(1.0) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn threshold_examples() {
        // (1.959964 + 1.281552)^2 * 0.5 / 0.01 = 525.4
        assert_eq!(required_n_threshold(0.5, 0.1, 0.05, 0.10).unwrap(), 526);
        // same factor * 0.18 / 0.01 = 189.2
        assert_eq!(required_n_threshold(0.9, 0.1, 0.05, 0.10).unwrap(), 190);
        let n1 = required_n_threshold(0.5, 0.1, 0.05, 0.10).unwrap() as f64;
        let n2 = required_n_threshold(0.5, 0.2, 0.05, 0.10).unwrap() as f64;
        assert!((n1 / n2 - 4.0).abs() < 0.05);
        assert!(required_n_threshold(0.5, 0.0, 0.05, 0.1).is_err());
    }

    #[test]
    fn regression_examples() {
        // (1.644854 + 1.281552)^2 * 0.25 / 0.01 = 214.1
        assert_eq!(required_n_regression(0.9, 0.8, 0.1, 0.05, 0.10).unwrap(), 215);
        assert!(required_n_regression(0.9, 0.9, 0.1, 0.05, 0.10).unwrap() > 0);
        assert_eq!(
            required_n_regression(0.9, 0.8, 0.1, 0.05, 0.10).unwrap(),
            required_n_regression(0.9, 0.8, 0.1, 0.10, 0.05).unwrap()
        );
        assert!(required_n_regression(0.9, 0.8, -0.1, 0.05, 0.10).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_delta(p in 0.05f64..0.95, d1 in 0.01f64..0.5, d2 in 0.01f64..0.5) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(required_n_threshold(p, hi, 0.05, 0.1).unwrap() <= required_n_threshold(p, lo, 0.05, 0.1).unwrap());
        }
    }
}
