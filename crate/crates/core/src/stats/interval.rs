use serde::{Deserialize, Serialize};

use super::special::{beta_quantile, z};
use super::{TrialOutcomes, Verdict};
use crate::error::{check_probability, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    #[default]
    Wilson,
    ClopperPearson,
}

/// Two-sided binomial confidence interval. Always `0 <= lower <= upper <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Interval at level `1 - alpha` for `k` successes out of `n`.
pub fn confidence_interval(k: usize, n: usize, alpha: f64, method: IntervalMethod) -> Result<ConfidenceInterval> {
    if n == 0 {
        return invalid("confidence interval needs n >= 1");
    }
    if k > n {
        return invalid(format!("k = {k} exceeds n = {n}"));
    }
    check_probability("alpha", alpha)?;
    let (lower, upper) = match method {
        IntervalMethod::Wilson => wilson(k, n, alpha),
        IntervalMethod::ClopperPearson => clopper_pearson(k, n, alpha),
    };
    Ok(ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        method,
    })
}

fn wilson(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z = z(1.0 - alpha / 2.0);
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    let lower = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

fn clopper_pearson(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    let (k_f, n_f) = (k as f64, n as f64);
    let lower = if k == 0 {
        0.0
    } else {
        beta_quantile(alpha / 2.0, k_f, n_f - k_f + 1.0)
    };
    let upper = if k == n {
        1.0
    } else {
        beta_quantile(1.0 - alpha / 2.0, k_f + 1.0, n_f - k_f)
    };
    (lower, upper)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub verdict: Verdict,
    pub interval: ConfidenceInterval,
    pub pass_count: usize,
    pub n: usize,
}

/// PASS iff the lower bound clears `theta`, FAIL iff the upper bound is below it.
pub fn threshold_verdict(outcomes: &TrialOutcomes, theta: f64, alpha: f64) -> Result<ThresholdResult> {
    threshold_verdict_with(outcomes, theta, alpha, IntervalMethod::Wilson)
}

pub fn threshold_verdict_with(
    outcomes: &TrialOutcomes,
    theta: f64,
    alpha: f64,
    method: IntervalMethod,
) -> Result<ThresholdResult> {
    if outcomes.is_empty() {
        return invalid("threshold verdict needs at least one outcome");
    }
    let k = outcomes.pass_count();
    let n = outcomes.len();
    let interval = confidence_interval(k, n, alpha, method)?;
    let verdict = if interval.lower >= theta {
        Verdict::Pass
    } else if interval.upper < theta {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(ThresholdResult {
        verdict,
        interval,
        pass_count: k,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Binomial upper tail P(X >= k) summed term by term.
    fn binom_tail_ge(k: usize, n: usize, p: f64) -> f64 {
        let mut term = (1.0 - p).powi(n as i32);
        let mut total = if k == 0 { term } else { 0.0 };
        for i in 1..=n {
            term *= (n - i + 1) as f64 / i as f64 * p / (1.0 - p);
            if i >= k {
                total += term;
            }
        }
        total
    }

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        // f increasing, root in [lo, hi]
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn wilson_example_one() {
        let ci = confidence_interval(45, 50, 0.05, IntervalMethod::Wilson).unwrap();
        assert!((ci.lower - 0.789).abs() < 0.01 && (ci.upper - 0.958).abs() < 0.01, "{ci:?}");
        let ci = confidence_interval(180, 200, 0.05, IntervalMethod::Wilson).unwrap();
        assert!((ci.lower - 0.853).abs() < 0.01 && (ci.upper - 0.935).abs() < 0.01, "{ci:?}");
    }

    #[test]
    fn wilson_zero_successes() {
        let ci = confidence_interval(0, 50, 0.05, IntervalMethod::Wilson).unwrap();
        assert_eq!(ci.lower, 0.0);
        assert!((ci.upper - 0.0714).abs() < 1e-3);
    }

    #[test]
    fn clopper_pearson_matches_binomial_oracle() {
        let ci = confidence_interval(3, 10, 0.05, IntervalMethod::ClopperPearson).unwrap();
        // lower: P(X >= 3 | p) = 0.025; upper: P(X <= 3 | p) = 0.025
        let lo = bisect(1e-9, 1.0 - 1e-9, |p| binom_tail_ge(3, 10, p) - 0.025);
        let hi = bisect(1e-9, 1.0 - 1e-9, |p| 0.025 - (1.0 - binom_tail_ge(4, 10, p)));
        assert!((ci.lower - lo).abs() < 1e-6, "{} vs {lo}", ci.lower);
        assert!((ci.upper - hi).abs() < 1e-6, "{} vs {hi}", ci.upper);
        assert!((ci.lower - 0.066_740).abs() < 1e-5);
        assert!((ci.upper - 0.652_453).abs() < 1e-5);
    }

    #[test]
    fn clopper_pearson_edges() {
        let ci = confidence_interval(0, 7, 0.05, IntervalMethod::ClopperPearson).unwrap();
        assert_eq!(ci.lower, 0.0);
        let ci = confidence_interval(7, 7, 0.05, IntervalMethod::ClopperPearson).unwrap();
        assert_eq!(ci.upper, 1.0);
    }

    #[test]
    fn invalid_counts() {
        assert!(confidence_interval(0, 0, 0.05, IntervalMethod::Wilson).is_err());
        assert!(confidence_interval(6, 5, 0.05, IntervalMethod::Wilson).is_err());
    }

    #[test]
    fn threshold_examples() {
        let v = |k, n| threshold_verdict(&TrialOutcomes::from_counts(k, n), 0.85, 0.05).unwrap().verdict;
        assert_eq!(v(45, 50), Verdict::Inconclusive);
        assert_eq!(v(180, 200), Verdict::Pass);
        assert_eq!(v(0, 50), Verdict::Fail);
        assert!(threshold_verdict(&TrialOutcomes::default(), 0.85, 0.05).is_err());
    }

    proptest! {
        #[test]
        fn interval_is_ordered(n in 1usize..300, frac in 0.0f64..=1.0, alpha in 0.001f64..0.5) {
            let k = ((n as f64) * frac).round() as usize;
            for m in [IntervalMethod::Wilson, IntervalMethod::ClopperPearson] {
                let ci = confidence_interval(k, n, alpha, m).unwrap();
                prop_assert!(0.0 <= ci.lower && ci.lower <= ci.upper && ci.upper <= 1.0);
                prop_assert!(ci.contains(k as f64 / n as f64));
            }
        }

        #[test]
        fn wilson_width_shrinks_with_n(k in 1usize..50, scale in 1usize..5) {
            // same p-hat, larger n
            let n = 2 * k;
            let a = confidence_interval(k, n, 0.05, IntervalMethod::Wilson).unwrap();
            let b = confidence_interval(k * (scale + 1), n * (scale + 1), 0.05, IntervalMethod::Wilson).unwrap();
            prop_assert!(b.width() < a.width());
        }

        #[test]
        fn pass_survives_all_success_extension(n in 1usize..200, frac in 0.0f64..=1.0, extra in 0usize..50) {
            let k = ((n as f64) * frac).round() as usize;
            let before = threshold_verdict(&TrialOutcomes::from_counts(k, n), 0.8, 0.05).unwrap();
            let after = threshold_verdict(&TrialOutcomes::from_counts(k + extra, n + extra), 0.8, 0.05).unwrap();
            if before.verdict == Verdict::Pass {
                prop_assert_eq!(after.verdict, Verdict::Pass);
            }
        }
    }
}
