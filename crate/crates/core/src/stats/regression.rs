use serde::{Deserialize, Serialize};

use super::proportion::{two_proportion_test, ProportionMethod, Sidedness};
use super::special::{normal_cdf, z};
use super::{TrialOutcomes, Verdict};
use crate::error::{check_probability, check_unit_closed, invalid, Result};

// Differences like 0.9 - 0.8 land one ulp below 0.1.
const DIFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    /// `p_b - p_c`; positive means the current version is worse.
    pub absolute_diff: f64,
    pub cohens_h: f64,
    /// Undefined when either rate is 0 or 1.
    pub odds_ratio: Option<f64>,
}

pub fn effect_sizes(p_b: f64, p_c: f64) -> Result<EffectSizes> {
    check_unit_closed("p_b", p_b)?;
    check_unit_closed("p_c", p_c)?;
    let interior = |p: f64| p > 0.0 && p < 1.0;
    let odds_ratio = (interior(p_b) && interior(p_c)).then(|| (p_b / (1.0 - p_b)) / (p_c / (1.0 - p_c)));
    Ok(EffectSizes {
        absolute_diff: p_b - p_c,
        cohens_h: 2.0 * p_b.sqrt().asin() - 2.0 * p_c.sqrt().asin(),
        odds_ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub version_id: String,
    pub pass_count: usize,
    pub n: usize,
    pub pass_rate: f64,
}

impl From<&TrialOutcomes> for OutcomeSummary {
    fn from(t: &TrialOutcomes) -> Self {
        Self {
            version_id: t.version_id.clone(),
            pass_count: t.pass_count(),
            n: t.len(),
            pass_rate: t.pass_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub verdict: Verdict,
    pub p_value: f64,
    pub method: ProportionMethod,
    pub effects: EffectSizes,
    pub baseline: OutcomeSummary,
    pub current: OutcomeSummary,
    pub achieved_power: f64,
}

/// Normal-approximation power of the one-sided test at a true drop of exactly
/// `delta` from `p_b`, with the given sample sizes.
pub fn achieved_power(p_b: f64, n_b: usize, n_c: usize, delta: f64, alpha: f64) -> f64 {
    let p_c = (p_b - delta).max(0.0);
    let se = (p_b * (1.0 - p_b) / n_b as f64 + p_c * (1.0 - p_c) / n_c as f64).sqrt();
    if se == 0.0 {
        // both rates pinned at an edge: any drop of delta is unmistakable
        return 1.0;
    }
    normal_cdf(delta / se - z(1.0 - alpha))
}

/// Three-valued regression verdict for a one-sided drop of at least `delta`.
pub fn regression_verdict(
    baseline: &TrialOutcomes,
    current: &TrialOutcomes,
    alpha: f64,
    beta: f64,
    delta: f64,
) -> Result<RegressionResult> {
    if baseline.is_empty() || current.is_empty() {
        return invalid("regression verdict needs non-empty baseline and current outcomes");
    }
    check_probability("alpha", alpha)?;
    check_probability("beta", beta)?;
    if !(delta > 0.0) {
        return invalid(format!("delta must be positive, got {delta}"));
    }
    let test = two_proportion_test(
        baseline.pass_count(),
        baseline.len(),
        current.pass_count(),
        current.len(),
        Sidedness::Less,
    )?;
    let (p_b, p_c) = (baseline.pass_rate(), current.pass_rate());
    let effects = effect_sizes(p_b, p_c)?;
    let power = achieved_power(p_b, baseline.len(), current.len(), delta, alpha);
    let verdict = if test.p_value < alpha && effects.absolute_diff.abs() >= delta - DIFF_TOL {
        Verdict::Fail
    } else if test.p_value >= alpha && power >= 1.0 - beta {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(RegressionResult {
        verdict,
        p_value: test.p_value,
        method: test.method,
        effects,
        baseline: baseline.into(),
        current: current.into(),
        achieved_power: power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn effect_examples() {
        let e = effect_sizes(0.9, 0.9).unwrap();
        assert_eq!((e.absolute_diff, e.cohens_h, e.odds_ratio), (0.0, 0.0, Some(1.0)));
        let e = effect_sizes(0.9, 0.8).unwrap();
        let h = 2.0 * (0.9f64).sqrt().asin() - 2.0 * (0.8f64).sqrt().asin();
        assert!((e.cohens_h - h).abs() < 1e-15);
        assert!((e.cohens_h - 0.2838).abs() < 1e-4);
        assert!((e.odds_ratio.unwrap() - 2.25).abs() < 1e-12);
        let e = effect_sizes(1.0, 0.5).unwrap();
        assert_eq!(e.absolute_diff, 0.5);
        assert!(e.cohens_h > 0.0);
        assert_eq!(e.odds_ratio, None);
        assert!(effect_sizes(1.2, 0.5).is_err());
    }

    #[test]
    fn regression_examples() {
        let o = TrialOutcomes::from_counts;
        // at delta = 0.15 the n = 100 pair reaches power 0.95
        let r = regression_verdict(&o(95, 100), &o(95, 100), 0.05, 0.10, 0.15).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
        // at delta = 0.10 the same pair is underpowered (0.77)
        let r = regression_verdict(&o(95, 100), &o(95, 100), 0.05, 0.10, 0.10).unwrap();
        assert!((r.achieved_power - 0.772).abs() < 0.01);
        assert_eq!(r.verdict, Verdict::Inconclusive);

        let r = regression_verdict(&o(95, 100), &o(60, 100), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!(r.p_value < 1e-6);

        let r = regression_verdict(&o(9, 10), &o(7, 10), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.achieved_power < 0.9);
        assert!(regression_verdict(&o(0, 0), &o(1, 1), 0.05, 0.1, 0.1).is_err());
    }

    #[test]
    fn exact_delta_drop_counts_as_meeting_delta() {
        let o = TrialOutcomes::from_counts;
        let r = regression_verdict(&o(900, 1000), &o(800, 1000), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    proptest! {
        #[test]
        fn fail_implies_significant_and_large(kb in 0usize..=60, kc in 0usize..=60, delta in 0.01f64..0.5) {
            let r = regression_verdict(
                &TrialOutcomes::from_counts(kb, 60),
                &TrialOutcomes::from_counts(kc, 60),
                0.05, 0.1, delta,
            ).unwrap();
            if r.verdict == Verdict::Fail {
                prop_assert!(r.p_value < 0.05);
                prop_assert!(r.effects.absolute_diff.abs() >= delta - 1e-12);
            }
        }

        #[test]
        fn cohens_h_zero_iff_equal(p in 0.01f64..0.99, q in 0.01f64..0.99) {
            let e = effect_sizes(p, q).unwrap();
            prop_assert_eq!(e.cohens_h == 0.0, p == q);
        }
    }
}
