//! Fixed-sample statistics: intervals, verdicts, regression tests, effect
//! sizes, Bayesian regression probability and multiple-testing correction.

mod bayes;
mod interval;
mod ks;
mod multiple;
mod proportion;
mod regression;
mod sample_size;
pub mod special;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Result};

pub use bayes::{bayesian_regression, BayesianPosterior, BayesianResult, DEFAULT_DRAWS};
pub use interval::{confidence_interval, threshold_verdict, threshold_verdict_with, ConfidenceInterval, IntervalMethod, ThresholdResult};
pub use ks::{ks_two_sample, KsResult};
pub use multiple::{holm_adjusted, holm_bonferroni, suite_verdict};
pub use proportion::{fisher_exact, two_proportion_test, ProportionMethod, ProportionTest, Sidedness, Z_TEST_MIN_TOTAL};
pub use regression::{achieved_power, effect_sizes, regression_verdict, EffectSizes, OutcomeSummary, RegressionResult};
pub use sample_size::{required_n_regression, required_n_threshold};

/// Three-valued test verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error budget and trial count of a single test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestTriple {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

impl TestTriple {
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("beta", beta)?;
        if n == 0 {
            return invalid("n must be at least 1");
        }
        Ok(Self { alpha, beta, n })
    }
}

/// Ordered binary results of repeated trials of one scenario on one version.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialOutcomes {
    pub outcomes: Vec<bool>,
    pub scenario_id: String,
    pub version_id: String,
}

impl TrialOutcomes {
    pub fn new(scenario_id: impl Into<String>, version_id: impl Into<String>, outcomes: Vec<bool>) -> Self {
        Self {
            outcomes,
            scenario_id: scenario_id.into(),
            version_id: version_id.into(),
        }
    }

    /// `k` passes followed by `n - k` failures.
    pub fn from_counts(k: usize, n: usize) -> Self {
        assert!(k <= n, "k > n");
        let mut outcomes = vec![true; k];
        outcomes.resize(n, false);
        Self { outcomes, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn pass_count(&self) -> usize {
        self.outcomes.iter().filter(|&&b| b).count()
    }

    /// Observed pass rate; 0 for an empty set.
    pub fn pass_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.pass_count() as f64 / self.outcomes.len() as f64
        }
    }

    pub fn push(&mut self, outcome: bool) {
        self.outcomes.push(outcome);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_counts() {
        let t = TrialOutcomes::from_counts(3, 5);
        assert_eq!(t.pass_count(), 3);
        assert_eq!(t.len(), 5);
        assert!((t.pass_rate() - 0.6).abs() < 1e-15);
        assert_eq!(TrialOutcomes::default().pass_rate(), 0.0);
    }

    #[test]
    fn triple_validation() {
        assert!(TestTriple::new(0.05, 0.1, 10).is_ok());
        assert!(TestTriple::new(0.0, 0.1, 10).is_err());
        assert!(TestTriple::new(0.05, 1.0, 10).is_err());
        assert!(TestTriple::new(0.05, 0.1, 0).is_err());
    }

    #[test]
    fn verdict_serializes_uppercase() {
        assert_eq!(serde_json::to_string(&Verdict::Inconclusive).unwrap(), "\"INCONCLUSIVE\"");
        assert_eq!(Verdict::Pass.to_string(), "PASS");
    }
}
