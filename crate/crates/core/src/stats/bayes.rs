use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{TrialOutcomes, Verdict};
use crate::error::{check_probability, invalid, Result};

pub const DEFAULT_DRAWS: usize = 20_000;

/// Beta posterior over a pass rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesianPosterior {
    pub a: f64,
    pub b: f64,
}

impl BayesianPosterior {
    pub fn update(a0: f64, b0: f64, outcomes: &TrialOutcomes) -> Self {
        let k = outcomes.pass_count() as f64;
        Self {
            a: a0 + k,
            b: b0 + outcomes.len() as f64 - k,
        }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesianResult {
    /// Posterior probability that the current rate sits more than `delta` below baseline.
    pub p_regression: f64,
    pub verdict: Verdict,
    pub baseline: BayesianPosterior,
    pub current: BayesianPosterior,
}

/// Monte Carlo over paired posterior draws; deterministic given `seed`.
#[allow(clippy::too_many_arguments)]
pub fn bayesian_regression(
    baseline: &TrialOutcomes,
    current: &TrialOutcomes,
    prior: (f64, f64),
    delta: f64,
    alpha: f64,
    beta: f64,
    draw_count: usize,
    seed: u64,
) -> Result<BayesianResult> {
    let (a0, b0) = prior;
    if !(a0 > 0.0 && b0 > 0.0) || !a0.is_finite() || !b0.is_finite() {
        return invalid(format!("prior parameters must be positive, got ({a0}, {b0})"));
    }
    if draw_count < 1000 {
        return invalid(format!("draw_count must be at least 1000, got {draw_count}"));
    }
    if !(delta >= 0.0) {
        return invalid("delta must be non-negative");
    }
    check_probability("alpha", alpha)?;
    check_probability("beta", beta)?;
    let post_b = BayesianPosterior::update(a0, b0, baseline);
    let post_c = BayesianPosterior::update(a0, b0, current);
    let dist_b = Beta::new(post_b.a, post_b.b).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let dist_c = Beta::new(post_c.a, post_c.b).map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..draw_count {
        let pb: f64 = dist_b.sample(&mut rng);
        let pc: f64 = dist_c.sample(&mut rng);
        if pc < pb - delta {
            hits += 1;
        }
    }
    let p_regression = hits as f64 / draw_count as f64;
    let verdict = if p_regression > 1.0 - alpha {
        Verdict::Fail
    } else if p_regression < beta {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(BayesianResult {
        p_regression,
        verdict,
        baseline: post_b,
        current: post_c,
    })
}
