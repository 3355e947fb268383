//! Wald's sequential probability ratio test for a pass-rate threshold, with
//! expected-sample-size approximations and Beta-prior warm starts.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};
use crate::stats::Verdict;

/// Largest prior trial count a warm start may carry.
pub const WARM_START_CAP: usize = 20;
/// Warm-start offsets are clamped to this fraction of each boundary.
pub const WARM_START_CLAMP: f64 = 0.9;

/// H0: p = theta against H1: p = theta - delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtConfig {
    pub theta: f64,
    pub delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub n_max: Option<usize>,
}

impl SprtConfig {
    pub fn new(theta: f64, delta: f64, alpha: f64, beta: f64, n_max: Option<usize>) -> Result<Self> {
        let c = Self {
            theta,
            delta,
            alpha,
            beta,
            n_max,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("theta", self.theta)?;
        if !(self.delta > 0.0 && self.theta - self.delta > 0.0) {
            return invalid(format!(
                "need 0 < theta - delta < theta, got theta = {}, delta = {}",
                self.theta, self.delta
            ));
        }
        sprt_boundaries(self.alpha, self.beta)?;
        if self.n_max == Some(0) {
            return invalid("n_max must be at least 1");
        }
        Ok(())
    }

    pub fn p0(&self) -> f64 {
        self.theta
    }

    pub fn p1(&self) -> f64 {
        self.theta - self.delta
    }

    /// LLR increments (success, failure).
    pub fn increments(&self) -> (f64, f64) {
        let (p0, p1) = (self.p0(), self.p1());
        ((p1 / p0).ln(), ((1.0 - p1) / (1.0 - p0)).ln())
    }

    pub fn boundaries(&self) -> SprtBoundaries {
        boundaries_unchecked(self.alpha, self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtBoundaries {
    pub a: f64,
    pub b: f64,
}

fn boundaries_unchecked(alpha: f64, beta: f64) -> SprtBoundaries {
    SprtBoundaries {
        a: (beta / (1.0 - alpha)).ln(),
        b: ((1.0 - beta) / alpha).ln(),
    }
}

/// Acceptance boundary `a` (PASS) and rejection boundary `b` (FAIL).
pub fn sprt_boundaries(alpha: f64, beta: f64) -> Result<SprtBoundaries> {
    for (name, v) in [("alpha", alpha), ("beta", beta)] {
        if !(v > 0.0 && v <= 0.5) {
            return invalid(format!("{name} must lie in (0, 0.5], got {v}"));
        }
    }
    Ok(boundaries_unchecked(alpha, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SprtState {
    pub llr: f64,
    pub trials_seen: usize,
    pub successes: usize,
    pub decided: Option<Verdict>,
}

impl SprtState {
    pub fn new(prior: Option<&WarmStartPrior>) -> Self {
        Self {
            llr: prior.map_or(0.0, |p| p.lambda0),
            trials_seen: 0,
            successes: 0,
            decided: None,
        }
    }
}

/// Fold one trial into the state, deciding when a boundary is crossed or the cap is hit.
pub fn sprt_update(state: SprtState, config: &SprtConfig, outcome: bool) -> Result<SprtState> {
    if let Some(v) = state.decided {
        return Err(Error::InvalidState(format!("SPRT already decided {v}")));
    }
    let (inc_s, inc_f) = config.increments();
    let bounds = config.boundaries();
    let llr = state.llr + if outcome { inc_s } else { inc_f };
    let trials_seen = state.trials_seen + 1;
    let decided = if llr <= bounds.a {
        Some(Verdict::Pass)
    } else if llr >= bounds.b {
        Some(Verdict::Fail)
    } else if config.n_max.is_some_and(|m| trials_seen >= m) {
        Some(Verdict::Inconclusive)
    } else {
        None
    };
    Ok(SprtState {
        llr,
        trials_seen,
        successes: state.successes + outcome as usize,
        decided,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

/// Wald's approximation to the expected number of trials under `hypothesis`.
pub fn sprt_expected_n(config: &SprtConfig, hypothesis: Hypothesis) -> Result<f64> {
    config.validate()?;
    let SprtBoundaries { a, b } = config.boundaries();
    let (inc_s, inc_f) = config.increments();
    let (alpha, beta) = (config.alpha, config.beta);
    let (p, num) = match hypothesis {
        Hypothesis::H0 => (config.p0(), (1.0 - alpha) * a + alpha * b),
        Hypothesis::H1 => (config.p1(), beta * a + (1.0 - beta) * b),
    };
    let drift = p * inc_s + (1.0 - p) * inc_f;
    Ok(num / drift)
}

/// Prior of `k0` successes in `n0` trials, expressed as an initial LLR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmStartPrior {
    pub k0: usize,
    pub n0: usize,
    /// Unclamped log density ratio.
    pub raw: f64,
    /// Offset actually used, inside `(0.9 a, 0.9 b)`.
    pub lambda0: f64,
}

/// Log ratio of the Beta(k0+1, n0-k0+1) density at `theta - delta` versus `theta`.
pub fn warm_start_offset(k0: usize, n0: usize, theta: f64, delta: f64) -> Result<f64> {
    warm_start_offset_capped(k0, n0, theta, delta, WARM_START_CAP)
}

pub fn warm_start_offset_capped(k0: usize, n0: usize, theta: f64, delta: f64, cap: usize) -> Result<f64> {
    if k0 > n0 {
        return invalid(format!("k0 = {k0} exceeds n0 = {n0}"));
    }
    if n0 > cap {
        return invalid(format!("n0 = {n0} exceeds the warm-start cap of {cap}"));
    }
    if !(theta > 0.0 && theta < 1.0 && delta > 0.0 && theta - delta > 0.0) {
        return invalid("need 0 < theta - delta < theta < 1");
    }
    let k = k0 as f64;
    let f = (n0 - k0) as f64;
    Ok(k * ((theta - delta) / theta).ln() + f * ((1.0 - theta + delta) / (1.0 - theta)).ln())
}

impl WarmStartPrior {
    pub fn new(k0: usize, n0: usize, config: &SprtConfig) -> Result<Self> {
        Self::with_cap(k0, n0, config, WARM_START_CAP)
    }

    pub fn with_cap(k0: usize, n0: usize, config: &SprtConfig, cap: usize) -> Result<Self> {
        config.validate()?;
        let raw = warm_start_offset_capped(k0, n0, config.theta, config.delta, cap)?;
        let SprtBoundaries { a, b } = config.boundaries();
        let lambda0 = raw.clamp(WARM_START_CLAMP * a, WARM_START_CLAMP * b);
        Ok(Self { k0, n0, raw, lambda0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub trial: usize,
    pub outcome: bool,
    pub llr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SprtRun {
    pub verdict: Verdict,
    pub trials_used: usize,
    pub successes: usize,
    pub initial_llr: f64,
    pub final_llr: f64,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Set when the source ran dry before a decision.
    pub diagnostic: Option<String>,
}

/// Drive the SPRT from `source` until a boundary, the cap, or source exhaustion.
pub fn run_sprt<F>(mut source: F, config: &SprtConfig, prior: Option<&WarmStartPrior>) -> Result<SprtRun>
where
    F: FnMut() -> Option<bool>,
{
    config.validate()?;
    if config.n_max.is_none() {
        return invalid("run_sprt needs n_max");
    }
    let mut state = SprtState::new(prior);
    let initial_llr = state.llr;
    let mut trajectory = Vec::new();
    let mut diagnostic = None;
    while state.decided.is_none() {
        let Some(outcome) = source() else {
            diagnostic = Some(format!("trial source exhausted after {} trials", state.trials_seen));
            break;
        };
        state = sprt_update(state, config, outcome)?;
        trajectory.push(TrajectoryPoint {
            trial: state.trials_seen,
            outcome,
            llr: state.llr,
        });
    }
    Ok(SprtRun {
        verdict: state.decided.unwrap_or(Verdict::Inconclusive),
        trials_used: state.trials_seen,
        successes: state.successes,
        initial_llr,
        final_llr: state.llr,
        trajectory,
        diagnostic,
    })
}
