use serde::{Deserialize, Serialize};

use crate::error::{check_probability, invalid, Error, Result};
use crate::fingerprint::{extract_fingerprint, ToolSlots, DIM};
use crate::sequential::{run_sprt, SprtConfig};
use crate::stats::{ks_two_sample, threshold_verdict, two_proportion_test, Sidedness, TrialOutcomes, Verdict};
use crate::traces::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KillCondition {
    VerdictChange,
    ScoreDifference,
    DistributionalShift,
    None,
}

/// Scalar trace feature used by the distributional-shift condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KillFeature {
    #[default]
    TraceLength,
    TotalCost,
    /// Raw fingerprint component by index.
    Component(usize),
}

impl KillFeature {
    pub fn values(self, traces: &[Trace], slots: &ToolSlots) -> Result<Vec<f64>> {
        match self {
            KillFeature::TraceLength => Ok(traces.iter().map(|t| t.len() as f64).collect()),
            KillFeature::TotalCost => Ok(traces.iter().map(Trace::total_cost).collect()),
            KillFeature::Component(j) if j < DIM => traces.iter().map(|t| Ok(extract_fingerprint(t, slots)?.values[j])).collect(),
            KillFeature::Component(j) => invalid(format!("fingerprint has {DIM} components, asked for {j}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KillConfig {
    pub delta_min: f64,
    pub alpha_kill: f64,
    /// Threshold for the verdict-change condition.
    pub theta: f64,
    pub feature: KillFeature,
}

impl Default for KillConfig {
    fn default() -> Self {
        Self {
            delta_min: 0.10,
            alpha_kill: 0.05,
            theta: 0.8,
            feature: KillFeature::TraceLength,
        }
    }
}

impl KillConfig {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha_kill", self.alpha_kill)?;
        check_probability("theta", self.theta)?;
        if !(self.delta_min > 0.0 && self.delta_min < 1.0) {
            return invalid(format!("delta_min must lie in (0, 1), got {}", self.delta_min));
        }
        Ok(())
    }
}

/// Outcomes plus one scalar feature per trial, for one side of a kill test.
#[derive(Debug, Clone, PartialEq)]
pub struct KillSample {
    pub outcomes: TrialOutcomes,
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillResult {
    pub killed: bool,
    pub condition: KillCondition,
    /// Bonferroni-adjusted over the two p-value conditions.
    pub p_value: f64,
    /// Base pass rate minus mutant pass rate.
    pub effect: f64,
    pub presumed_equivalent: bool,
    pub trials_used: usize,
    /// SPRT cap reached without a decision.
    #[serde(default)]
    pub undetermined: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_id: Option<String>,
}

/// Three kill conditions in order; each p-value condition runs at `alpha_kill / 3`.
pub fn kill_test(base: &KillSample, mutant: &KillSample, cfg: &KillConfig) -> Result<KillResult> {
    cfg.validate()?;
    if base.outcomes.scenario_id != mutant.outcomes.scenario_id {
        return invalid(format!(
            "kill test across scenarios '{}' and '{}'",
            base.outcomes.scenario_id, mutant.outcomes.scenario_id
        ));
    }
    if base.outcomes.is_empty() || mutant.outcomes.is_empty() {
        return invalid("kill test needs trials on both sides");
    }
    let level = cfg.alpha_kill / 3.0;
    let vb = threshold_verdict(&base.outcomes, cfg.theta, cfg.alpha_kill)?.verdict;
    let vm = threshold_verdict(&mutant.outcomes, cfg.theta, cfg.alpha_kill)?.verdict;
    let flipped = matches!((vb, vm), (Verdict::Pass, Verdict::Fail) | (Verdict::Fail, Verdict::Pass));

    let (kb, nb) = (base.outcomes.pass_count(), base.outcomes.len());
    let (km, nm) = (mutant.outcomes.pass_count(), mutant.outcomes.len());
    let effect = base.outcomes.pass_rate() - mutant.outcomes.pass_rate();
    let p2 = two_proportion_test(kb, nb, km, nm, Sidedness::TwoSided)?.p_value;
    let score = effect.abs() >= cfg.delta_min - 1e-12 && p2 < level;

    let p3 = if base.feature.is_empty() || mutant.feature.is_empty() {
        1.0
    } else {
        ks_two_sample(&base.feature, &mutant.feature)?.p_value
    };
    let shift = p3 < level;

    let condition = if flipped {
        KillCondition::VerdictChange
    } else if score {
        KillCondition::ScoreDifference
    } else if shift {
        KillCondition::DistributionalShift
    } else {
        KillCondition::None
    };
    Ok(KillResult {
        killed: condition != KillCondition::None,
        condition,
        p_value: (3.0 * p2.min(p3)).min(1.0),
        effect,
        presumed_equivalent: false,
        trials_used: nb.min(nm),
        undetermined: false,
        scenario_id: Some(base.outcomes.scenario_id.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub n_equiv: usize,
    pub k_equiv: usize,
    pub alpha_equiv: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            n_equiv: 100,
            k_equiv: 3,
            alpha_equiv: 0.01,
        }
    }
}

/// No scenario shows a verdict flip or a p-value below `alpha_equiv`.
pub fn presume_equivalent(results: &[KillResult], cfg: &EquivalenceConfig) -> Result<bool> {
    let eligible = results.iter().filter(|r| r.trials_used >= cfg.n_equiv).count();
    if eligible < cfg.k_equiv {
        return Err(Error::InsufficientData {
            what: format!("scenarios with at least {} trials", cfg.n_equiv),
            needed: cfg.k_equiv,
            available: eligible,
        });
    }
    Ok(results
        .iter()
        .all(|r| r.condition != KillCondition::VerdictChange && r.p_value >= cfg.alpha_equiv))
}

/// Minimum base trials before a base rate may seed an SPRT kill.
pub const SPRT_KILL_MIN_BASE: usize = 30;

/// Sequential kill: FAIL against the base rate kills, PASS survives, cap is undetermined.
///
/// Detects drops only; the SPRT is one-sided by construction.
pub fn sprt_kill<F>(base: &TrialOutcomes, source: F, cfg: &KillConfig, beta: f64, n_max: usize) -> Result<KillResult>
where
    F: FnMut() -> Option<bool>,
{
    cfg.validate()?;
    if base.len() < SPRT_KILL_MIN_BASE {
        return Err(Error::InsufficientData {
            what: "base trials for an SPRT kill".into(),
            needed: SPRT_KILL_MIN_BASE,
            available: base.len(),
        });
    }
    let theta = base.pass_rate().clamp(cfg.delta_min + 0.01, 0.995);
    let sprt = SprtConfig::new(theta, cfg.delta_min, cfg.alpha_kill, beta, Some(n_max))?;
    let run = run_sprt(source, &sprt, None)?;
    let killed = run.verdict == Verdict::Fail;
    let rate = if run.trials_used > 0 { run.successes as f64 / run.trials_used as f64 } else { theta };
    Ok(KillResult {
        killed,
        condition: if killed { KillCondition::ScoreDifference } else { KillCondition::None },
        p_value: if killed { cfg.alpha_kill } else { 1.0 },
        effect: base.pass_rate() - rate,
        presumed_equivalent: false,
        trials_used: run.trials_used,
        undetermined: run.verdict == Verdict::Inconclusive,
        scenario_id: Some(base.scenario_id.clone()),
    })
}

/// Lower bound on detecting a regression of impact `delta` given mutation score `tau`.
pub fn adequacy_bound(tau: f64, delta: f64, delta0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&tau) {
        return invalid(format!("tau must lie in [0, 1], got {tau}"));
    }
    if !(delta >= 0.0) {
        return invalid(format!("delta must be non-negative, got {delta}"));
    }
    if !(delta0 > 0.0) {
        return invalid(format!("delta0 must be positive, got {delta0}"));
    }
    Ok(tau * (1.0 - (-delta / delta0).exp()))
}

/// Cost fraction saved by selecting a `gamma` share of operators with SPRT savings `sigma`.
pub fn selective_cost_reduction(gamma: f64, sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&sigma) {
        return invalid("gamma and sigma must lie in [0, 1]");
    }
    Ok(1.0 - gamma * sigma)
}
