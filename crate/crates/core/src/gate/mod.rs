//! Deployment gate: partition a suite into offline and live work, run it,
//! correct for multiplicity and map the outcome to deploy / block / manual.

pub mod report;

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{coverage_tuple, CoverageContext, CoverageReport, CoverageTuple};
use crate::efficiency::{combined_reduction, ReductionFactors};
use crate::error::{check_probability, invalid, Error, Result};
use crate::metamorphic::{
    execute_pairs, followup_id, followup_scenario, tally_pairs, ExecutedPair, MetamorphicRelation, MrOutcome, PairRun, RelationId,
};
use crate::mutation::MutationReport;
use crate::sequential::{run_sprt, SprtConfig, SprtRun};
use crate::stats::{
    holm_adjusted, regression_verdict, required_n_regression, suite_verdict, threshold_verdict, RegressionResult, ThresholdResult,
    TrialOutcomes, Verdict,
};
use crate::traces::{trial_seed, Runner, Scenario, ScenarioKind, Trace, TraceStore};

// Same tolerance the regression verdict uses for differences like 0.9 - 0.8.
const DIFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMethod {
    Fixed,
    #[default]
    Sprt,
}

/// Gate parameters. `t_max` is wall-clock milliseconds, checked between scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub theta: f64,
    pub coverage_min: f64,
    pub n_max: usize,
    pub t_max: Option<u64>,
    pub method: TrialMethod,
    /// Worker threads; 0 lets rayon choose.
    pub parallelism: usize,
    /// Models the suite is meant to exercise; empty leaves model coverage out.
    pub target_models: Vec<String>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            beta: 0.10,
            delta: 0.10,
            theta: 0.90,
            coverage_min: 0.5,
            n_max: 30,
            t_max: None,
            method: TrialMethod::Sprt,
            parallelism: 0,
            target_models: Vec::new(),
        }
    }
}

impl GateConfig {
    /// Every violation, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("theta", self.theta)] {
            if let Err(e) = check_probability(name, v) {
                out.push(e.to_string());
            }
        }
        // the SPRT null rate is clamped to [delta + 0.01, 0.995]
        if !(self.delta > 0.0 && self.delta < 0.985) {
            out.push(format!("delta must lie in (0, 0.985), got {}", self.delta));
        }
        if !(0.0..=1.0).contains(&self.coverage_min) {
            out.push(format!("coverage_min must lie in [0, 1], got {}", self.coverage_min));
        }
        if self.n_max == 0 {
            out.push("n_max must be at least 1".into());
        }
        if self.t_max == Some(0) {
            out.push("t_max must be positive when set".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Trials per scenario: the regression sample size for a drop from θ to
    /// θ − δ, capped at `n_max`.
    pub fn trials_per_scenario(&self) -> Result<usize> {
        let p_c = (self.theta - self.delta).max(1e-6);
        Ok(required_n_regression(self.theta, p_c, self.delta, self.alpha, self.beta)?.min(self.n_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Deploy,
    Block,
    Manual,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Deploy => "deploy",
            Decision::Block => "block",
            Decision::Manual => "manual",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three-way decision. A time-budget overrun caps a deploy at manual.
pub fn decide(suite: Verdict, overall_coverage: f64, coverage_min: f64, timed_out: bool) -> Decision {
    match suite {
        Verdict::Fail => Decision::Block,
        Verdict::Pass if overall_coverage >= coverage_min && !timed_out => Decision::Deploy,
        _ => Decision::Manual,
    }
}

/// Process exit status; `inconclusive_warn` lets a manual decision exit 0.
pub fn exit_code(decision: Decision, inconclusive_warn: bool) -> i32 {
    match decision {
        Decision::Deploy => 0,
        Decision::Block => 1,
        Decision::Manual if inconclusive_warn => 0,
        Decision::Manual => 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    /// Stored records only.
    Stored,
    /// Stored records first, then live trials up to the required count.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub offline: bool,
    pub required_trials: usize,
    /// Version whose records an offline scenario is judged on.
    pub offline_version: Option<String>,
    /// Regression scenarios only.
    pub baseline_source: Option<TrialSource>,
    pub candidate_source: TrialSource,
    pub stored_baseline: usize,
    pub stored_candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub baseline_version: String,
    pub candidate_version: String,
    pub scenarios: Vec<ScenarioPlan>,
}

impl CampaignPlan {
    pub fn offline(&self) -> Vec<&str> {
        self.scenarios.iter().filter(|p| p.offline).map(|p| p.scenario_id.as_str()).collect()
    }

    pub fn live(&self) -> Vec<&str> {
        self.scenarios.iter().filter(|p| !p.offline).map(|p| p.scenario_id.as_str()).collect()
    }
}

/// Relation named by a scenario's `relation` property, with optional
/// `noise_level`, `max_words` and `mr_theta` overrides.
pub fn scenario_relation(scenario: &Scenario) -> Result<Option<MetamorphicRelation>> {
    let Some(p) = scenario.property("relation") else {
        return Ok(None);
    };
    let relation: RelationId = p.text().parse()?;
    let mut mr = MetamorphicRelation::new(relation);
    if let Some(v) = scenario.property("noise_level") {
        mr.params.noise_level = v.value.as_f64().ok_or_else(|| Error::InvalidInput("noise_level must be a number".into()))?;
    }
    if let Some(v) = scenario.property("max_words") {
        mr.params.max_words = Some(v.value.as_u64().ok_or_else(|| Error::InvalidInput("max_words must be a count".into()))? as usize);
    }
    if let Some(v) = scenario.property("mr_theta") {
        mr.params.theta = v.value.as_f64().ok_or_else(|| Error::InvalidInput("mr_theta must be a number".into()))?;
    }
    Ok(Some(mr))
}

// Stored trials usable for one scenario of one version; metamorphic pairs
// count only when both halves are present.
fn stored_count(store: &TraceStore, version: &str, scenario: &Scenario, mr: Option<&MetamorphicRelation>) -> usize {
    let n = store.count(version, &scenario.scenario_id);
    match mr {
        Some(mr) => n.min(store.count(version, &followup_id(scenario, mr.relation))),
        None => n,
    }
}

/// Partition `suite` by what the store already holds. `replay` forbids live
/// candidate trials.
pub fn plan_campaign(
    suite: &[Scenario],
    store: &TraceStore,
    baseline_version: &str,
    candidate_version: &str,
    config: &GateConfig,
    replay: bool,
) -> Result<CampaignPlan> {
    config.validate()?;
    let required = config.trials_per_scenario()?;
    let mut scenarios = Vec::with_capacity(suite.len());
    for sc in suite {
        let mr = if sc.kind == ScenarioKind::Metamorphic { scenario_relation(sc)? } else { None };
        let stored_baseline = stored_count(store, baseline_version, sc, mr.as_ref());
        let stored_candidate = stored_count(store, candidate_version, sc, mr.as_ref());
        let live_or_stored = |have: usize| if replay || have >= required { TrialSource::Stored } else { TrialSource::Live };
        let plan = if sc.kind.offline_eligible() {
            let offline_version = if stored_candidate >= required {
                Some(candidate_version)
            } else if stored_baseline >= required {
                Some(baseline_version)
            } else {
                None
            };
            ScenarioPlan {
                scenario_id: sc.scenario_id.clone(),
                kind: sc.kind,
                offline: offline_version.is_some(),
                required_trials: required,
                offline_version: offline_version.map(String::from),
                baseline_source: None,
                candidate_source: if offline_version.is_some() { TrialSource::Stored } else { live_or_stored(stored_candidate) },
                stored_baseline,
                stored_candidate,
            }
        } else {
            ScenarioPlan {
                scenario_id: sc.scenario_id.clone(),
                kind: sc.kind,
                offline: false,
                required_trials: required,
                offline_version: None,
                baseline_source: Some(if stored_baseline >= required { TrialSource::Stored } else { TrialSource::Live }),
                candidate_source: live_or_stored(stored_candidate),
                stored_baseline,
                stored_candidate,
            }
        };
        scenarios.push(plan);
    }
    Ok(CampaignPlan {
        baseline_version: baseline_version.into(),
        candidate_version: candidate_version.into(),
        scenarios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialCounts {
    pub baseline_stored: usize,
    pub baseline_live: usize,
    pub candidate_stored: usize,
    pub candidate_live: usize,
}

impl TrialCounts {
    pub fn live(&self) -> usize {
        self.baseline_live + self.candidate_live
    }

    pub fn total(&self) -> usize {
        self.baseline_stored + self.baseline_live + self.candidate_stored + self.candidate_live
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub kind: ScenarioKind,
    pub offline: bool,
    pub verdict: Verdict,
    pub trials: TrialCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sprt: Option<SprtRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metamorphic: Option<MrOutcome>,
    /// Holm-adjusted p-value; regression scenarios only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holm_rejected: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    /// Candidate trials a fixed-n design would have run on regression scenarios.
    pub fixed_n_trials: usize,
    pub sequential_trials: usize,
    pub live_trials: usize,
    pub total_trials: usize,
    pub offline_scenarios: usize,
    pub total_scenarios: usize,
    pub factors: ReductionFactors,
    pub combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub campaign: String,
    pub baseline_version: String,
    pub candidate_version: String,
    pub seed: u64,
    pub config: GateConfig,
    pub decision: Decision,
    pub suite_verdict: Verdict,
    pub coverage: CoverageReport,
    pub plan: CampaignPlan,
    pub scenarios: Vec<ScenarioResult>,
    pub reduction: ReductionReport,
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationReport>,
}

impl GateDecision {
    pub fn exit_code(&self, inconclusive_warn: bool) -> i32 {
        exit_code(self.decision, inconclusive_warn)
    }
}

/// Everything a gate run reads or writes besides its parameters.
pub struct GateInputs<'a> {
    pub campaign: &'a str,
    pub suite: &'a [Scenario],
    pub store: &'a TraceStore,
    pub baseline_version: &'a str,
    pub candidate_version: &'a str,
    /// Needed only when stored baseline records fall short.
    pub baseline: Option<&'a dyn Runner>,
    /// `None` runs the gate as a pure replay of stored candidate records.
    pub candidate: Option<&'a dyn Runner>,
    /// Defaults to the runners' tool inventory and `GateConfig::target_models`.
    pub coverage: Option<CoverageContext>,
}

// Per-scenario work before multiplicity correction.
struct Executed {
    result: ScenarioResult,
    traces: Vec<Trace>,
    // regression scenarios that produced a usable test
    p_value: Option<f64>,
    locally_passed: bool,
    skipped_for_time: bool,
}

struct Ctx<'a> {
    store: &'a TraceStore,
    cfg: &'a GateConfig,
    seed: u64,
    baseline_version: &'a str,
    candidate_version: &'a str,
    baseline: Option<&'a dyn Runner>,
    candidate: Option<&'a dyn Runner>,
}

impl Ctx<'_> {
    fn runner_for(&self, version: &str) -> Option<&dyn Runner> {
        if version == self.candidate_version {
            self.candidate
        } else if version == self.baseline_version {
            self.baseline
        } else {
            None
        }
    }

    fn stored_traces(&self, version: &str, scenario_id: &str) -> Vec<Trace> {
        self.store.query(version, &[scenario_id]).iter().map(|r| r.trace.clone()).collect()
    }

    // Live trial `index` of `version`, appended to the store before use.
    fn live_trial(&self, runner: &dyn Runner, sc: &Scenario, index: usize) -> Result<Trace> {
        let seed = trial_seed(self.seed, runner.version_id(), &sc.scenario_id, index);
        let trace = runner.run(sc, seed)?;
        self.store.append_trace(runner.version_id(), &sc.scenario_id, &sc.input, trace.clone())?;
        Ok(trace)
    }

    // Stored traces of `version`, topped up with live trials to `want` when a runner exists.
    fn gather(&self, version: &str, sc: &Scenario, want: usize, allow_live: bool) -> (Vec<Trace>, usize, Option<String>) {
        let mut traces = self.stored_traces(version, &sc.scenario_id);
        let stored = traces.len();
        let mut diag = None;
        if stored < want && allow_live {
            match self.runner_for(version) {
                Some(r) => {
                    for i in stored..want {
                        match self.live_trial(r, sc, i) {
                            Ok(t) => traces.push(t),
                            Err(e) => {
                                diag = Some(format!("{version}: {e}"));
                                break;
                            }
                        }
                    }
                }
                None => diag = Some(format!("{version}: {stored} stored trials, {want} needed and no runner")),
            }
        }
        (traces, stored, diag)
    }
}

fn blank_result(sc: &Scenario, offline: bool) -> ScenarioResult {
    ScenarioResult {
        scenario_id: sc.scenario_id.clone(),
        kind: sc.kind,
        offline,
        verdict: Verdict::Inconclusive,
        trials: TrialCounts::default(),
        threshold: None,
        regression: None,
        sprt: None,
        metamorphic: None,
        adjusted_p: None,
        holm_rejected: None,
        diagnostic: None,
    }
}

fn outcomes(sc: &Scenario, version: &str, traces: &[Trace]) -> TrialOutcomes {
    TrialOutcomes::new(sc.scenario_id.clone(), version, traces.iter().map(|t| sc.evaluate(t)).collect())
}

fn run_threshold(ctx: &Ctx<'_>, sc: &Scenario, plan: &ScenarioPlan) -> Executed {
    let mut result = blank_result(sc, plan.offline);
    let version = plan.offline_version.as_deref().unwrap_or(ctx.candidate_version);
    let allow_live = plan.candidate_source == TrialSource::Live;
    let (traces, stored, diag) = ctx.gather(version, sc, plan.required_trials, allow_live);
    if version == ctx.candidate_version {
        result.trials.candidate_stored = stored;
        result.trials.candidate_live = traces.len() - stored;
    } else {
        result.trials.baseline_stored = stored;
    }
    result.diagnostic = diag;
    if !traces.is_empty() && result.diagnostic.is_none() || traces.len() >= plan.required_trials {
        match threshold_verdict(&outcomes(sc, version, &traces), ctx.cfg.theta, ctx.cfg.alpha) {
            Ok(t) => {
                result.verdict = t.verdict;
                result.threshold = Some(t);
            }
            Err(e) => result.diagnostic = Some(e.to_string()),
        }
    } else if result.diagnostic.is_none() {
        result.diagnostic = Some(format!("no stored traces for {version}"));
    }
    let locally_passed = result.verdict == Verdict::Pass;
    Executed {
        result,
        traces,
        p_value: None,
        locally_passed,
        skipped_for_time: false,
    }
}

fn stored_pairs(ctx: &Ctx<'_>, version: &str, sc: &Scenario, mr: &MetamorphicRelation) -> Vec<ExecutedPair> {
    let src = ctx.store.query(version, &[sc.scenario_id.as_str()]);
    let fid = followup_id(sc, mr.relation);
    let fol = ctx.store.query(version, &[fid.as_str()]);
    src.iter()
        .zip(fol.iter())
        .map(|(s, f)| ExecutedPair {
            followup: followup_scenario(sc, mr.relation, &f.input),
            source_trace: s.trace.clone(),
            followup_trace: f.trace.clone(),
        })
        .collect()
}

fn mr_verdict(mr: &MetamorphicRelation, outcome: &MrOutcome) -> Result<Verdict> {
    if outcome.stats.pairs_checked == 0 {
        return Ok(Verdict::Inconclusive);
    }
    if let Some(b) = &outcome.batch {
        return Ok(b.verdict.unwrap_or(if b.holds { Verdict::Pass } else { Verdict::Fail }));
    }
    let held = outcome.stats.pairs_checked - outcome.stats.violations;
    Ok(threshold_verdict(&TrialOutcomes::from_counts(held, outcome.stats.pairs_checked), mr.params.theta, mr.params.alpha)?.verdict)
}

fn run_metamorphic(ctx: &Ctx<'_>, sc: &Scenario, plan: &ScenarioPlan, mr: &MetamorphicRelation) -> Executed {
    let mut result = blank_result(sc, plan.offline);
    let version = plan.offline_version.as_deref().unwrap_or(ctx.candidate_version);
    let mut pairs = stored_pairs(ctx, version, sc, mr);
    let stored = pairs.len();
    let mut run = PairRun::default();
    if plan.candidate_source == TrialSource::Live && stored < plan.required_trials {
        match ctx.runner_for(version) {
            Some(r) => match execute_pairs(mr, r, None, sc, stored..plan.required_trials, ctx.seed) {
                Ok(fresh) => {
                    for p in &fresh.pairs {
                        let fid = followup_id(sc, mr.relation);
                        let appended = ctx
                            .store
                            .append_trace(version, &sc.scenario_id, &sc.input, p.source_trace.clone())
                            .and_then(|_| ctx.store.append_trace(version, &fid, &p.followup.input, p.followup_trace.clone()));
                        if let Err(e) = appended {
                            result.diagnostic = Some(e.to_string());
                        }
                    }
                    run.skipped = fresh.skipped;
                    run.reason = fresh.reason;
                    pairs.extend(fresh.pairs);
                }
                Err(e) => result.diagnostic = Some(format!("{version}: {e}")),
            },
            None => result.diagnostic = Some(format!("{version}: {stored} stored pairs, {} needed and no runner", plan.required_trials)),
        }
    }
    if version == ctx.candidate_version {
        result.trials.candidate_stored = 2 * stored;
        result.trials.candidate_live = 2 * (pairs.len() - stored);
    } else {
        result.trials.baseline_stored = 2 * stored;
    }
    run.pairs = pairs;
    let traces: Vec<Trace> = run.pairs.iter().flat_map(|p| [p.source_trace.clone(), p.followup_trace.clone()]).collect();
    match tally_pairs(mr, sc, &run).and_then(|o| mr_verdict(mr, &o).map(|v| (o, v))) {
        Ok((o, v)) => {
            result.verdict = if result.diagnostic.is_some() { Verdict::Inconclusive } else { v };
            if o.stats.pairs_checked == 0 && result.diagnostic.is_none() {
                result.diagnostic = Some(o.inapplicable_reason.clone().unwrap_or_else(|| "no metamorphic pairs".into()));
            }
            result.metamorphic = Some(o);
        }
        Err(e) => result.diagnostic = Some(e.to_string()),
    }
    let locally_passed = result.verdict == Verdict::Pass;
    Executed {
        result,
        traces,
        p_value: None,
        locally_passed,
        skipped_for_time: false,
    }
}

fn run_regression(ctx: &Ctx<'_>, sc: &Scenario, plan: &ScenarioPlan) -> Executed {
    let mut result = blank_result(sc, false);
    let n = plan.required_trials;
    let cfg = ctx.cfg;

    let (mut base_traces, base_stored, base_diag) = ctx.gather(ctx.baseline_version, sc, n, true);
    base_traces.truncate(n);
    result.trials.baseline_stored = base_stored.min(n);
    result.trials.baseline_live = base_traces.len() - result.trials.baseline_stored;
    let mut traces = base_traces.clone();
    let done = |result: ScenarioResult, traces: Vec<Trace>| Executed {
        result,
        traces,
        p_value: None,
        locally_passed: false,
        skipped_for_time: false,
    };
    if let Some(d) = base_diag {
        result.diagnostic = Some(d);
        return done(result, traces);
    }
    let base = outcomes(sc, ctx.baseline_version, &base_traces);

    // Candidate stream: stored records in order, then live trials.
    let stored_cand = ctx.stored_traces(ctx.candidate_version, &sc.scenario_id);
    let live_runner = (plan.candidate_source == TrialSource::Live).then_some(ctx.candidate).flatten();
    let mut cand_traces: Vec<Trace> = Vec::new();
    let mut failure: Option<String> = None;
    let mut next = || -> Option<bool> {
        let i = cand_traces.len();
        if i >= n {
            return None;
        }
        let t = if let Some(t) = stored_cand.get(i) {
            t.clone()
        } else {
            let r = live_runner?;
            match ctx.live_trial(r, sc, i) {
                Ok(t) => t,
                Err(e) => {
                    failure = Some(format!("{}: {e}", ctx.candidate_version));
                    return None;
                }
            }
        };
        let bit = sc.evaluate(&t);
        cand_traces.push(t);
        Some(bit)
    };

    let sprt = match cfg.method {
        TrialMethod::Sprt => {
            // null rate from the baseline, smoothed away from 0 and 1
            let theta = ((base.pass_count() as f64 + 1.0) / (base.len() as f64 + 2.0)).clamp(cfg.delta + 0.01, 0.995);
            Some(SprtConfig::new(theta, cfg.delta, cfg.alpha, cfg.beta, Some(n)).and_then(|c| run_sprt(&mut next, &c, None)))
        }
        TrialMethod::Fixed => {
            while next().is_some() {}
            None
        }
    };
    match sprt {
        Some(Ok(run)) => result.sprt = Some(run),
        Some(Err(e)) => failure = failure.or(Some(e.to_string())),
        None => {}
    }
    result.trials.candidate_stored = cand_traces.len().min(stored_cand.len());
    result.trials.candidate_live = cand_traces.len() - result.trials.candidate_stored;
    traces.extend(cand_traces.iter().cloned());

    if let Some(f) = failure {
        result.diagnostic = Some(f);
        return done(result, traces);
    }
    if cand_traces.is_empty() {
        result.diagnostic = Some(format!("{}: no candidate trials available", ctx.candidate_version));
        return done(result, traces);
    }
    if cand_traces.len() < n && result.sprt.as_ref().is_none_or(|s| s.verdict == Verdict::Inconclusive) {
        result.diagnostic = Some(format!("{}: {} of {n} candidate trials available", ctx.candidate_version, cand_traces.len()));
    }
    let cand = outcomes(sc, ctx.candidate_version, &cand_traces);
    match regression_verdict(&base, &cand, cfg.alpha, cfg.beta, cfg.delta) {
        Ok(reg) => {
            let sprt_pass = result.sprt.as_ref().is_some_and(|s| s.verdict == Verdict::Pass);
            let locally_passed = sprt_pass || reg.verdict == Verdict::Pass;
            let p = reg.p_value;
            result.regression = Some(reg);
            Executed {
                result,
                traces,
                p_value: Some(p),
                locally_passed,
                skipped_for_time: false,
            }
        }
        Err(e) => {
            result.diagnostic = Some(e.to_string());
            done(result, traces)
        }
    }
}

fn run_one(ctx: &Ctx<'_>, sc: &Scenario, plan: &ScenarioPlan) -> Executed {
    if sc.kind == ScenarioKind::Regression {
        return run_regression(ctx, sc, plan);
    }
    if sc.kind == ScenarioKind::Metamorphic {
        match scenario_relation(sc) {
            Ok(Some(mr)) => return run_metamorphic(ctx, sc, plan, &mr),
            Ok(None) => {}
            Err(e) => {
                let mut result = blank_result(sc, plan.offline);
                result.diagnostic = Some(e.to_string());
                return Executed {
                    result,
                    traces: Vec::new(),
                    p_value: None,
                    locally_passed: false,
                    skipped_for_time: false,
                };
            }
        }
    }
    run_threshold(ctx, sc, plan)
}

/// What one regression scenario contributes to the multiplicity correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionEvidence {
    pub p_value: f64,
    /// Baseline minus candidate pass rate.
    pub drop: f64,
    /// The SPRT or the uncorrected regression test already said PASS.
    pub locally_passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub verdict: Verdict,
    pub adjusted_p: f64,
    pub rejected: bool,
}

/// Holm-corrected scenario verdicts. A local PASS stands; otherwise FAIL needs
/// a Holm rejection and a drop of at least `delta`. A local PASS implies either
/// an SPRT acceptance or p >= alpha, so dropping an unrejected scenario can
/// only turn other FAILs into PASS, never a PASS into FAIL.
pub fn corrected_verdicts(tests: &[RegressionEvidence], alpha: f64, delta: f64) -> Vec<Corrected> {
    let ps: Vec<f64> = tests.iter().map(|t| t.p_value).collect();
    holm_adjusted(&ps)
        .into_iter()
        .zip(tests)
        .map(|(adj, t)| {
            let rejected = adj <= alpha;
            let verdict = if t.locally_passed {
                Verdict::Pass
            } else if rejected && t.drop >= delta - DIFF_TOL {
                Verdict::Fail
            } else {
                Verdict::Inconclusive
            };
            Corrected {
                verdict,
                adjusted_p: adj,
                rejected,
            }
        })
        .collect()
}

fn default_coverage(inputs: &GateInputs<'_>, cfg: &GateConfig) -> CoverageContext {
    let configs: Vec<_> = [inputs.candidate, inputs.baseline].into_iter().flatten().filter_map(|r| r.config()).collect();
    let tools = configs.first().map(|c| c.tools.clone()).unwrap_or_default();
    let tested: BTreeSet<&str> = configs.iter().map(|c| c.model.id.as_str()).collect();
    let target: Vec<&str> = cfg.target_models.iter().map(String::as_str).collect();
    CoverageContext::from_tools(&tools).with_models(&target, &tested.into_iter().collect::<Vec<_>>())
}

/// Run the campaign: plan, execute scenarios in parallel, Holm-correct the
/// regression p-values, measure coverage and decide.
///
/// Runner failures leave the affected scenario INCONCLUSIVE; errors are
/// returned only for invalid configuration or an empty suite.
pub fn run_gate(inputs: GateInputs<'_>, config: &GateConfig, seed: u64) -> Result<GateDecision> {
    if inputs.suite.is_empty() {
        return invalid("the suite has no scenarios");
    }
    let mut ids = BTreeSet::new();
    for sc in inputs.suite {
        if !ids.insert(sc.scenario_id.as_str()) {
            return invalid(format!("duplicate scenario id {:?}", sc.scenario_id));
        }
        if sc.scenario_id.contains('~') {
            return invalid(format!("scenario id {:?} contains '~', reserved for follow-ups", sc.scenario_id));
        }
    }
    let replay = inputs.candidate.is_none();
    let plan = plan_campaign(inputs.suite, inputs.store, inputs.baseline_version, inputs.candidate_version, config, replay)?;
    let ctx = Ctx {
        store: inputs.store,
        cfg: config,
        seed,
        baseline_version: inputs.baseline_version,
        candidate_version: inputs.candidate_version,
        baseline: inputs.baseline,
        candidate: inputs.candidate,
    };
    let start = Instant::now();
    let budget = config.t_max.map(Duration::from_millis);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::InvalidState(e.to_string()))?;
    let mut executed: Vec<Executed> = pool.install(|| {
        inputs
            .suite
            .par_iter()
            .zip(plan.scenarios.par_iter())
            .map(|(sc, p)| {
                if budget.is_some_and(|b| start.elapsed() >= b) {
                    let mut result = blank_result(sc, p.offline);
                    result.diagnostic = Some("time budget exhausted before this scenario started".into());
                    return Executed {
                        result,
                        traces: Vec::new(),
                        p_value: None,
                        locally_passed: false,
                        skipped_for_time: true,
                    };
                }
                run_one(&ctx, sc, p)
            })
            .collect()
    });

    // Holm over the regression p-values only.
    let tested: Vec<usize> = (0..executed.len()).filter(|&i| executed[i].p_value.is_some()).collect();
    let tests: Vec<RegressionEvidence> = tested
        .iter()
        .map(|&i| {
            let e = &executed[i];
            RegressionEvidence {
                p_value: e.p_value.expect("filtered"),
                drop: e.result.regression.as_ref().map_or(0.0, |r| r.effects.absolute_diff),
                locally_passed: e.locally_passed,
            }
        })
        .collect();
    for (&i, c) in tested.iter().zip(corrected_verdicts(&tests, config.alpha, config.delta)) {
        let e = &mut executed[i];
        e.result.adjusted_p = Some(c.adjusted_p);
        e.result.holm_rejected = Some(c.rejected);
        e.result.verdict = c.verdict;
    }

    let verdicts: Vec<Verdict> = executed.iter().map(|e| e.result.verdict).collect();
    let suite = suite_verdict(&verdicts)?;
    let timed_out = executed.iter().any(|e| e.skipped_for_time);
    let mut warnings = Vec::new();
    let ctx_cov = inputs.coverage.clone().unwrap_or_else(|| default_coverage(&inputs, config));
    let all_traces: Vec<&Trace> = executed.iter().flat_map(|e| e.traces.iter()).collect();
    let coverage = match coverage_tuple(all_traces.iter().copied(), &ctx_cov) {
        Ok(c) => c,
        Err(e) => {
            warnings.push(format!("coverage unavailable: {e}"));
            CoverageReport {
                tuple: CoverageTuple::default(),
                overall: 0.0,
                path_stats: None,
                abstract_states: 0,
                tools_used: Vec::new(),
                boundaries_tested: Vec::new(),
            }
        }
    };
    if timed_out {
        warnings.push(format!("time budget of {} ms exhausted; remaining scenarios are INCONCLUSIVE", config.t_max.unwrap_or(0)));
    }
    let decision = decide(suite, coverage.overall, config.coverage_min, timed_out);
    if suite == Verdict::Pass && decision == Decision::Manual && coverage.overall < config.coverage_min {
        warnings.push(format!("overall coverage {:.3} is below the minimum {:.3}", coverage.overall, config.coverage_min));
    }
    let results: Vec<ScenarioResult> = executed.into_iter().map(|e| e.result).collect();
    let reduction = reduction_report(&plan, &results)?;
    Ok(GateDecision {
        campaign: inputs.campaign.to_string(),
        baseline_version: inputs.baseline_version.to_string(),
        candidate_version: inputs.candidate_version.to_string(),
        seed,
        config: config.clone(),
        decision,
        suite_verdict: suite,
        coverage,
        plan,
        scenarios: results,
        reduction,
        timed_out,
        warnings,
        mutation: None,
    })
}

/// Reduction factors observed in a run: sequential trials against the fixed-n
/// plan, and live executions against all trials consumed. Unused techniques
/// contribute a factor of 1.
pub fn reduction_report(plan: &CampaignPlan, results: &[ScenarioResult]) -> Result<ReductionReport> {
    let mut fixed = 0;
    let mut sequential = 0;
    for (p, r) in plan.scenarios.iter().zip(results) {
        if r.kind == ScenarioKind::Regression {
            fixed += p.required_trials;
            sequential += r.trials.candidate_stored + r.trials.candidate_live;
        }
    }
    let live: usize = results.iter().map(|r| r.trials.live()).sum();
    let total: usize = results.iter().map(|r| r.trials.total()).sum();
    // an empty numerator is floored so the product stays defined
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { (a.max(1) as f64 / b as f64).min(1.0) };
    let factors = ReductionFactors {
        fingerprint: 1.0,
        budget: ratio(sequential, fixed),
        trace_first: ratio(live, total),
        multi_fidelity: 1.0,
        warm_start: 1.0,
    };
    Ok(ReductionReport {
        fixed_n_trials: fixed,
        sequential_trials: sequential,
        live_trials: live,
        total_trials: total,
        offline_scenarios: plan.scenarios.iter().filter(|p| p.offline).count(),
        total_scenarios: plan.scenarios.len(),
        combined: combined_reduction(&factors)?,
        factors,
    })
}
