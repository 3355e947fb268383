//! Metamorphic relations: seeded input transforms plus relation checks over
//! trace pairs, and regression testing on violation rates.
//!
//! Follow-up scenarios keep the source id with a `~relation` suffix and carry
//! the relation id as a tag. Identity parameterizations return the source
//! scenario untouched.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::simkit::{root_scenario_id, SimAgentSpec};
use crate::stats::{confidence_interval, regression_verdict, threshold_verdict, two_proportion_test, ConfidenceInterval, IntervalMethod, RegressionResult, Sidedness, TrialOutcomes, Verdict};
use crate::traces::{derive_seed, trial_seed, Evaluator, Runner, Scenario, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MrFamily {
    Permutation,
    Perturbation,
    Composition,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationId {
    DocOrderInvariance,
    ToolOrderInvariance,
    MonotonicDifficulty,
    NoiseRobustness,
    PipelineConsistency,
    FormatCompliance,
    ConstraintPreservation,
    Idempotence,
}

impl RelationId {
    pub const ALL: [RelationId; 8] = [
        RelationId::DocOrderInvariance,
        RelationId::ToolOrderInvariance,
        RelationId::MonotonicDifficulty,
        RelationId::NoiseRobustness,
        RelationId::PipelineConsistency,
        RelationId::FormatCompliance,
        RelationId::ConstraintPreservation,
        RelationId::Idempotence,
    ];

    pub fn family(self) -> MrFamily {
        use RelationId::*;
        match self {
            DocOrderInvariance | ToolOrderInvariance => MrFamily::Permutation,
            MonotonicDifficulty | NoiseRobustness => MrFamily::Perturbation,
            PipelineConsistency => MrFamily::Composition,
            FormatCompliance | ConstraintPreservation | Idempotence => MrFamily::Oracle,
        }
    }

    pub fn as_str(self) -> &'static str {
        use RelationId::*;
        match self {
            DocOrderInvariance => "doc_order_invariance",
            ToolOrderInvariance => "tool_order_invariance",
            MonotonicDifficulty => "monotonic_difficulty",
            NoiseRobustness => "noise_robustness",
            PipelineConsistency => "pipeline_consistency",
            FormatCompliance => "format_compliance",
            ConstraintPreservation => "constraint_preservation",
            Idempotence => "idempotence",
        }
    }

    /// Judged on the whole batch rather than pair by pair.
    pub fn is_batch(self) -> bool {
        matches!(self, RelationId::MonotonicDifficulty | RelationId::PipelineConsistency)
    }

    /// Follow-up input is built from the source output, not from the source input.
    pub fn needs_source_output(self) -> bool {
        matches!(self, RelationId::PipelineConsistency | RelationId::Idempotence)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RelationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RelationId::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown metamorphic relation '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MrParams {
    /// Explicit segment order for doc_order; a seeded non-identity shuffle when absent.
    pub permutation: Option<Vec<usize>>,
    /// Share of words perturbed by noise_robustness.
    pub noise_level: f64,
    /// Word cap injected by constraint_preservation; absent means parse it from the input.
    pub max_words: Option<usize>,
    /// Output oracle for format_compliance.
    pub format_rule: String,
    /// Minimum stage-two success rate for pipeline_consistency.
    pub theta: f64,
    pub alpha: f64,
}

impl Default for MrParams {
    fn default() -> Self {
        Self {
            permutation: None,
            noise_level: 0.1,
            max_words: None,
            format_rule: "balanced()".into(),
            theta: 0.8,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetamorphicRelation {
    pub relation: RelationId,
    #[serde(default)]
    pub params: MrParams,
}

impl MetamorphicRelation {
    pub fn new(relation: RelationId) -> Self {
        Self {
            relation,
            params: MrParams::default(),
        }
    }

    pub fn family(&self) -> MrFamily {
        self.relation.family()
    }
}

/// Result of a transform: a follow-up, or the reason the relation does not apply.
#[derive(Debug, Clone, PartialEq)]
pub enum FollowUp {
    Ready(Scenario),
    Inapplicable(String),
}

impl FollowUp {
    pub fn scenario(self) -> Option<Scenario> {
        match self {
            FollowUp::Ready(s) => Some(s),
            FollowUp::Inapplicable(_) => None,
        }
    }
}

/// Blank-line separated segments.
pub fn segments(input: &str) -> Vec<&str> {
    input.split("\n\n").map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Whitespace collapsed to single spaces, trimmed.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn tagged(source: &Scenario, relation: RelationId, input: String) -> Scenario {
    let mut s = source.clone();
    s.scenario_id = followup_id(source, relation);
    s.input = input;
    if !s.has_tag(relation.as_str()) {
        s.tags.push(relation.as_str().to_string());
    }
    s
}

const COMPLICATIONS: [&str; 4] = [
    "The customer also mentions a second, unrelated order.",
    "Part of the message is written in a different language.",
    "The account details given earlier contradict this request.",
    "The request must be handled without the usual lookup tools.",
];

/// Follow-up built from the source input alone.
pub fn transform_input(mr: &MetamorphicRelation, scenario: &Scenario, seed: u64) -> FollowUp {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, mr.relation.as_str()));
    let p = &mr.params;
    match mr.relation {
        RelationId::DocOrderInvariance => {
            let segs = segments(&scenario.input);
            if segs.len() < 2 {
                return FollowUp::Inapplicable("input has fewer than two blank-line separated segments".into());
            }
            let order: Vec<usize> = match &p.permutation {
                Some(perm) => {
                    let mut sorted = perm.clone();
                    sorted.sort_unstable();
                    if sorted != (0..segs.len()).collect::<Vec<_>>() {
                        return FollowUp::Inapplicable(format!("permutation {perm:?} does not fit {} segments", segs.len()));
                    }
                    perm.clone()
                }
                None => {
                    let mut o: Vec<usize> = (0..segs.len()).collect();
                    o.shuffle(&mut rng);
                    if o.iter().enumerate().all(|(i, &j)| i == j) {
                        o.rotate_left(1);
                    }
                    o
                }
            };
            if order.iter().enumerate().all(|(i, &j)| i == j) {
                return FollowUp::Ready(scenario.clone());
            }
            let text = order.iter().map(|&i| segs[i]).collect::<Vec<_>>().join("\n\n");
            FollowUp::Ready(tagged(scenario, mr.relation, text))
        }
        // The transform lives in the agent's tool inventory; see `permute_tool_order`.
        RelationId::ToolOrderInvariance => FollowUp::Ready(tagged(scenario, mr.relation, scenario.input.clone())),
        RelationId::MonotonicDifficulty => {
            let extra = COMPLICATIONS[rng.random_range(0..COMPLICATIONS.len())];
            FollowUp::Ready(tagged(scenario, mr.relation, format!("{}\n{extra}", scenario.input)))
        }
        RelationId::NoiseRobustness => {
            let mut words: Vec<String> = scenario.input.split(' ').map(String::from).collect();
            let candidates: Vec<usize> = (0..words.len()).filter(|&i| words[i].chars().count() >= 2).collect();
            let k = ((p.noise_level.clamp(0.0, 1.0) * words.len() as f64).round() as usize).min(candidates.len());
            if k == 0 {
                return FollowUp::Ready(scenario.clone());
            }
            for &i in rand::seq::index::sample(&mut rng, candidates.len(), k).iter().map(|j| &candidates[j]).collect::<Vec<_>>() {
                let mut cs: Vec<char> = words[i].chars().collect();
                let at = rng.random_range(0..cs.len() - 1);
                if cs[at] == cs[at + 1] {
                    cs.insert(at, cs[at]);
                } else {
                    cs.swap(at, at + 1);
                }
                words[i] = cs.into_iter().collect();
            }
            FollowUp::Ready(tagged(scenario, mr.relation, words.join(" ")))
        }
        RelationId::FormatCompliance => FollowUp::Ready(scenario.clone()),
        RelationId::ConstraintPreservation => match p.max_words {
            None if parse_word_cap(&scenario.input).is_some() => FollowUp::Ready(scenario.clone()),
            None => FollowUp::Inapplicable("input states no word limit".into()),
            Some(n) => FollowUp::Ready(tagged(scenario, mr.relation, format!("{} Respond in at most {n} words.", scenario.input))),
        },
        RelationId::PipelineConsistency | RelationId::Idempotence => FollowUp::Inapplicable("follow-up is built from the source output".into()),
    }
}

/// Follow-up whose input is the source run's final output.
pub fn transform_from_output(mr: &MetamorphicRelation, scenario: &Scenario, source: &Trace) -> FollowUp {
    if !mr.relation.needs_source_output() {
        return FollowUp::Inapplicable(format!("{} transforms the input, not the output", mr.relation));
    }
    FollowUp::Ready(tagged(scenario, mr.relation, source.final_output.clone()))
}

/// The spec with its tool inventory (and mix) reordered; the tool-order follow-up agent.
pub fn permute_tool_order(spec: &SimAgentSpec, seed: u64) -> Result<SimAgentSpec> {
    if spec.agent.tools.len() < 2 {
        return invalid("tool order invariance needs at least two tools");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tool_order"));
    let mut order: Vec<usize> = (0..spec.agent.tools.len()).collect();
    order.shuffle(&mut rng);
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        order.rotate_left(1);
    }
    let mut out = spec.clone();
    out.agent.tools = order.iter().map(|&i| spec.agent.tools[i].clone()).collect();
    out.tool_mix = order.iter().map(|&i| spec.tool_mix[i]).collect();
    Ok(out)
}

fn parse_word_cap(input: &str) -> Option<usize> {
    let re = Regex::new(r"(?i)at most (\d+) words").expect("static pattern");
    re.captures(input).and_then(|c| c[1].parse().ok())
}

/// One executed source/follow-up pair.
#[derive(Debug, Clone, Copy)]
pub struct MrPair<'a> {
    pub source: &'a Scenario,
    pub source_trace: &'a Trace,
    pub followup: &'a Scenario,
    pub followup_trace: &'a Trace,
}

/// Per-pair check; true when the relation holds.
///
/// For the two batch relations this is the per-pair indicator that feeds the
/// batch statistic: the harder input passing where the easier one failed, or
/// stage one succeeding while stage two fails.
pub fn check_relation(mr: &MetamorphicRelation, pair: MrPair<'_>) -> Result<bool> {
    if root_scenario_id(&pair.source.scenario_id) != root_scenario_id(&pair.followup.scenario_id) {
        return invalid(format!(
            "pair mixes scenarios '{}' and '{}'",
            pair.source.scenario_id, pair.followup.scenario_id
        ));
    }
    let src = pair.source.evaluate(pair.source_trace);
    let fol = pair.followup.evaluate(pair.followup_trace);
    let out = &pair.followup_trace.final_output;
    Ok(match mr.relation {
        RelationId::DocOrderInvariance | RelationId::ToolOrderInvariance | RelationId::NoiseRobustness => src == fol,
        RelationId::MonotonicDifficulty => !(fol && !src),
        RelationId::PipelineConsistency => !(src && !fol),
        RelationId::FormatCompliance => Evaluator::script(&mr.params.format_rule)?.evaluate(&pair.followup.input, out),
        RelationId::ConstraintPreservation => {
            let cap = match mr.params.max_words {
                Some(n) => n,
                None => parse_word_cap(&pair.followup.input).ok_or_else(|| Error::InvalidInput("follow-up input states no word limit".into()))?,
            };
            out.split_whitespace().count() <= cap
        }
        RelationId::Idempotence => normalize_whitespace(out) == normalize_whitespace(&pair.source_trace.final_output),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrViolationStats {
    pub pairs_checked: usize,
    pub violations: usize,
    pub rate: f64,
    /// Pairs skipped because the relation did not apply; not in the denominator.
    pub inapplicable: usize,
}

impl MrViolationStats {
    pub fn new(pairs_checked: usize, violations: usize, inapplicable: usize) -> Self {
        Self {
            pairs_checked,
            violations,
            rate: if pairs_checked > 0 { violations as f64 / pairs_checked as f64 } else { 0.0 },
            inapplicable,
        }
    }

    pub fn interval(&self, alpha: f64) -> Result<ConfidenceInterval> {
        confidence_interval(self.violations, self.pairs_checked, alpha, IntervalMethod::Wilson)
    }
}

/// Batch-level test behind a statistical relation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchCheck {
    pub holds: bool,
    pub p_value: Option<f64>,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrOutcome {
    pub relation: RelationId,
    pub family: MrFamily,
    pub stats: MrViolationStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inapplicable_reason: Option<String>,
}

/// Batch statistic for monotonic_difficulty: one-sided test that the harder
/// input passes more often; for pipeline_consistency: threshold verdict of
/// stage two among stage-one successes.
pub fn batch_check(mr: &MetamorphicRelation, source_bits: &[bool], followup_bits: &[bool]) -> Result<BatchCheck> {
    if source_bits.len() != followup_bits.len() || source_bits.is_empty() {
        return invalid("batch check needs equal, non-empty pair lists");
    }
    match mr.relation {
        RelationId::MonotonicDifficulty => {
            let n = source_bits.len();
            let ks = source_bits.iter().filter(|&&b| b).count();
            let kf = followup_bits.iter().filter(|&&b| b).count();
            // H1: harder pass rate exceeds the easier one, i.e. the follow-up is "better".
            let p = two_proportion_test(kf, n, ks, n, Sidedness::Less)?.p_value;
            Ok(BatchCheck {
                holds: p >= mr.params.alpha,
                p_value: Some(p),
                verdict: None,
            })
        }
        RelationId::PipelineConsistency => {
            let stage2: Vec<bool> = source_bits.iter().zip(followup_bits).filter(|(s, _)| **s).map(|(_, f)| *f).collect();
            if stage2.is_empty() {
                return Ok(BatchCheck {
                    holds: true,
                    p_value: None,
                    verdict: Some(Verdict::Inconclusive),
                });
            }
            let v = threshold_verdict(&TrialOutcomes::new("stage2", "", stage2), mr.params.theta, mr.params.alpha)?.verdict;
            Ok(BatchCheck {
                holds: v != Verdict::Fail,
                p_value: None,
                verdict: Some(v),
            })
        }
        r => invalid(format!("{r} is checked pair by pair")),
    }
}

/// Run `pairs` source/follow-up executions and tally violations.
///
/// Both members of a pair share one seed. `followup_runner` replaces the
/// source runner for the follow-up side; tool order invariance requires it.
pub fn run_relation(
    mr: &MetamorphicRelation,
    runner: &dyn Runner,
    followup_runner: Option<&dyn Runner>,
    scenario: &Scenario,
    pairs: usize,
    seed: u64,
) -> Result<MrOutcome> {
    let run = execute_pairs(mr, runner, followup_runner, scenario, 0..pairs, seed)?;
    tally_pairs(mr, scenario, &run)
}

/// A source run and its follow-up, with the follow-up scenario that produced it.
#[derive(Debug, Clone)]
pub struct ExecutedPair {
    pub followup: Scenario,
    pub source_trace: Trace,
    pub followup_trace: Trace,
}

/// Executed pairs plus the attempts whose follow-up was inapplicable.
#[derive(Debug, Clone, Default)]
pub struct PairRun {
    pub pairs: Vec<ExecutedPair>,
    pub skipped: usize,
    pub reason: Option<String>,
}

/// Run the pairs with trial indices in `indices`; pair `i` shares one seed on both sides.
pub fn execute_pairs(
    mr: &MetamorphicRelation,
    runner: &dyn Runner,
    followup_runner: Option<&dyn Runner>,
    scenario: &Scenario,
    indices: std::ops::Range<usize>,
    seed: u64,
) -> Result<PairRun> {
    let mut run = PairRun::default();
    let follow_runner = match (mr.relation, followup_runner) {
        (RelationId::ToolOrderInvariance, None) => {
            run.skipped = indices.len();
            run.reason = Some("tool order invariance needs a reordered follow-up agent".into());
            return Ok(run);
        }
        (_, Some(r)) => r,
        (_, None) => runner,
    };
    for i in indices {
        let s = trial_seed(seed, runner.version_id(), &scenario.scenario_id, i);
        let source_trace = runner.run(scenario, s)?;
        let follow = if mr.relation.needs_source_output() {
            transform_from_output(mr, scenario, &source_trace)
        } else {
            transform_input(mr, scenario, s)
        };
        let followup = match follow {
            FollowUp::Ready(f) => f,
            FollowUp::Inapplicable(why) => {
                run.skipped += 1;
                run.reason.get_or_insert(why);
                continue;
            }
        };
        let followup_trace = follow_runner.run(&followup, s)?;
        run.pairs.push(ExecutedPair {
            followup,
            source_trace,
            followup_trace,
        });
    }
    Ok(run)
}

/// Violation counts and, for batch relations, the batch check over executed pairs.
pub fn tally_pairs(mr: &MetamorphicRelation, scenario: &Scenario, run: &PairRun) -> Result<MrOutcome> {
    let mut violations = 0;
    let mut src_bits = Vec::with_capacity(run.pairs.len());
    let mut fol_bits = Vec::with_capacity(run.pairs.len());
    for p in &run.pairs {
        let pair = MrPair {
            source: scenario,
            source_trace: &p.source_trace,
            followup: &p.followup,
            followup_trace: &p.followup_trace,
        };
        violations += !check_relation(mr, pair)? as usize;
        src_bits.push(scenario.evaluate(&p.source_trace));
        fol_bits.push(p.followup.evaluate(&p.followup_trace));
    }
    let checked = run.pairs.len();
    let batch = if mr.relation.is_batch() && checked > 0 {
        Some(batch_check(mr, &src_bits, &fol_bits)?)
    } else {
        None
    };
    Ok(MrOutcome {
        relation: mr.relation,
        family: mr.family(),
        stats: MrViolationStats::new(checked, violations, run.skipped),
        batch,
        inapplicable_reason: run.reason.clone(),
    })
}

/// Store key for follow-up runs of `relation` on `source`.
pub fn followup_id(source: &Scenario, relation: RelationId) -> String {
    format!("{}~{}", root_scenario_id(&source.scenario_id), relation)
}

/// Rebuild a follow-up scenario from its stored input.
pub fn followup_scenario(source: &Scenario, relation: RelationId, input: &str) -> Scenario {
    tagged(source, relation, input.to_string())
}

/// Regression on violation rates: the non-violation share plays the pass rate,
/// so a rise in violations reads as a drop.
pub fn mr_regression(baseline: &MrViolationStats, current: &MrViolationStats, alpha: f64, beta: f64, delta: f64) -> Result<RegressionResult> {
    for (name, s) in [("baseline", baseline), ("current", current)] {
        if s.pairs_checked == 0 {
            return Err(Error::InsufficientData {
                what: format!("{name} metamorphic pairs"),
                needed: 1,
                available: 0,
            });
        }
    }
    let b = TrialOutcomes::from_counts(baseline.pairs_checked - baseline.violations, baseline.pairs_checked);
    let c = TrialOutcomes::from_counts(current.pairs_checked - current.violations, current.pairs_checked);
    regression_verdict(&b, &c, alpha, beta, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::{Action, AgentConfig, ModelDescriptor, Step, ToolSpec};

    fn scenario(input: &str) -> Scenario {
        Scenario::new("s1", input, Evaluator::keyword("billing").unwrap()).with_property("expected", "billing")
    }

    fn trace(out: &str) -> Trace {
        Trace::new(vec![Step::new(Action::Respond, out, 1.0)], 0).unwrap()
    }

    fn spec(p: f64) -> SimAgentSpec {
        let agent = AgentConfig {
            version_id: "v1".into(),
            prompt: "Route tickets".into(),
            tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup"), ToolSpec::named("calc")],
            model: ModelDescriptor::default(),
            orchestration: "react".into(),
            context: Default::default(),
        };
        let mut s = SimAgentSpec::new(agent, p);
        s.tool_mix = vec![0.6, 0.3, 0.1];
        s
    }

    const DOCS: &str = "Doc A: refunds take 5 days.\n\nDoc B: billing handles refunds.\n\nDoc C: support hours are 9-5.";

    #[test]
    fn families_partition_relations() {
        let fam: Vec<MrFamily> = RelationId::ALL.iter().map(|r| r.family()).collect();
        for f in [MrFamily::Permutation, MrFamily::Perturbation, MrFamily::Composition, MrFamily::Oracle] {
            assert!(fam.contains(&f));
        }
        assert_eq!("idempotence".parse::<RelationId>().unwrap(), RelationId::Idempotence);
    }

    #[test]
    fn identity_transforms() {
        let sc = scenario(DOCS);
        let mut mr = MetamorphicRelation::new(RelationId::DocOrderInvariance);
        mr.params.permutation = Some(vec![0, 1, 2]);
        assert_eq!(transform_input(&mr, &sc, 1), FollowUp::Ready(sc.clone()));
        let mut noise = MetamorphicRelation::new(RelationId::NoiseRobustness);
        noise.params.noise_level = 0.0;
        assert_eq!(transform_input(&noise, &sc, 1), FollowUp::Ready(sc.clone()));
        assert_eq!(transform_input(&MetamorphicRelation::new(RelationId::FormatCompliance), &sc, 1), FollowUp::Ready(sc));
    }

    #[test]
    fn doc_order_permutes_segments() {
        let sc = scenario(DOCS);
        let mr = MetamorphicRelation::new(RelationId::DocOrderInvariance);
        let mut changed = 0;
        for seed in 0..20 {
            let f = transform_input(&mr, &sc, seed).scenario().unwrap();
            assert_eq!(transform_input(&mr, &sc, seed).scenario().unwrap(), f);
            let mut a = segments(&f.input);
            let mut b = segments(DOCS);
            if a != b {
                changed += 1;
                assert_eq!(f.scenario_id, "s1~doc_order_invariance");
                assert!(f.has_tag("doc_order_invariance"));
            }
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
        assert_eq!(changed, 20);
        assert!(matches!(transform_input(&mr, &scenario("one block"), 0), FollowUp::Inapplicable(_)));
    }

    #[test]
    fn noise_touches_requested_share() {
        let sc = scenario("please help me with my billing question about an invoice from last month");
        let mr = MetamorphicRelation::new(RelationId::NoiseRobustness);
        let f = transform_input(&mr, &sc, 3).scenario().unwrap();
        let diff = sc.input.split(' ').zip(f.input.split(' ')).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 1);
    }

    #[test]
    fn pair_checks() {
        let sc = scenario("x");
        let idem = MetamorphicRelation::new(RelationId::Idempotence);
        let fol = transform_from_output(&idem, &sc, &trace("billing  team")).scenario().unwrap();
        let pair = |a: &'static str, b: &'static str| (trace(a), trace(b));
        let (a, b) = pair("billing  team", "billing team\n");
        assert!(check_relation(&idem, MrPair { source: &sc, source_trace: &a, followup: &fol, followup_trace: &b }).unwrap());
        let fmt = MetamorphicRelation::new(RelationId::FormatCompliance);
        let (a, b) = pair("ok", "{\"team\": [billing}");
        assert!(!check_relation(&fmt, MrPair { source: &sc, source_trace: &a, followup: &sc, followup_trace: &b }).unwrap());
        let doc = MetamorphicRelation::new(RelationId::DocOrderInvariance);
        let (a, b) = pair("billing", "to billing");
        assert!(check_relation(&doc, MrPair { source: &sc, source_trace: &a, followup: &sc, followup_trace: &b }).unwrap());
        let other = Scenario::new("s2", "x", Evaluator::keyword("billing").unwrap());
        assert!(check_relation(&doc, MrPair { source: &sc, source_trace: &a, followup: &other, followup_trace: &b }).is_err());
    }

    #[test]
    fn constraint_from_input_or_params() {
        let sc = scenario("Explain refunds. Respond in at most 3 words.");
        let mr = MetamorphicRelation::new(RelationId::ConstraintPreservation);
        let f = transform_input(&mr, &sc, 0).scenario().unwrap();
        let (a, long, short) = (trace("x"), trace("one two three four"), trace("one two"));
        assert!(!check_relation(&mr, MrPair { source: &sc, source_trace: &a, followup: &f, followup_trace: &long }).unwrap());
        assert!(check_relation(&mr, MrPair { source: &sc, source_trace: &a, followup: &f, followup_trace: &short }).unwrap());
        assert!(matches!(transform_input(&mr, &scenario("no cap"), 0), FollowUp::Inapplicable(_)));
    }

    #[test]
    fn doc_order_rates_track_agent_sensitivity() {
        let sc = scenario(DOCS);
        let mr = MetamorphicRelation::new(RelationId::DocOrderInvariance);
        let calm = spec(0.8);
        let r = run_relation(&mr, &calm, None, &sc, 500, 1).unwrap();
        assert!(r.stats.rate <= 0.02, "{:?}", r.stats);
        let mut touchy = spec(0.8);
        touchy.variant_effects.insert("doc_order_invariance".into(), -0.3);
        let r = run_relation(&mr, &touchy, None, &sc, 500, 1).unwrap();
        assert!(r.stats.rate >= 0.25, "{:?}", r.stats);
    }

    #[test]
    fn tool_order_needs_followup_agent() {
        let sc = scenario("refund");
        let mr = MetamorphicRelation::new(RelationId::ToolOrderInvariance);
        let base = spec(0.7);
        assert!(run_relation(&mr, &base, None, &sc, 10, 0).unwrap().inapplicable_reason.is_some());
        let permuted = permute_tool_order(&base, 4).unwrap();
        assert_ne!(permuted.agent.tools, base.agent.tools);
        let r = run_relation(&mr, &base, Some(&permuted), &sc, 300, 0).unwrap();
        assert_eq!(r.stats.violations, 0);
    }

    #[test]
    fn batch_relations() {
        let sc = scenario("refund");
        let mut hard = spec(0.8);
        hard.variant_effects.insert("monotonic_difficulty".into(), -0.2);
        let mr = MetamorphicRelation::new(RelationId::MonotonicDifficulty);
        let r = run_relation(&mr, &hard, None, &sc, 200, 2).unwrap();
        assert!(r.batch.unwrap().holds);
        let mut easy = spec(0.5);
        easy.variant_effects.insert("monotonic_difficulty".into(), 0.4);
        assert!(!run_relation(&mr, &easy, None, &sc, 200, 2).unwrap().batch.unwrap().holds);
        let pipe = MetamorphicRelation::new(RelationId::PipelineConsistency);
        let r = run_relation(&pipe, &spec(0.95), None, &sc, 200, 3).unwrap();
        assert_eq!(r.batch.unwrap().verdict, Some(Verdict::Pass));
    }

    #[test]
    fn regression_on_violations() {
        let fail = mr_regression(&MrViolationStats::new(200, 4, 0), &MrViolationStats::new(200, 60, 0), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(fail.verdict, Verdict::Fail);
        let pass = mr_regression(&MrViolationStats::new(500, 10, 0), &MrViolationStats::new(500, 10, 0), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(pass.verdict, Verdict::Pass);
        let weak = mr_regression(&MrViolationStats::new(5, 1, 0), &MrViolationStats::new(5, 2, 0), 0.05, 0.10, 0.1).unwrap();
        assert_eq!(weak.verdict, Verdict::Inconclusive);
        assert!(mr_regression(&MrViolationStats::new(0, 0, 3), &MrViolationStats::new(5, 2, 0), 0.05, 0.1, 0.1).is_err());
    }
}
