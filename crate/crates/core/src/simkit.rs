//! Deterministic simulated agents standing in for live LLM agents.
//!
//! A [`SimAgentSpec`] fixes the laws of every trace feature; [`sim_run`]
//! draws one trace from them given a seed. The first draw of every run
//! decides pass or fail, so two specs that differ only in pass rate share
//! random numbers for everything else (common random numbers).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_unit_closed, invalid, Result};
use crate::fingerprint::{output_complexity, token_count, Fingerprint, ToolSlots, DIM, IDX_ACTIONS, IDX_BRANCHES, IDX_COMPLEXITY, IDX_COST, IDX_ERROR, IDX_LENGTH, IDX_RECOVERY, IDX_TOKENS, TOOL_SLOTS};
use crate::mutation::{MutationOperator, OperatorKind};
pub use crate::traces::derive_seed;
use crate::traces::{Action, AgentConfig, Runner, Scenario, Step, Trace};

/// Scenario ids of metamorphic follow-ups carry a `~relation` suffix; the
/// simulator keys its randomness on the root so that pairs share draws.
pub fn root_scenario_id(id: &str) -> &str {
    id.split('~').next().unwrap_or(id)
}

/// Discrete triangular law on `min..=max` peaking at `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLaw {
    pub min: usize,
    pub mode: usize,
    pub max: usize,
}

impl StepLaw {
    pub fn pmf(&self) -> Vec<(usize, f64)> {
        let w: Vec<(usize, f64)> = (self.min..=self.max)
            .map(|l| {
                let up = (l - self.min + 1) as f64 / (self.mode - self.min + 1) as f64;
                let down = (self.max - l + 1) as f64 / (self.max - self.mode + 1) as f64;
                (l, if l <= self.mode { up } else { down })
            })
            .collect();
        let total: f64 = w.iter().map(|x| x.1).sum();
        w.into_iter().map(|(l, x)| (l, x / total)).collect()
    }

    fn sample(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (l, p) in self.pmf() {
            acc += p;
            if u < acc {
                return l;
            }
        }
        self.max
    }
}

/// Per-step token cost, uniform on `mean · [1 - spread, 1 + spread]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLaw {
    pub mean: f64,
    #[serde(default)]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputVocab {
    pub pass: Vec<String>,
    pub fail: Vec<String>,
}

impl Default for OutputVocab {
    fn default() -> Self {
        Self {
            pass: vec!["{expected}".into(), "Routing to {expected}.".into(), "Resolved: the {expected} team will follow up".into()],
            fail: vec![
                "I am not sure how to help with that.".into(),
                "Escalating to a human agent.".into(),
                "Unable to complete the request".into(),
            ],
        }
    }
}

/// Laws of a simulated agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimAgentSpec {
    pub agent: AgentConfig,
    pub pass_rate: f64,
    /// Weights over `agent.tools`, same order. Empty means uniform.
    #[serde(default)]
    pub tool_mix: Vec<f64>,
    /// Probability that a non-final step calls a tool rather than reasons.
    #[serde(default = "default_tool_call_rate")]
    pub tool_call_rate: f64,
    #[serde(default = "default_steps")]
    pub steps: StepLaw,
    #[serde(default)]
    pub error_rate: f64,
    /// Probability that the step after an error succeeds.
    #[serde(default = "default_recovery")]
    pub recovery_rate: f64,
    /// Probability that a tool argument is drawn at a domain endpoint.
    #[serde(default)]
    pub boundary_rate: f64,
    #[serde(default = "default_cost")]
    pub cost: CostLaw,
    #[serde(default)]
    pub output_vocab: OutputVocab,
    /// Pass-rate shifts applied when a scenario carries the tag.
    #[serde(default)]
    pub variant_effects: BTreeMap<String, f64>,
}

fn default_tool_call_rate() -> f64 {
    0.5
}

fn default_steps() -> StepLaw {
    StepLaw { min: 2, mode: 3, max: 6 }
}

fn default_recovery() -> f64 {
    0.8
}

fn default_cost() -> CostLaw {
    CostLaw { mean: 100.0, spread: 0.3 }
}

impl SimAgentSpec {
    /// A spec with default laws around `agent`.
    pub fn new(agent: AgentConfig, pass_rate: f64) -> Self {
        let n = agent.tools.len();
        Self {
            agent,
            pass_rate,
            tool_mix: vec![1.0 / n.max(1) as f64; n],
            tool_call_rate: default_tool_call_rate(),
            steps: default_steps(),
            error_rate: 0.0,
            recovery_rate: default_recovery(),
            boundary_rate: 0.0,
            cost: default_cost(),
            output_vocab: OutputVocab::default(),
            variant_effects: BTreeMap::new(),
        }
    }

    /// Fill an empty tool mix with the uniform one.
    pub fn resolve_defaults(&mut self) {
        if self.tool_mix.is_empty() && !self.agent.tools.is_empty() {
            let n = self.agent.tools.len();
            self.tool_mix = vec![1.0 / n as f64; n];
        }
    }

    pub fn version_id(&self) -> &str {
        &self.agent.version_id
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        for (name, v) in [
            ("pass_rate", self.pass_rate),
            ("tool_call_rate", self.tool_call_rate),
            ("error_rate", self.error_rate),
            ("recovery_rate", self.recovery_rate),
            ("boundary_rate", self.boundary_rate),
            ("cost.spread", self.cost.spread),
        ] {
            check_unit_closed(name, v)?;
        }
        if self.tool_mix.len() != self.agent.tools.len() {
            return invalid(format!(
                "tool_mix has {} weights for {} tools",
                self.tool_mix.len(),
                self.agent.tools.len()
            ));
        }
        if self.tool_mix.iter().any(|w| !(*w >= 0.0)) {
            return invalid("tool_mix weights must be non-negative");
        }
        if !self.tool_mix.is_empty() && (self.tool_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("tool_mix must sum to 1");
        }
        let s = self.steps;
        if !(1 <= s.min && s.min <= s.mode && s.mode <= s.max) {
            return invalid(format!("step law needs 1 <= min <= mode <= max, got {s:?}"));
        }
        if !(self.cost.mean >= 0.0) || !self.cost.mean.is_finite() {
            return invalid("cost.mean must be a non-negative number");
        }
        if self.output_vocab.pass.is_empty() || self.output_vocab.fail.is_empty() {
            return invalid("output_vocab needs at least one pass and one fail template");
        }
        if self.variant_effects.values().any(|v| !v.is_finite()) {
            return invalid("variant_effects must be finite");
        }
        Ok(())
    }

    /// Pass probability on `scenario`, after tag effects.
    pub fn effective_pass_rate(&self, scenario: &Scenario) -> f64 {
        let shift: f64 = scenario
            .tags
            .iter()
            .filter_map(|t| self.variant_effects.get(t))
            .sum();
        (self.pass_rate + shift).clamp(0.0, 1.0)
    }

    fn calls_tools(&self) -> bool {
        !self.agent.tools.is_empty() && self.tool_mix.iter().any(|&w| w > 0.0)
    }
}

fn render(template: &str, scenario: &Scenario) -> String {
    let expected = scenario
        .properties
        .iter()
        .find(|p| p.name.starts_with("expected"))
        .map(|p| p.text())
        .unwrap_or_default();
    template.replace("{expected}", &expected).replace("{input}", &scenario.input)
}

/// Rendered templates whose evaluator verdict agrees with `pass`; all of
/// them when none agree.
fn consistent_outputs(spec: &SimAgentSpec, scenario: &Scenario, pass: bool) -> Vec<String> {
    let pool = if pass { &spec.output_vocab.pass } else { &spec.output_vocab.fail };
    let rendered: Vec<String> = pool.iter().map(|t| render(t, scenario)).collect();
    let agree: Vec<String> = rendered
        .iter()
        .filter(|o| scenario.evaluator.evaluate(&scenario.input, o) == pass)
        .cloned()
        .collect();
    if agree.is_empty() {
        rendered
    } else {
        agree
    }
}

/// True when every template can realize its intended verdict on `scenario`.
pub fn vocab_is_consistent(spec: &SimAgentSpec, scenario: &Scenario) -> bool {
    [true, false].into_iter().all(|pass| {
        consistent_outputs(spec, scenario, pass)
            .iter()
            .any(|o| scenario.evaluator.evaluate(&scenario.input, o) == pass)
    })
}

/// Draw one trace. Deterministic in `(spec, scenario, seed)`.
pub fn sim_run(spec: &SimAgentSpec, scenario: &Scenario, seed: u64) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, root_scenario_id(&scenario.scenario_id)));
    let pass = rng.random::<f64>() < spec.effective_pass_rate(scenario);
    let len = spec.steps.sample(rng.random::<f64>());
    let calls = spec.calls_tools();
    let mut steps = Vec::with_capacity(len);
    let mut in_error = false;
    for i in 0..len {
        let u_err: f64 = rng.random();
        in_error = if in_error {
            u_err >= spec.recovery_rate
        } else {
            u_err < spec.error_rate
        };
        let u_cost: f64 = rng.random();
        let cost = spec.cost.mean * (1.0 + spec.cost.spread * (2.0 * u_cost - 1.0));
        let mut step = if i + 1 == len {
            let outputs = consistent_outputs(spec, scenario, pass);
            let out = outputs[rng.random_range(0..outputs.len())].clone();
            Step::new(Action::Respond, out, cost)
        } else if calls && rng.random::<f64>() < spec.tool_call_rate {
            let t = pick_weighted(&spec.tool_mix, rng.random::<f64>());
            let tool = &spec.agent.tools[t];
            let mut s = Step::tool_call(&tool.name, format!("{} result", tool.name), cost);
            for p in &tool.parameters {
                let v = if rng.random::<f64>() < spec.boundary_rate {
                    if rng.random::<bool>() {
                        p.min
                    } else {
                        p.max
                    }
                } else {
                    let x = p.min + (0.05 + 0.9 * rng.random::<f64>()) * (p.max - p.min);
                    if p.discrete {
                        x.round()
                    } else {
                        x
                    }
                };
                s = s.with_arg(&p.name, v);
            }
            s
        } else {
            Step::new(Action::Reason, "thinking", cost)
        };
        step.error = in_error;
        step.latency_ms = 10.0 + 0.5 * cost;
        steps.push(step);
    }
    Trace::new(steps, seed).expect("simulated steps are valid by construction")
}

fn pick_weighted(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

impl Runner for SimAgentSpec {
    fn version_id(&self) -> &str {
        &self.agent.version_id
    }

    fn run(&self, scenario: &Scenario, seed: u64) -> Result<Trace> {
        Ok(sim_run(self, scenario, seed))
    }

    fn config(&self) -> Option<&AgentConfig> {
        Some(&self.agent)
    }
}

/// Exact mean of the raw fingerprint over the spec's laws.
pub fn expected_fingerprint(spec: &SimAgentSpec, scenario: &Scenario, slots: &ToolSlots) -> Fingerprint {
    let mut v = [0.0; DIM];
    let q = if spec.calls_tools() { spec.tool_call_rate } else { 0.0 };
    let total_mix: f64 = spec.tool_mix.iter().sum();
    let mut slot_mass = [0.0; TOOL_SLOTS];
    let mut overflow = false;
    for (tool, w) in spec.agent.tools.iter().zip(&spec.tool_mix) {
        let (s, folded) = slots.slot(&tool.name);
        overflow |= folded && *w > 0.0;
        if total_mix > 0.0 {
            slot_mass[s] += w / total_mix;
        }
    }
    let pmf = spec.steps.pmf();
    let rho_by_len = expected_recovery(spec, spec.steps.max);
    let mut mean_len = 0.0;
    for &(l, p) in &pmf {
        let lf = l as f64;
        let mid = lf - 1.0;
        mean_len += p * lf;
        for s in 0..TOOL_SLOTS {
            v[s] += p * mid * q * slot_mass[s] / lf;
        }
        v[IDX_ACTIONS] += p * mid * (1.0 - q) / lf;
        v[IDX_ACTIONS + 1] += p * mid * q / lf;
        v[IDX_ACTIONS + 2] += p / lf;
        v[IDX_BRANCHES] += p * if l == 1 { 1.0 } else { 2.0 + (mid - 1.0) * 2.0 * q * (1.0 - q) };
        v[IDX_ERROR] += p * (1.0 - rho_by_len[l].0);
        v[IDX_RECOVERY] += p * rho_by_len[l].1;
    }
    v[IDX_LENGTH] = mean_len;
    v[IDX_COST] = mean_len * spec.cost.mean;
    let p_pass = spec.effective_pass_rate(scenario);
    for (pass, weight) in [(true, p_pass), (false, 1.0 - p_pass)] {
        let outs = consistent_outputs(spec, scenario, pass);
        let n = outs.len() as f64;
        for o in &outs {
            v[IDX_TOKENS] += weight * token_count(o) as f64 / n;
            v[IDX_COMPLEXITY] += weight * output_complexity(o) / n;
        }
    }
    Fingerprint {
        values: v,
        depth: 1.0,
        mean_step_cost: spec.cost.mean,
        overflow,
    }
}

/// For each trace length up to `max_len`: (P[no error], E[recovery fraction]).
#[allow(clippy::needless_range_loop)] // indices are the DP state
fn expected_recovery(spec: &SimAgentSpec, max_len: usize) -> Vec<(f64, f64)> {
    let (er, rr) = (spec.error_rate, spec.recovery_rate);
    // dist[errors][recoveries][last_error]
    let mut dist = vec![vec![[0.0f64; 2]; max_len + 1]; max_len + 1];
    dist[0][0][0] = 1.0;
    let mut out = vec![(1.0, 0.0); max_len + 1];
    for len in 1..=max_len {
        let mut next = vec![vec![[0.0f64; 2]; max_len + 1]; max_len + 1];
        for e in 0..len {
            for r in 0..=e {
                for last in 0..2 {
                    let p = dist[e][r][last];
                    if p == 0.0 {
                        continue;
                    }
                    let p_err = if last == 1 { 1.0 - rr } else { er };
                    next[e + 1][r][1] += p * p_err;
                    let rec = if last == 1 { 1 } else { 0 };
                    next[e][r + rec][0] += p * (1.0 - p_err);
                }
            }
        }
        dist = next;
        let mut no_err = 0.0;
        let mut rho = 0.0;
        for (e, row) in dist.iter().enumerate() {
            for (r, cell) in row.iter().enumerate() {
                let p = cell[0] + cell[1];
                if e == 0 {
                    no_err += p;
                }
                rho += p * r as f64 / e.max(1) as f64;
            }
        }
        out[len] = (no_err, rho);
    }
    out
}

/// Behavioral magnitude attached to one operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationImpact {
    pub pass_rate_delta: f64,
    /// Added to the mode and max of the step law.
    #[serde(default)]
    pub step_shift: i64,
}

/// Operator to impact mapping; configuration, not a property of the operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactTable(pub BTreeMap<OperatorKind, MutationImpact>);

impl Default for ImpactTable {
    fn default() -> Self {
        use OperatorKind::*;
        let rows = [
            (SynonymSubstitution, 0.0, 0),
            (InstructionReordering, -0.02, 0),
            (NoiseInjection, -0.05, 0),
            (InstructionDropout, -0.15, 0),
            (ToolRemoval, -0.25, 0),
            (ToolReordering, -0.01, 0),
            (ToolNoise, -0.10, 0),
            (ModelSwap, -0.10, 1),
            (VersionDowngrade, -0.20, 0),
            (ContextTruncation, -0.15, 0),
            (ContextNoise, -0.05, 0),
            (ContextPermutation, -0.03, 0),
        ];
        Self(
            rows.into_iter()
                .map(|(k, d, s)| (k, MutationImpact { pass_rate_delta: d, step_shift: s }))
                .collect(),
        )
    }
}

impl ImpactTable {
    pub fn get(&self, op: OperatorKind) -> MutationImpact {
        self.0.get(&op).copied().unwrap_or(MutationImpact {
            pass_rate_delta: 0.0,
            step_shift: 0,
        })
    }

    pub fn with(mut self, op: OperatorKind, pass_rate_delta: f64) -> Self {
        let step_shift = self.get(op).step_shift;
        self.0.insert(op, MutationImpact { pass_rate_delta, step_shift });
        self
    }
}

const SYNONYMS: [(&str, &str); 10] = [
    ("must", "should"),
    ("always", "consistently"),
    ("route", "direct"),
    ("answer", "reply"),
    ("quickly", "promptly"),
    ("help", "assist"),
    ("use", "employ"),
    ("check", "verify"),
    ("short", "brief"),
    ("never", "not ever"),
];

const NOISE_LINES: [&str; 3] = [
    "Note: the cafeteria menu changes on Fridays.",
    "Aside: the office plants need watering.",
    "FYI: unrelated memo number 42 is archived.",
];

/// Apply one operator: alter exactly one agent component, then the operator's impact.
pub fn apply_mutation(spec: &SimAgentSpec, operator: &MutationOperator, impacts: &ImpactTable, seed: u64) -> Result<SimAgentSpec> {
    use OperatorKind::*;
    let mut m = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, operator.op.as_str()));
    let a = &mut m.agent;
    match operator.op {
        SynonymSubstitution => {
            let mut lines: Vec<String> = a.instructions().iter().map(|s| s.to_string()).collect();
            if lines.is_empty() {
                return invalid("synonym_substitution needs a non-empty prompt");
            }
            let hits: Vec<(usize, usize)> = lines
                .iter()
                .enumerate()
                .flat_map(|(i, l)| {
                    let words: Vec<String> = l.split_whitespace().map(|w| w.to_lowercase()).collect();
                    SYNONYMS
                        .iter()
                        .enumerate()
                        .filter(move |(_, (w, _))| words.iter().any(|x| x.trim_matches(|c: char| !c.is_alphanumeric()) == *w))
                        .map(move |(j, _)| (i, j))
                })
                .collect();
            if let Some(&(i, j)) = hits.get(rng.random_range(0..hits.len().max(1))) {
                let (from, to) = SYNONYMS[j];
                lines[i] = lines[i]
                    .split(' ')
                    .map(|w| {
                        if w.to_lowercase().trim_matches(|c: char| !c.is_alphanumeric()) == from {
                            w.to_lowercase().replace(from, to)
                        } else {
                            w.to_string()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
            } else {
                let i = rng.random_range(0..lines.len());
                lines[i] = format!("Kindly {}", lines[i]);
            }
            a.prompt = lines.join("\n");
        }
        InstructionReordering => {
            let mut lines: Vec<String> = a.instructions().iter().map(|s| s.to_string()).collect();
            if lines.len() < 2 {
                return invalid("instruction_reordering needs at least two instructions");
            }
            let orig = lines.clone();
            lines.shuffle(&mut rng);
            if lines == orig {
                lines.rotate_left(1);
            }
            a.prompt = lines.join("\n");
        }
        NoiseInjection => {
            let noise = NOISE_LINES[rng.random_range(0..NOISE_LINES.len())];
            let mut lines: Vec<String> = a.instructions().iter().map(|s| s.to_string()).collect();
            let at = rng.random_range(0..=lines.len());
            lines.insert(at, noise.to_string());
            a.prompt = lines.join("\n");
        }
        InstructionDropout => {
            let mut lines: Vec<String> = a.instructions().iter().map(|s| s.to_string()).collect();
            if lines.is_empty() {
                return invalid("instruction_dropout needs at least one instruction");
            }
            lines.remove(rng.random_range(0..lines.len()));
            a.prompt = lines.join("\n");
        }
        ToolRemoval => {
            if a.tools.is_empty() {
                return invalid("tool_removal needs at least one tool");
            }
            let i = rng.random_range(0..a.tools.len());
            a.tools.remove(i);
            m.tool_mix.remove(i);
            let total: f64 = m.tool_mix.iter().sum();
            let n = m.tool_mix.len();
            for w in &mut m.tool_mix {
                *w = if total > 0.0 { *w / total } else { 1.0 / n as f64 };
            }
        }
        ToolReordering => {
            if a.tools.len() < 2 {
                return invalid("tool_reordering needs at least two tools");
            }
            let mut order: Vec<usize> = (0..a.tools.len()).collect();
            order.shuffle(&mut rng);
            if order.iter().enumerate().all(|(i, &j)| i == j) {
                order.rotate_left(1);
            }
            a.tools = order.iter().map(|&i| spec.agent.tools[i].clone()).collect();
            m.tool_mix = order.iter().map(|&i| spec.tool_mix[i]).collect();
        }
        ToolNoise => {
            if a.tools.is_empty() {
                return invalid("tool_noise needs at least one tool");
            }
            let i = rng.random_range(0..a.tools.len());
            let d = &mut a.tools[i].description;
            d.push_str(if d.is_empty() { "(may return stale data)" } else { " (may return stale data)" });
        }
        ModelSwap => {
            a.model.id = if a.model.id == "sim-small" { "sim-large".into() } else { "sim-small".into() };
        }
        VersionDowngrade => {
            a.model.id = format!("{}-prev", a.model.id);
        }
        ContextTruncation => {
            let gamma = operator.param.unwrap_or(0.5);
            if !(gamma > 0.0 && gamma < 1.0) {
                return invalid(format!("truncation fraction must lie in (0, 1), got {gamma}"));
            }
            a.context.keep_fraction *= 1.0 - gamma;
        }
        ContextNoise => {
            let level = operator.param.unwrap_or(0.2);
            if !(level > 0.0 && level <= 1.0) {
                return invalid(format!("context noise level must lie in (0, 1], got {level}"));
            }
            a.context.noise = (a.context.noise + level).min(1.0);
        }
        ContextPermutation => {
            if a.context.permuted {
                return invalid("context is already permuted");
            }
            a.context.permuted = true;
        }
    }
    a.version_id = format!("{}+{}", spec.agent.version_id, operator.op.as_str());
    let impact = impacts.get(operator.op);
    m.pass_rate = (m.pass_rate + impact.pass_rate_delta).clamp(0.0, 1.0);
    if impact.step_shift != 0 {
        let shift = |x: usize| (x as i64 + impact.step_shift).max(m.steps.min as i64) as usize;
        m.steps.mode = shift(m.steps.mode);
        m.steps.max = shift(m.steps.max).max(m.steps.mode);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::extract_fingerprint;
    use crate::traces::{Evaluator, ModelDescriptor, ToolParam, ToolSpec};

    fn agent(tools: &[&str]) -> AgentConfig {
        AgentConfig {
            version_id: "v1".into(),
            prompt: "Always route tickets to the right team\nKeep answers short\nNever reveal secrets".into(),
            tools: tools.iter().map(|t| ToolSpec::named(*t)).collect(),
            model: ModelDescriptor::default(),
            orchestration: "react".into(),
            context: Default::default(),
        }
    }

    fn scenario() -> Scenario {
        Scenario::new("s1", "My payment failed", Evaluator::keyword("billing").unwrap()).with_property("expected_department", "billing")
    }

    fn spec(p: f64) -> SimAgentSpec {
        let mut s = SimAgentSpec::new(agent(&["search", "lookup", "calc"]), p);
        s.error_rate = 0.15;
        s.recovery_rate = 0.6;
        s.steps = StepLaw { min: 2, mode: 4, max: 8 };
        s
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(0.7);
        assert_eq!(sim_run(&s, &scenario(), 5), sim_run(&s, &scenario(), 5));
        assert_ne!(sim_run(&s, &scenario(), 5), sim_run(&s, &scenario(), 6));
    }

    #[test]
    fn pass_rate_edges_and_frequency() {
        let sc = scenario();
        assert!((0..500).all(|i| sc.evaluate(&sim_run(&spec(1.0), &sc, i))));
        assert!((0..500).all(|i| !sc.evaluate(&sim_run(&spec(0.0), &sc, i))));
        let s = spec(0.7);
        let k = (0..10_000).filter(|&i| sc.evaluate(&sim_run(&s, &sc, i))).count();
        let rate = k as f64 / 10_000.0;
        assert!((0.68..=0.72).contains(&rate), "{rate}");
    }

    #[test]
    fn seeds_are_uncorrelated() {
        let sc = scenario();
        let s = spec(0.5);
        let x: Vec<f64> = (0..10_000).map(|i| sc.evaluate(&sim_run(&s, &sc, i)) as u8 as f64).collect();
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let var: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((cov / var).abs() < 0.05);
    }

    #[test]
    fn fingerprint_means_match_spec() {
        let s = spec(0.7);
        let sc = scenario();
        let slots = ToolSlots::from_inventory(&s.agent.tool_names());
        let n = 500;
        let fps: Vec<_> = (0..n).map(|i| extract_fingerprint(&sim_run(&s, &sc, i), &slots).unwrap()).collect();
        let expect = expected_fingerprint(&s, &sc, &slots);
        for j in 0..DIM {
            let xs: Vec<f64> = fps.iter().map(|f| f.values[j]).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            let se = sd / (n as f64).sqrt();
            let tol = 3.0 * se + 1e-12;
            assert!((mean - expect.values[j]).abs() <= tol, "component {j}: {mean} vs {} (se {se})", expect.values[j]);
        }
    }

    #[test]
    fn tag_effects_shift_pass_rate() {
        let mut s = spec(0.9);
        s.variant_effects.insert("doc_order".into(), -0.3);
        let mut sc = scenario();
        assert!((s.effective_pass_rate(&sc) - 0.9).abs() < 1e-12);
        sc.tags.push("doc_order".into());
        assert!((s.effective_pass_rate(&sc) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn boundary_args_are_drawn() {
        let mut a = agent(&[]);
        a.tools.push(ToolSpec {
            name: "refund".into(),
            description: String::new(),
            parameters: vec![ToolParam { name: "amount".into(), min: 0.0, max: 500.0, discrete: false }],
        });
        let mut s = SimAgentSpec::new(a, 0.9);
        s.boundary_rate = 1.0;
        s.tool_call_rate = 1.0;
        let t = sim_run(&s, &scenario(), 3);
        let args: Vec<f64> = t.steps.iter().filter_map(|st| st.args.get("amount").copied()).collect();
        assert!(!args.is_empty() && args.iter().all(|&v| v == 0.0 || v == 500.0));
    }

    #[test]
    fn validation() {
        assert!(spec(0.5).validate().is_ok());
        let mut s = spec(0.5);
        s.tool_mix = vec![0.5, 0.5, 0.5];
        assert!(s.validate().is_err());
        let mut s = spec(1.5);
        assert!(s.validate().is_err());
        s.pass_rate = 0.5;
        s.steps = StepLaw { min: 3, mode: 2, max: 4 };
        assert!(s.validate().is_err());
    }

    #[test]
    fn tool_removal_renormalizes() {
        let s = spec(0.9);
        let m = apply_mutation(&s, &MutationOperator::new(OperatorKind::ToolRemoval), &ImpactTable::default(), 1).unwrap();
        assert_eq!(m.agent.tools.len(), 2);
        assert!((m.tool_mix.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.validate().is_ok());
        let one = SimAgentSpec::new(agent(&["only"]), 0.9);
        let m = apply_mutation(&one, &MutationOperator::new(OperatorKind::ToolRemoval), &ImpactTable::default(), 1).unwrap();
        assert!(m.agent.tools.is_empty() && m.tool_mix.is_empty());
        assert!(apply_mutation(&m, &MutationOperator::new(OperatorKind::ToolRemoval), &ImpactTable::default(), 1).is_err());
    }

    #[test]
    fn dropout_arithmetic_and_equivalent_synonym() {
        let table = ImpactTable::default().with(OperatorKind::InstructionDropout, -0.2);
        let m = apply_mutation(&spec(0.9), &MutationOperator::new(OperatorKind::InstructionDropout), &table, 1).unwrap();
        assert!((m.pass_rate - 0.7).abs() < 1e-12);
        let s = spec(0.9);
        let m = apply_mutation(&s, &MutationOperator::new(OperatorKind::SynonymSubstitution), &ImpactTable::default(), 1).unwrap();
        assert_eq!(m.pass_rate, s.pass_rate);
        assert_ne!(m.agent.prompt, s.agent.prompt);
        let mut view = m.agent.clone();
        view.prompt = s.agent.prompt.clone();
        view.version_id = s.agent.version_id.clone();
        assert_eq!(view, s.agent);
    }

    #[test]
    fn each_operator_touches_one_component() {
        let s = spec(0.9);
        for op in MutationOperator::all() {
            let m = apply_mutation(&s, &op, &ImpactTable::default(), 9).unwrap();
            let (a, b) = (&s.agent, &m.agent);
            let changed = [a.prompt != b.prompt, a.tools != b.tools, a.model != b.model, a.context != b.context];
            assert_eq!(changed.iter().filter(|&&c| c).count(), 1, "{}", op.op);
            let idx = match op.class() {
                crate::mutation::OperatorClass::Prompt => 0,
                crate::mutation::OperatorClass::Tool => 1,
                crate::mutation::OperatorClass::Model => 2,
                crate::mutation::OperatorClass::Context => 3,
            };
            assert!(changed[idx], "{}", op.op);
            assert!(m.validate().is_ok());
        }
    }

    #[test]
    fn step_law_pmf_sums_to_one() {
        let law = StepLaw { min: 2, mode: 5, max: 9 };
        let pmf = law.pmf();
        assert!((pmf.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = pmf.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert_eq!(peak, 5);
    }
}
