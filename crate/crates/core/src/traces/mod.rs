//! Execution traces, scenarios, deterministic evaluators and the
//! append-only trace store.

mod evaluator;
mod store;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{invalid, Result};
use crate::stats::TrialOutcomes;

pub use evaluator::{Evaluator, EvaluatorKind, EvaluatorSpec};
pub use store::{replay_outcomes, Clock, TraceStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Reason,
    CallTool,
    Respond,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Reason, Action::CallTool, Action::Respond];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Reason => "reason",
            Action::CallTool => "call_tool",
            Action::Respond => "respond",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One numeric tool parameter with its domain extremes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Integer-valued domain: boundaries must be hit exactly.
    #[serde(default)]
    pub discrete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ToolParam>,
}

impl ToolSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: String::new(),
            parameters: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_temperature() -> f64 {
    0.7
}

impl Default for ModelDescriptor {
    fn default() -> Self {
        Self {
            id: "sim-large".into(),
            temperature: default_temperature(),
        }
    }
}

/// Context handling knobs that context mutations act on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextDescriptor {
    /// Fraction of the input context kept; 1 means untouched.
    #[serde(default = "one")]
    pub keep_fraction: f64,
    /// Fraction of injected irrelevant context.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub permuted: bool,
}

fn one() -> f64 {
    1.0
}

impl Default for ContextDescriptor {
    fn default() -> Self {
        Self {
            keep_fraction: 1.0,
            noise: 0.0,
            permuted: false,
        }
    }
}

/// Agent configuration: prompt, tools, model, orchestration and context.
///
/// The prompt is a list of instructions, one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub version_id: String,
    #[serde(default)]
    pub prompt: String,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub model: ModelDescriptor,
    #[serde(default = "default_orchestration")]
    pub orchestration: String,
    #[serde(default)]
    pub context: ContextDescriptor,
}

fn default_orchestration() -> String {
    "react".into()
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version_id.trim().is_empty() {
            return invalid("agent version_id must be non-empty");
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tools {
            if !seen.insert(t.name.as_str()) {
                return invalid(format!("duplicate tool name {:?}", t.name));
            }
            let mut params = std::collections::BTreeSet::new();
            for p in &t.parameters {
                if !params.insert(p.name.as_str()) {
                    return invalid(format!("tool {:?} repeats parameter {:?}", t.name, p.name));
                }
                if !(p.min <= p.max) {
                    return invalid(format!("tool {:?} parameter {:?} has min > max", t.name, p.name));
                }
            }
        }
        Ok(())
    }

    pub fn instructions(&self) -> Vec<&str> {
        self.prompt.lines().filter(|l| !l.trim().is_empty()).collect()
    }

    pub fn tool_names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }
}

/// One step of an execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub action: Action,
    #[serde(default)]
    pub tool: Option<String>,
    #[serde(default)]
    pub output: String,
    #[serde(rename = "cost_tokens", default)]
    pub cost: f64,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default)]
    pub error: bool,
    /// Numeric tool arguments, used for boundary coverage.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub args: BTreeMap<String, f64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Step {
    pub fn new(action: Action, output: impl Into<String>, cost: f64) -> Self {
        Self {
            action,
            tool: None,
            output: output.into(),
            cost,
            latency_ms: 0.0,
            error: false,
            args: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn tool_call(tool: impl Into<String>, output: impl Into<String>, cost: f64) -> Self {
        Self {
            tool: Some(tool.into()),
            ..Self::new(Action::CallTool, output, cost)
        }
    }

    pub fn with_error(mut self, error: bool) -> Self {
        self.error = error;
        self
    }

    pub fn with_arg(mut self, name: impl Into<String>, value: f64) -> Self {
        self.args.insert(name.into(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tool.is_some() && self.action != Action::CallTool {
            return invalid(format!("step with a tool must be call_tool, got {}", self.action));
        }
        if !(self.cost >= 0.0) || !(self.latency_ms >= 0.0) {
            return invalid("step cost and latency must be non-negative");
        }
        Ok(())
    }
}

/// One execution: a non-empty step sequence whose last output is the final output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<Step>,
    pub final_output: String,
    pub seed: u64,
}

impl Trace {
    pub fn new(steps: Vec<Step>, seed: u64) -> Result<Self> {
        let Some(last) = steps.last() else {
            return invalid("trace needs at least one step");
        };
        let final_output = last.output.clone();
        let t = Self {
            steps,
            final_output,
            seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.steps.last() else {
            return invalid("trace needs at least one step");
        };
        if last.output != self.final_output {
            return invalid("final_output must equal the last step's output");
        }
        self.steps.iter().try_for_each(Step::validate)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    #[default]
    Regression,
    Coverage,
    Contract,
    Metamorphic,
}

impl ScenarioKind {
    /// Kinds whose verdict can be computed from stored traces alone.
    pub fn offline_eligible(self) -> bool {
        !matches!(self, ScenarioKind::Regression)
    }
}

/// Tagged expected property, written as a one-entry map (`expected_department: billing`).
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub value: Value,
}

impl Property {
    pub fn new(name: impl Into<String>, value: impl Into<Value>) -> Self {
        Self {
            name: name.into(),
            value: value.into(),
        }
    }

    /// The value as plain text (strings unquoted).
    pub fn text(&self) -> String {
        match &self.value {
            Value::String(s) => s.clone(),
            v => v.to_string(),
        }
    }
}

impl Serialize for Property {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = BTreeMap::new();
        m.insert(&self.name, &self.value);
        m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Property {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = BTreeMap::<String, Value>::deserialize(d)?;
        if m.len() != 1 {
            return Err(serde::de::Error::custom("a property is a single `name: value` entry"));
        }
        let (name, value) = m.into_iter().next().expect("len checked");
        Ok(Self { name, value })
    }
}

/// A test scenario: input, expected properties and the evaluator judging outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub scenario_id: String,
    pub input: String,
    #[serde(default)]
    pub properties: Vec<Property>,
    pub evaluator: Evaluator,
    #[serde(default)]
    pub kind: ScenarioKind,
    /// Free-form labels; metamorphic transforms add theirs here.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl Scenario {
    pub fn new(scenario_id: impl Into<String>, input: impl Into<String>, evaluator: Evaluator) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            input: input.into(),
            properties: Vec::new(),
            evaluator,
            kind: ScenarioKind::Regression,
            tags: Vec::new(),
        }
    }

    pub fn with_kind(mut self, kind: ScenarioKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_property(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.properties.push(Property::new(name, value));
        self
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.push(tag.into());
        self
    }

    pub fn property(&self, name: &str) -> Option<&Property> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    pub fn evaluate(&self, trace: &Trace) -> bool {
        evaluate_trace(&self.evaluator, &self.input, trace)
    }
}

/// FNV-1a over a base seed and a label.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(label.as_bytes()) {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed of trial `index` of `version` on `scenario`. Distinct versions get
/// independent streams; the same triple always maps to the same seed.
pub fn trial_seed(base: u64, version_id: &str, scenario_id: &str, index: usize) -> u64 {
    derive_seed(base, &format!("{version_id}/{scenario_id}/{index}"))
}

/// Anything that can execute a scenario: the simulator, or a caller-supplied agent.
pub trait Runner: Send + Sync {
    fn version_id(&self) -> &str;

    /// One execution; must be deterministic given `seed`.
    fn run(&self, scenario: &Scenario, seed: u64) -> Result<Trace>;

    /// Agent configuration, when the runner has one.
    fn config(&self) -> Option<&AgentConfig> {
        None
    }
}

/// Judge a trace's final output; pure and deterministic.
pub fn evaluate_trace(evaluator: &Evaluator, input: &str, trace: &Trace) -> bool {
    evaluator.evaluate(input, &trace.final_output)
}

/// A stored trace with its provenance. Immutable once appended.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub record_id: u64,
    pub version_id: String,
    pub scenario_id: String,
    pub timestamp_ms: u64,
    pub input: String,
    pub trace: Trace,
    /// Fields written by other tools, kept for round-trips.
    pub extra: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    record_id: u64,
    version_id: String,
    scenario_id: String,
    timestamp_ms: u64,
    seed: u64,
    steps: Vec<Step>,
    final_output: String,
    #[serde(default)]
    input: String,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl Serialize for TraceRecord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RecordLine {
            record_id: self.record_id,
            version_id: self.version_id.clone(),
            scenario_id: self.scenario_id.clone(),
            timestamp_ms: self.timestamp_ms,
            seed: self.trace.seed,
            steps: self.trace.steps.clone(),
            final_output: self.trace.final_output.clone(),
            input: self.input.clone(),
            extra: self.extra.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TraceRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let l = RecordLine::deserialize(d)?;
        Ok(Self {
            record_id: l.record_id,
            version_id: l.version_id,
            scenario_id: l.scenario_id,
            timestamp_ms: l.timestamp_ms,
            input: l.input,
            trace: Trace {
                steps: l.steps,
                final_output: l.final_output,
                seed: l.seed,
            },
            extra: l.extra,
        })
    }
}

impl TraceRecord {
    /// A record ready for appending; id and timestamp are assigned by the store.
    pub fn pending(version_id: impl Into<String>, scenario_id: impl Into<String>, input: impl Into<String>, trace: Trace) -> Self {
        Self {
            record_id: 0,
            version_id: version_id.into(),
            scenario_id: scenario_id.into(),
            timestamp_ms: 0,
            input: input.into(),
            trace,
            extra: BTreeMap::new(),
        }
    }
}

/// Outcomes of evaluating each trace in order.
pub fn outcomes_from_traces<'a>(
    scenario: &Scenario,
    version_id: &str,
    traces: impl IntoIterator<Item = &'a Trace>,
) -> TrialOutcomes {
    TrialOutcomes::new(
        scenario.scenario_id.clone(),
        version_id,
        traces.into_iter().map(|t| scenario.evaluate(t)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_step() -> Trace {
        Trace::new(
            vec![
                Step::new(Action::Reason, "thinking", 1.0),
                Step::tool_call("search", "hits", 5.0),
                Step::new(Action::Respond, "route to billing", 2.0),
            ],
            42,
        )
        .unwrap()
    }

    #[test]
    fn trace_final_output_is_last_step() {
        let t = three_step();
        assert_eq!(t.final_output, "route to billing");
        assert_eq!(t.total_cost(), 8.0);
        assert!(Trace::new(vec![], 0).is_err());
        let mut bad = t.clone();
        bad.final_output = "other".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tool_on_non_call_step_is_invalid() {
        let mut s = Step::new(Action::Reason, "x", 0.0);
        s.tool = Some("search".into());
        assert!(Trace::new(vec![s], 0).is_err());
        assert!(Trace::new(vec![Step::new(Action::Respond, "x", -1.0)], 0).is_err());
    }

    #[test]
    fn keyword_evaluation() {
        let sc = Scenario::new("s", "My payment failed", Evaluator::keyword("billing").unwrap());
        assert!(sc.evaluate(&three_step()));
        let other = Trace::new(vec![Step::new(Action::Respond, "route to auth", 1.0)], 1).unwrap();
        assert!(!sc.evaluate(&other));
    }

    #[test]
    fn record_line_uses_exact_field_names() {
        let mut r = TraceRecord::pending("v1", "s1", "hello", three_step());
        r.record_id = 7;
        r.timestamp_ms = 1000;
        let line = serde_json::to_string(&r).unwrap();
        for key in ["record_id", "version_id", "scenario_id", "timestamp_ms", "seed", "steps", "final_output", "cost_tokens", "latency_ms", "\"error\"", "\"action\"", "\"tool\""] {
            assert!(line.contains(key), "{key} missing from {line}");
        }
        let back: TraceRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        assert_eq!(serde_json::to_string(&back).unwrap(), line);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let line = r#"{"record_id":1,"version_id":"v","scenario_id":"s","timestamp_ms":5,"seed":3,"steps":[{"action":"respond","tool":null,"output":"ok","cost_tokens":1.0,"latency_ms":2.0,"error":false,"span":"abc"}],"final_output":"ok","zz_custom":{"a":1}}"#;
        let r: TraceRecord = serde_json::from_str(line).unwrap();
        assert_eq!(r.extra["zz_custom"], serde_json::json!({"a": 1}));
        assert_eq!(r.trace.steps[0].extra["span"], "abc");
        let again = serde_json::to_string(&r).unwrap();
        let r2: TraceRecord = serde_json::from_str(&again).unwrap();
        assert_eq!(serde_json::to_string(&r2).unwrap(), again);
        assert!(again.contains("zz_custom") && again.contains("\"span\":\"abc\""));
    }

    #[test]
    fn property_single_entry_map() {
        let p: Property = serde_yaml::from_str("expected_department: billing").unwrap();
        assert_eq!((p.name.as_str(), p.text()), ("expected_department", "billing".to_string()));
        let n: Property = serde_yaml::from_str("max_steps: 5").unwrap();
        assert_eq!(n.text(), "5");
        assert!(serde_yaml::from_str::<Property>("{a: 1, b: 2}").is_err());
    }

    #[test]
    fn agent_config_validation() {
        let mut a = AgentConfig {
            version_id: "v1".into(),
            prompt: "be nice\n\nbe brief".into(),
            tools: vec![ToolSpec::named("a"), ToolSpec::named("b")],
            model: ModelDescriptor::default(),
            orchestration: "react".into(),
            context: ContextDescriptor::default(),
        };
        assert!(a.validate().is_ok());
        assert_eq!(a.instructions(), vec!["be nice", "be brief"]);
        a.tools.push(ToolSpec::named("a"));
        assert!(a.validate().is_err());
        a.tools.pop();
        a.version_id = " ".into();
        assert!(a.validate().is_err());
    }
}
