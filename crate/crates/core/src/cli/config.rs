//! Campaign configuration files.
//!
//! The document follows the YAML layout of the scenario format (`name`,
//! `scenarios[].input/properties/evaluator`, `config.trials/threshold/alpha/
//! beta/method`, `config.regression.baseline/delta`) with additive `gate`,
//! `mutation`, `store`, `seed`, and per-scenario `id`/`kind`/`tags` keys.
//! Parsing reports every problem found, not only the first.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_yaml::{Mapping, Value};

use crate::error::{Error, Result};
use crate::gate::{GateConfig, TrialMethod};
use crate::mutation::{MutationOperator, OperatorKind};
use crate::simkit::SimAgentSpec;
use crate::traces::{Evaluator, EvaluatorKind, EvaluatorSpec, Property, Scenario, ScenarioKind};

/// The agent under test: a simulator spec the CLI can execute, or just a
/// version label for stored-trace work.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentRef {
    Named(String),
    Sim(Box<SimAgentSpec>),
}

impl AgentRef {
    pub fn version_id(&self) -> &str {
        match self {
            AgentRef::Named(n) => n,
            AgentRef::Sim(s) => s.version_id(),
        }
    }

    pub fn sim(&self) -> Option<&SimAgentSpec> {
        match self {
            AgentRef::Sim(s) => Some(s),
            AgentRef::Named(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBlock {
    /// Resolved against the config file's directory.
    pub baseline: PathBuf,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBlock {
    pub trials: usize,
    pub threshold: f64,
    pub alpha: f64,
    pub beta: f64,
    pub method: TrialMethod,
    pub regression: Option<RegressionBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MutationBlock {
    pub operators: Vec<MutationOperator>,
    pub per_operator: usize,
    pub trials: usize,
    pub delta_min: f64,
    pub alpha_kill: f64,
    pub sequential: bool,
}

impl Default for MutationBlock {
    fn default() -> Self {
        Self {
            operators: MutationOperator::all(),
            per_operator: 1,
            trials: 100,
            delta_min: 0.1,
            alpha_kill: 0.05,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub name: String,
    pub description: Option<String>,
    pub agent: AgentRef,
    pub scenarios: Vec<Scenario>,
    pub config: TrialBlock,
    /// α, β, θ, δ and the method come from `config`; the rest from `gate`.
    pub gate: GateConfig,
    pub mutation: MutationBlock,
    pub store: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// A baseline file: the simulator spec of the deployed version.
pub fn load_baseline(path: &Path) -> Result<SimAgentSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("baseline {}: {e}", path.display())]))?;
    let mut spec: SimAgentSpec = serde_yaml::from_str(&text).map_err(|e| Error::Config(vec![format!("baseline {}: {e}", path.display())]))?;
    spec.resolve_defaults();
    spec.validate().map_err(|e| Error::Config(vec![format!("baseline {}: {e}", path.display())]))?;
    Ok(spec)
}

pub fn parse_config(path: &Path) -> Result<CampaignConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base)
}

#[derive(Default)]
struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }

    fn typed<T: DeserializeOwned>(&mut self, at: &str, v: &Value) -> Option<T> {
        match serde_yaml::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(format!("{at}: {e}"));
                None
            }
        }
    }

    fn probability(&mut self, at: &str, v: f64) {
        if !(v > 0.0 && v < 1.0) {
            self.push(format!("{at} must lie in (0, 1), got {v}"));
        }
    }
}

fn known_keys(errs: &mut Errors, at: &str, map: &Mapping, keys: &[&str]) {
    for k in map.keys() {
        let name = k.as_str().map_or_else(|| format!("{k:?}"), String::from);
        if !keys.contains(&name.as_str()) {
            errs.push(format!("{at}: unknown key `{name}`"));
        }
    }
}

// Report unknown keys, then deserialize the known remainder so one stray key
// does not hide range errors elsewhere in the section.
fn section<T: DeserializeOwned>(errs: &mut Errors, at: &str, v: &Value, keys: &[&str]) -> Option<T> {
    let Some(map) = v.as_mapping() else {
        return errs.typed(at, v);
    };
    known_keys(errs, at, map, keys);
    let kept: Mapping = map
        .iter()
        .filter(|(k, _)| k.as_str().is_some_and(|k| keys.contains(&k)))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    errs.typed(at, &Value::Mapping(kept))
}

fn slug(input: &str) -> String {
    let mut s = String::new();
    for ch in input.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('_') && !s.is_empty() {
            s.push('_');
        }
        if s.len() >= 40 {
            break;
        }
    }
    let s = s.trim_end_matches('_').to_string();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

// `exact_match` and `keyword` judge against the scenario's first `expected*`
// property; `kind:rule` strings and `{kind, rule}` maps name a rule directly.
fn evaluator(errs: &mut Errors, at: &str, v: &Value, properties: &[Property]) -> Option<Evaluator> {
    let expected = properties.iter().find(|p| p.name.starts_with("expected")).map(Property::text);
    let build = |kind: EvaluatorKind, rule: String| Evaluator::new(EvaluatorSpec { kind, rule });
    let made = match v {
        Value::String(s) => match s.split_once(':') {
            None if s == "exact_match" || s == "keyword" => match expected {
                Some(e) => build(EvaluatorKind::KeywordRule, e),
                None => Err(Error::InvalidEvaluator(format!("`{s}` needs an expected_* property"))),
            },
            None => Err(Error::InvalidEvaluator(format!("unknown evaluator `{s}`"))),
            Some((kind, rule)) => {
                let kind = match kind.trim() {
                    "keyword" => Some(EvaluatorKind::KeywordRule),
                    "regex" => Some(EvaluatorKind::RegexRule),
                    "contract" => Some(EvaluatorKind::ContractPredicate),
                    "script" => Some(EvaluatorKind::PredicateScript),
                    _ => None,
                };
                match kind {
                    Some(k) => build(k, rule.trim().to_string()),
                    None => Err(Error::InvalidEvaluator(format!("unknown evaluator kind in `{s}`"))),
                }
            }
        },
        other => match serde_yaml::from_value::<EvaluatorSpec>(other.clone()) {
            Ok(spec) => Evaluator::new(spec),
            Err(e) => Err(Error::InvalidEvaluator(e.to_string())),
        },
    };
    match made {
        Ok(e) => Some(e),
        Err(e) => {
            errs.push(format!("{at}.evaluator: {e}"));
            None
        }
    }
}

fn scenarios(errs: &mut Errors, v: Option<&Value>) -> Vec<Scenario> {
    let Some(v) = v else {
        errs.push("missing required key `scenarios`");
        return Vec::new();
    };
    let Some(list) = v.as_sequence() else {
        errs.push("`scenarios` must be a list");
        return Vec::new();
    };
    if list.is_empty() {
        errs.push("`scenarios` is empty");
    }
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for (i, item) in list.iter().enumerate() {
        let at = format!("scenarios[{i}]");
        let Some(map) = item.as_mapping() else {
            errs.push(format!("{at} must be a mapping"));
            continue;
        };
        known_keys(errs, &at, map, &["id", "input", "properties", "evaluator", "kind", "tags"]);
        let get = |k: &str| map.get(Value::String(k.into()));
        let Some(input) = get("input").and_then(Value::as_str) else {
            errs.push(format!("{at}: missing string `input`"));
            continue;
        };
        let properties: Vec<Property> = get("properties").and_then(|p| errs.typed(&format!("{at}.properties"), p)).unwrap_or_default();
        let kind: ScenarioKind = get("kind").and_then(|k| errs.typed(&format!("{at}.kind"), k)).unwrap_or_default();
        let tags: Vec<String> = get("tags").and_then(|t| errs.typed(&format!("{at}.tags"), t)).unwrap_or_default();
        let Some(ev) = get("evaluator") else {
            errs.push(format!("{at}: missing `evaluator`"));
            continue;
        };
        let Some(ev) = evaluator(errs, &at, ev, &properties) else { continue };
        let id = match get("id") {
            Some(v) => match v.as_str() {
                Some(s) if !s.trim().is_empty() && !s.contains('~') => s.to_string(),
                _ => {
                    errs.push(format!("{at}.id must be a non-empty string without '~'"));
                    continue;
                }
            },
            None => {
                let base = slug(input);
                let mut id = base.clone();
                let mut n = 2;
                while ids.contains(&id) {
                    id = format!("{base}_{n}");
                    n += 1;
                }
                id
            }
        };
        if !ids.insert(id.clone()) {
            errs.push(format!("{at}: duplicate scenario id `{id}`"));
            continue;
        }
        if kind == ScenarioKind::Metamorphic {
            let probe = Scenario::new(id.clone(), input, ev.clone()).with_kind(kind);
            let mut probe = probe;
            probe.properties = properties.clone();
            match crate::gate::scenario_relation(&probe) {
                Ok(Some(_)) => {}
                Ok(None) => errs.push(format!("{at}: metamorphic scenarios need a `relation` property")),
                Err(e) => errs.push(format!("{at}: {e}")),
            }
        }
        let mut sc = Scenario::new(id, input, ev).with_kind(kind);
        sc.properties = properties;
        sc.tags = tags;
        out.push(sc);
    }
    out
}

fn agent(errs: &mut Errors, v: Option<&Value>) -> AgentRef {
    match v {
        None => {
            errs.push("missing required key `agent`");
            AgentRef::Named(String::new())
        }
        Some(Value::String(s)) if !s.trim().is_empty() => AgentRef::Named(s.clone()),
        Some(m @ Value::Mapping(_)) => match errs.typed::<SimAgentSpec>("agent", m) {
            Some(mut spec) => {
                spec.resolve_defaults();
                if let Err(e) = spec.validate() {
                    errs.push(format!("agent: {e}"));
                }
                AgentRef::Sim(Box::new(spec))
            }
            None => AgentRef::Named(String::new()),
        },
        Some(_) => {
            errs.push("`agent` must be a version name or a simulator spec mapping");
            AgentRef::Named(String::new())
        }
    }
}

#[derive(Deserialize)]
struct RawRegression {
    baseline: PathBuf,
    #[serde(default = "default_delta")]
    delta: f64,
}

fn default_delta() -> f64 {
    0.10
}

#[derive(Deserialize)]
struct RawTrials {
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_beta")]
    beta: f64,
    #[serde(default)]
    method: TrialMethod,
    #[serde(default)]
    regression: Option<RawRegression>,
}

fn default_trials() -> usize {
    50
}
fn default_threshold() -> f64 {
    0.90
}
fn default_alpha() -> f64 {
    0.05
}
fn default_beta() -> f64 {
    0.10
}

impl Default for RawTrials {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            threshold: default_threshold(),
            alpha: default_alpha(),
            beta: default_beta(),
            method: TrialMethod::default(),
            regression: None,
        }
    }
}

#[derive(Deserialize, Default)]
struct RawGate {
    coverage_min: Option<f64>,
    n_max: Option<usize>,
    t_max: Option<u64>,
    parallelism: Option<usize>,
    #[serde(default)]
    target_models: Vec<String>,
}

#[derive(Deserialize, Default)]
struct RawMutation {
    operators: Option<Vec<String>>,
    per_operator: Option<usize>,
    trials: Option<usize>,
    delta_min: Option<f64>,
    alpha_kill: Option<f64>,
    sequential: Option<bool>,
}

/// Parse a campaign document; relative paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<CampaignConfig> {
    let mut errs = Errors::default();
    let doc: Value = serde_yaml::from_str(text).map_err(|e| Error::Config(vec![format!("not valid YAML: {e}")]))?;
    let Some(top) = doc.as_mapping() else {
        return Err(Error::Config(vec!["the campaign document must be a mapping".into()]));
    };
    known_keys(
        &mut errs,
        "campaign",
        top,
        &["name", "description", "agent", "scenarios", "config", "gate", "mutation", "store", "seed"],
    );
    let get = |k: &str| top.get(Value::String(k.into()));

    let name = match get("name").and_then(Value::as_str) {
        Some(n) if !n.trim().is_empty() => n.to_string(),
        _ => {
            errs.push("missing required string `name`");
            String::new()
        }
    };
    let description = get("description").and_then(Value::as_str).map(String::from);
    let agent = agent(&mut errs, get("agent"));
    let scenarios = scenarios(&mut errs, get("scenarios"));

    let raw: RawTrials = get("config")
        .and_then(|v| section(&mut errs, "config", v, &["trials", "threshold", "alpha", "beta", "method", "regression"]))
        .unwrap_or_default();
    if let Some(r) = get("config").and_then(|c| c.get("regression")).and_then(Value::as_mapping) {
        known_keys(&mut errs, "config.regression", r, &["baseline", "delta"]);
    }
    if raw.trials == 0 {
        errs.push("config.trials must be at least 1");
    }
    errs.probability("config.threshold", raw.threshold);
    errs.probability("config.alpha", raw.alpha);
    errs.probability("config.beta", raw.beta);
    let regression = raw.regression.map(|r| {
        if !(r.delta > 0.0 && r.delta < 1.0) {
            errs.push(format!("config.regression.delta must lie in (0, 1), got {}", r.delta));
        }
        let path = if r.baseline.is_absolute() { r.baseline } else { base_dir.join(r.baseline) };
        if !path.is_file() {
            errs.push(format!("config.regression.baseline: file {} does not exist", path.display()));
        }
        RegressionBlock { baseline: path, delta: r.delta }
    });
    let trials = TrialBlock {
        trials: raw.trials,
        threshold: raw.threshold,
        alpha: raw.alpha,
        beta: raw.beta,
        method: raw.method,
        regression,
    };

    let g: RawGate = get("gate")
        .and_then(|v| section(&mut errs, "gate", v, &["coverage_min", "n_max", "t_max", "parallelism", "target_models"]))
        .unwrap_or_default();
    let defaults = GateConfig::default();
    let gate = GateConfig {
        alpha: trials.alpha,
        beta: trials.beta,
        delta: trials.regression.as_ref().map_or(defaults.delta, |r| r.delta),
        theta: trials.threshold,
        coverage_min: g.coverage_min.unwrap_or(defaults.coverage_min),
        n_max: g.n_max.unwrap_or(trials.trials),
        t_max: g.t_max,
        method: trials.method,
        parallelism: g.parallelism.unwrap_or(0),
        target_models: g.target_models,
    };
    // probabilities were reported against their config.* names already
    for p in gate.problems() {
        if !["alpha", "beta", "theta", "delta"].iter().any(|k| p.starts_with(k)) {
            errs.push(format!("gate: {p}"));
        }
    }

    let m: RawMutation = get("mutation")
        .and_then(|v| {
            section(
                &mut errs,
                "mutation",
                v,
                &["operators", "per_operator", "trials", "delta_min", "alpha_kill", "sequential"],
            )
        })
        .unwrap_or_default();
    let md = MutationBlock::default();
    let operators = match m.operators {
        None => md.operators,
        Some(names) => names
            .iter()
            .filter_map(|n| match n.parse::<OperatorKind>() {
                Ok(k) => Some(MutationOperator::new(k)),
                Err(e) => {
                    errs.push(format!("mutation.operators: {e}"));
                    None
                }
            })
            .collect(),
    };
    let mutation = MutationBlock {
        operators,
        per_operator: m.per_operator.unwrap_or(md.per_operator),
        trials: m.trials.unwrap_or(md.trials),
        delta_min: m.delta_min.unwrap_or(md.delta_min),
        alpha_kill: m.alpha_kill.unwrap_or(md.alpha_kill),
        sequential: m.sequential.unwrap_or(md.sequential),
    };
    if mutation.per_operator == 0 || mutation.trials == 0 {
        errs.push("mutation.per_operator and mutation.trials must be at least 1");
    }
    errs.probability("mutation.alpha_kill", mutation.alpha_kill);
    if !(mutation.delta_min > 0.0 && mutation.delta_min < 1.0) {
        errs.push(format!("mutation.delta_min must lie in (0, 1), got {}", mutation.delta_min));
    }

    let store = get("store").and_then(|v| errs.typed::<PathBuf>("store", v)).map(|p| if p.is_absolute() { p } else { base_dir.join(p) });
    let seed = get("seed").and_then(|v| errs.typed::<u64>("seed", v));

    if !errs.0.is_empty() {
        return Err(Error::Config(errs.0));
    }
    Ok(CampaignConfig {
        name,
        description,
        agent,
        scenarios,
        config: trials,
        gate,
        mutation,
        store,
        seed,
    })
}
