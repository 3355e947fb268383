//! Five-dimensional coverage over a trace set.
//!
//! Dimensions whose denominator is empty (no tools, no boundaries, no target
//! models, no traces for paths) are `None` and drop out of aggregation.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::traces::{Action, Scenario, ToolSpec, Trace};

pub const DEFAULT_STATE_LAMBDA: f64 = 50.0;
/// Numeric boundaries count as hit within this share of the domain width.
pub const DEFAULT_NUMERIC_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Tool,
    Path,
    State,
    Boundary,
    Model,
}

impl Dimension {
    /// Also the tie-break order for [`weakest_dimension`].
    pub const ALL: [Dimension; 5] = [Dimension::Tool, Dimension::Path, Dimension::State, Dimension::Boundary, Dimension::Model];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Tool => "tool",
            Dimension::Path => "path",
            Dimension::State => "state",
            Dimension::Boundary => "boundary",
            Dimension::Model => "model",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(action, tool)` per step; outputs are ignored.
pub type DecisionPath = Vec<(Action, Option<String>)>;

pub fn decision_path(trace: &Trace) -> DecisionPath {
    trace.steps.iter().map(|s| (s.action, s.tool.clone())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub distinct: usize,
    pub singletons: usize,
    pub doubletons: usize,
    pub chao1: f64,
}

/// Chao1 richness from per-class abundance counts (zeros ignored).
pub fn chao1_from_counts(counts: &[usize]) -> Result<PathStats> {
    let seen: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if seen.is_empty() {
        return invalid("chao1 needs at least one observation");
    }
    let d = seen.len();
    let f1 = seen.iter().filter(|&&c| c == 1).count();
    let f2 = seen.iter().filter(|&&c| c == 2).count();
    let (f1f, f2f) = (f1 as f64, f2 as f64);
    let extra = if f2 > 0 { f1f * f1f / (2.0 * f2f) } else { f1f * (f1f - 1.0) / 2.0 };
    Ok(PathStats {
        distinct: d,
        singletons: f1,
        doubletons: f2,
        chao1: d as f64 + extra,
    })
}

/// Chao1 over a multiset of arbitrary hashable items.
pub fn chao1<T: Ord>(items: impl IntoIterator<Item = T>) -> Result<PathStats> {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for it in items {
        *counts.entry(it).or_default() += 1;
    }
    chao1_from_counts(&counts.into_values().collect::<Vec<_>>())
}

/// One endpoint of one tool parameter's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub tool: String,
    pub param: String,
    pub value: f64,
    /// Absolute distance still counting as a hit.
    pub tolerance: f64,
}

impl Boundary {
    pub fn label(&self) -> String {
        format!("{}.{}={}", self.tool, self.param, self.value)
    }
}

/// Both endpoints of every parameter in `tools`.
pub fn boundaries_from_tools(tools: &[ToolSpec], numeric_tolerance: f64) -> Vec<Boundary> {
    let mut out = Vec::new();
    for t in tools {
        for p in &t.parameters {
            let tol = if p.discrete { 0.0 } else { numeric_tolerance * (p.max - p.min).abs() };
            for v in [p.min, p.max] {
                out.push(Boundary {
                    tool: t.name.clone(),
                    param: p.name.clone(),
                    value: v,
                    tolerance: tol,
                });
            }
        }
    }
    out
}

/// Abstract state of step `index`: returns a hashable key.
pub type StateAbstraction = fn(&Trace, usize) -> u64;

/// (log2 step-index bucket capped at 4, tool, error flag), hashed.
pub fn default_state_abstraction(trace: &Trace, index: usize) -> u64 {
    let step = &trace.steps[index];
    let bucket = ((index + 1).ilog2()).min(4);
    let mut h = DefaultHasher::new();
    (bucket, step.action, step.tool.as_deref(), step.error).hash(&mut h);
    h.finish()
}

#[derive(Debug, Clone)]
pub struct CoverageContext {
    pub tool_inventory: Vec<String>,
    pub boundaries: Vec<Boundary>,
    pub target_models: Vec<String>,
    pub tested_models: Vec<String>,
    pub state_lambda: f64,
    pub state_abstraction: StateAbstraction,
}

impl CoverageContext {
    /// Inventory and boundaries from `tools`, default tolerances and λ.
    pub fn from_tools(tools: &[ToolSpec]) -> Self {
        Self {
            tool_inventory: tools.iter().map(|t| t.name.clone()).collect(),
            boundaries: boundaries_from_tools(tools, DEFAULT_NUMERIC_TOLERANCE),
            target_models: Vec::new(),
            tested_models: Vec::new(),
            state_lambda: DEFAULT_STATE_LAMBDA,
            state_abstraction: default_state_abstraction,
        }
    }

    pub fn with_models(mut self, target: &[&str], tested: &[&str]) -> Self {
        self.target_models = target.iter().map(|s| s.to_string()).collect();
        self.tested_models = tested.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.state_lambda > 0.0) {
            return invalid(format!("state lambda must be positive, got {}", self.state_lambda));
        }
        if self.boundaries.iter().any(|b| !(b.tolerance >= 0.0)) {
            return invalid("boundary tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageTuple {
    pub tool: Option<f64>,
    pub path: Option<f64>,
    /// In [0, 1) by construction.
    pub state: Option<f64>,
    pub boundary: Option<f64>,
    pub model: Option<f64>,
}

impl CoverageTuple {
    pub fn full() -> Self {
        Self {
            tool: Some(1.0),
            path: Some(1.0),
            state: Some(1.0),
            boundary: Some(1.0),
            model: Some(1.0),
        }
    }

    pub fn get(&self, d: Dimension) -> Option<f64> {
        match d {
            Dimension::Tool => self.tool,
            Dimension::Path => self.path,
            Dimension::State => self.state,
            Dimension::Boundary => self.boundary,
            Dimension::Model => self.model,
        }
    }

    pub fn applicable(&self) -> Vec<(Dimension, f64)> {
        Dimension::ALL.iter().filter_map(|&d| self.get(d).map(|v| (d, v))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub tuple: CoverageTuple,
    pub overall: f64,
    pub path_stats: Option<PathStats>,
    pub abstract_states: usize,
    pub tools_used: Vec<String>,
    pub boundaries_tested: Vec<String>,
}

pub fn coverage_tuple<'a>(traces: impl IntoIterator<Item = &'a Trace>, ctx: &CoverageContext) -> Result<CoverageReport> {
    ctx.validate()?;
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut states: HashSet<u64> = HashSet::new();
    let mut hit = vec![false; ctx.boundaries.len()];
    let mut paths: Vec<DecisionPath> = Vec::new();
    let inventory: HashSet<&str> = ctx.tool_inventory.iter().map(String::as_str).collect();
    for trace in traces {
        for (i, step) in trace.steps.iter().enumerate() {
            states.insert((ctx.state_abstraction)(trace, i));
            let Some(tool) = step.tool.as_deref() else { continue };
            if inventory.contains(tool) {
                used.insert(tool);
            }
            for (b, h) in ctx.boundaries.iter().zip(hit.iter_mut()) {
                if b.tool == tool {
                    if let Some(v) = step.args.get(&b.param) {
                        *h |= (v - b.value).abs() <= b.tolerance;
                    }
                }
            }
        }
        paths.push(decision_path(trace));
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let path_stats = if paths.is_empty() { None } else { Some(chao1(paths)?) };
    let tested: BTreeSet<&str> = ctx
        .tested_models
        .iter()
        .filter(|m| ctx.target_models.contains(m))
        .map(String::as_str)
        .collect();
    let tuple = CoverageTuple {
        tool: ratio(used.len(), ctx.tool_inventory.len()),
        path: path_stats.map(|s| s.distinct as f64 / s.chao1),
        state: Some(1.0 - (-(states.len() as f64) / ctx.state_lambda).exp()),
        boundary: ratio(hit.iter().filter(|&&h| h).count(), ctx.boundaries.len()),
        model: ratio(tested.len(), ctx.target_models.len()),
    };
    Ok(CoverageReport {
        overall: overall_coverage(&tuple, None)?,
        tuple,
        path_stats,
        abstract_states: states.len(),
        tools_used: used.into_iter().map(String::from).collect(),
        boundaries_tested: ctx.boundaries.iter().zip(&hit).filter(|(_, h)| **h).map(|(b, _)| b.label()).collect(),
    })
}

/// Geometric mean over applicable dimensions; weights, when given, are in
/// `Dimension::ALL` order and renormalized over the applicable ones.
pub fn overall_coverage(tuple: &CoverageTuple, weights: Option<&[f64; 5]>) -> Result<f64> {
    if let Some(w) = weights {
        if w.iter().any(|x| !(*x >= 0.0)) {
            return invalid("coverage weights must be non-negative");
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return invalid("coverage weights must sum to 1");
        }
    }
    let parts: Vec<(f64, f64)> = Dimension::ALL
        .iter()
        .enumerate()
        .filter_map(|(i, &d)| tuple.get(d).map(|v| (v, weights.map_or(1.0, |w| w[i]))))
        .collect();
    let total: f64 = parts.iter().map(|p| p.1).sum();
    if parts.is_empty() || total <= 0.0 {
        return Ok(0.0);
    }
    if parts.iter().any(|&(v, w)| v <= 0.0 && w > 0.0) {
        return Ok(0.0);
    }
    Ok(parts.iter().filter(|p| p.1 > 0.0).map(|&(v, w)| w / total * v.ln()).sum::<f64>().exp())
}

/// Argmin of `C_d / C_d*` over applicable dimensions; ties keep `Dimension::ALL` order.
pub fn weakest_dimension(tuple: &CoverageTuple, target: &CoverageTuple) -> Option<Dimension> {
    let mut best: Option<(Dimension, f64)> = None;
    for d in Dimension::ALL {
        let (Some(c), Some(t)) = (tuple.get(d), target.get(d)) else { continue };
        if t <= 0.0 {
            continue;
        }
        let r = c / t;
        if best.is_none_or(|(_, b)| r < b) {
            best = Some((d, r));
        }
    }
    best.map(|b| b.0)
}

/// Tag marking a pool scenario as aimed at one dimension.
pub fn dimension_tag(d: Dimension) -> String {
    format!("coverage:{}", d.as_str())
}

/// Next scenario from a pre-tagged pool, aimed at the weakest dimension.
/// `None` when no pool entry carries that dimension's tag.
pub fn select_next_scenario<'a>(tuple: &CoverageTuple, target: &CoverageTuple, pool: &'a [Scenario]) -> Option<&'a Scenario> {
    let weakest = weakest_dimension(tuple, target)?;
    let tag = dimension_tag(weakest);
    pool.iter().find(|s| s.has_tag(&tag))
}
