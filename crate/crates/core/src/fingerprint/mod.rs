//! Behavioral fingerprints, principal-component projection, Hotelling's T²
//! and the multivariate sample-size formula.
//!
//! Frozen 14-slot layout:
//!
//! | slots  | feature                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | tool-usage frequency `u` (slot 3 overflow) |
//! | 4      | trace length `L`                          |
//! | 5      | branch count `B`                          |
//! | 6      | output token count                        |
//! | 7      | output complexity `κ`                     |
//! | 8..11  | action distribution `w` (reason, call_tool, respond) |
//! | 11     | error flag `e`                            |
//! | 12     | recovery fraction `ρ`                     |
//! | 13     | total cost `C`                            |
//!
//! Nesting depth `D` and mean step cost `c̄` are kept on the struct but
//! outside the vector: `D` is constant for flat traces and `c̄ = C / L`.

mod hotelling;
mod pca;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::stats::special::z;
use crate::traces::{Action, Trace};

pub use hotelling::{hotelling_test, hotelling_test_with, mahalanobis, HotellingResult};
pub use pca::{pca_project, PcaProjection, VARIANCE_TARGET};

pub const DIM: usize = 14;
pub const TOOL_SLOTS: usize = 4;
pub const OVERFLOW_SLOT: usize = TOOL_SLOTS - 1;

pub const IDX_LENGTH: usize = 4;
pub const IDX_BRANCHES: usize = 5;
pub const IDX_TOKENS: usize = 6;
pub const IDX_COMPLEXITY: usize = 7;
pub const IDX_ACTIONS: usize = 8;
pub const IDX_ERROR: usize = 11;
pub const IDX_RECOVERY: usize = 12;
pub const IDX_COST: usize = 13;

/// Characters at which output complexity saturates.
pub const COMPLEXITY_CEILING_CHARS: f64 = 280.0;

pub const COMPONENT_NAMES: [&str; DIM] = [
    "u0", "u1", "u2", "u3", "length", "branches", "tokens", "complexity", "w_reason", "w_call_tool", "w_respond", "error",
    "recovery", "cost",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub values: [f64; DIM],
    pub depth: f64,
    pub mean_step_cost: f64,
    /// A tool outside the slot map was folded into the overflow slot.
    pub overflow: bool,
}

impl Fingerprint {
    pub fn tool_usage(&self) -> &[f64] {
        &self.values[..TOOL_SLOTS]
    }

    pub fn actions(&self) -> &[f64] {
        &self.values[IDX_ACTIONS..IDX_ACTIONS + 3]
    }
}

/// Assignment of tool names to the four usage slots.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolSlots {
    map: BTreeMap<String, usize>,
}

impl ToolSlots {
    /// First tools of the inventory get slots in order; the rest share the overflow slot.
    pub fn from_inventory<S: AsRef<str>>(names: &[S]) -> Self {
        let map = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_ref().to_string(), i.min(OVERFLOW_SLOT)))
            .collect();
        Self { map }
    }

    /// Slot for `tool` and whether it had to be folded into overflow.
    pub fn slot(&self, tool: &str) -> (usize, bool) {
        match self.map.get(tool) {
            Some(&s) => (s, false),
            None => (OVERFLOW_SLOT, true),
        }
    }
}

pub fn output_complexity(output: &str) -> f64 {
    (output.chars().count() as f64 / COMPLEXITY_CEILING_CHARS).min(1.0)
}

pub fn token_count(output: &str) -> usize {
    output.split_whitespace().count()
}

/// Raw (unnormalized) fingerprint of one trace.
pub fn extract_fingerprint(trace: &Trace, slots: &ToolSlots) -> Result<Fingerprint> {
    if trace.steps.is_empty() {
        return invalid("cannot fingerprint an empty trace");
    }
    let m = trace.steps.len() as f64;
    let mut v = [0.0; DIM];
    let mut overflow = false;
    let mut branches = 0usize;
    let mut prev: Option<Action> = None;
    let mut errors = 0usize;
    let mut recoveries = 0usize;
    let mut cost = 0.0;
    for (i, step) in trace.steps.iter().enumerate() {
        if step.action == Action::CallTool {
            if let Some(tool) = &step.tool {
                let (slot, folded) = slots.slot(tool);
                overflow |= folded;
                v[slot] += 1.0;
            }
        }
        v[IDX_ACTIONS + step.action.index()] += 1.0;
        if prev != Some(step.action) {
            branches += 1;
        }
        prev = Some(step.action);
        if step.error {
            errors += 1;
            if trace.steps.get(i + 1).is_some_and(|n| !n.error) {
                recoveries += 1;
            }
        }
        cost += step.cost;
    }
    for x in &mut v[..TOOL_SLOTS] {
        *x /= m;
    }
    for x in &mut v[IDX_ACTIONS..IDX_ACTIONS + 3] {
        *x /= m;
    }
    v[IDX_LENGTH] = m;
    v[IDX_BRANCHES] = branches as f64;
    v[IDX_TOKENS] = token_count(&trace.final_output) as f64;
    v[IDX_COMPLEXITY] = output_complexity(&trace.final_output);
    v[IDX_ERROR] = if errors > 0 { 1.0 } else { 0.0 };
    v[IDX_RECOVERY] = recoveries as f64 / errors.max(1) as f64;
    v[IDX_COST] = cost;
    Ok(Fingerprint {
        values: v,
        depth: 1.0,
        mean_step_cost: cost / m,
        overflow,
    })
}

/// Ceilings that map the unbounded components into roughly [0, 1] before
/// any covariance-based analysis, so that cost does not swamp the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FingerprintScale {
    pub max_steps: f64,
    pub max_branches: f64,
    pub max_tokens: f64,
    pub max_cost: f64,
}

impl Default for FingerprintScale {
    fn default() -> Self {
        Self {
            max_steps: 20.0,
            max_branches: 20.0,
            max_tokens: 64.0,
            max_cost: 2000.0,
        }
    }
}

impl FingerprintScale {
    pub fn normalize(&self, fp: &Fingerprint) -> Vec<f64> {
        let mut v = fp.values.to_vec();
        v[IDX_LENGTH] /= self.max_steps;
        v[IDX_BRANCHES] /= self.max_branches;
        v[IDX_TOKENS] /= self.max_tokens;
        v[IDX_COST] /= self.max_cost;
        v
    }

    pub fn normalize_all(&self, fps: &[Fingerprint]) -> Vec<Vec<f64>> {
        fps.iter().map(|f| self.normalize(f)).collect()
    }
}

/// Trials per side for Hotelling's test to reach power `1 - beta` at distance `mahalanobis`.
pub fn fingerprint_sample_size(alpha: f64, beta: f64, d_eff: usize, mahalanobis: f64) -> Result<usize> {
    crate::error::check_probability("alpha", alpha)?;
    crate::error::check_probability("beta", beta)?;
    if !(mahalanobis > 0.0) {
        return invalid(format!("Mahalanobis distance must be positive, got {mahalanobis}"));
    }
    if d_eff == 0 {
        return invalid("d_eff must be at least 1");
    }
    let k = (d_eff + 1) as f64;
    let zs = z(1.0 - alpha) + z(1.0 - beta);
    Ok((k * zs * zs / (mahalanobis * mahalanobis) + k / 2.0).ceil() as usize)
}

/// Rows as delimited text with a header, for external verification.
pub fn to_delimited(rows: &[Vec<f64>], sep: char) -> String {
    let mut out = COMPONENT_NAMES.join(&sep.to_string());
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|x| format!("{x}")).collect();
        out.push_str(&line.join(&sep.to_string()));
        out.push('\n');
    }
    out
}
