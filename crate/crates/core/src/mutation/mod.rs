//! Agent mutation operators and stochastic kill analysis.

mod kill;
mod operators;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kill::{
    adequacy_bound, kill_test, presume_equivalent, selective_cost_reduction, sprt_kill, EquivalenceConfig, KillCondition, KillConfig, KillFeature,
    KillResult, KillSample, SPRT_KILL_MIN_BASE,
};
pub use operators::{MutationOperator, OperatorClass, OperatorKind};

use crate::error::{invalid, Error, Result};
use crate::fingerprint::ToolSlots;
use crate::simkit::{apply_mutation, ImpactTable, SimAgentSpec};
use crate::stats::TrialOutcomes;
use crate::traces::{derive_seed, trial_seed, Runner, Scenario, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutant {
    pub operator: MutationOperator,
    pub spec: SimAgentSpec,
    pub parent_version: String,
}

impl Mutant {
    pub fn version_id(&self) -> &str {
        self.spec.version_id()
    }
}

/// An operator that could not be applied, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inapplicable {
    pub operator: MutationOperator,
    pub reason: String,
}

/// `per_operator` mutants for each operator; deterministic in `seed`.
pub fn generate_mutants(
    spec: &SimAgentSpec,
    operators: &[MutationOperator],
    per_operator: usize,
    impacts: &ImpactTable,
    seed: u64,
) -> Result<(Vec<Mutant>, Vec<Inapplicable>)> {
    if operators.is_empty() {
        return invalid("mutant generation needs at least one operator");
    }
    let mut mutants = Vec::new();
    let mut skipped = Vec::new();
    for op in operators {
        for i in 0..per_operator {
            match apply_mutation(spec, op, impacts, derive_seed(seed, &format!("{}#{i}", op.op))) {
                Ok(mut m) => {
                    if per_operator > 1 {
                        m.agent.version_id = format!("{}#{i}", m.agent.version_id);
                    }
                    mutants.push(Mutant {
                        operator: *op,
                        spec: m,
                        parent_version: spec.agent.version_id.clone(),
                    });
                }
                Err(Error::InvalidInput(reason)) => {
                    skipped.push(Inapplicable { operator: *op, reason });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok((mutants, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationScore {
    pub overall: f64,
    /// `None` for a class with no non-equivalent mutants.
    pub per_class: BTreeMap<OperatorClass, Option<f64>>,
    pub killed_count: usize,
    pub equivalent_count: usize,
    pub total: usize,
}

/// Killed over non-equivalent, overall and per class.
pub fn mutation_score(results: &[(OperatorClass, KillResult)]) -> Result<MutationScore> {
    let total = results.len();
    let equivalent_count = results.iter().filter(|r| r.1.presumed_equivalent).count();
    let killed_count = results.iter().filter(|r| r.1.killed && !r.1.presumed_equivalent).count();
    if total == equivalent_count {
        return Err(Error::UndefinedScore);
    }
    let per_class = OperatorClass::ALL
        .iter()
        .map(|&c| {
            let live: Vec<_> = results.iter().filter(|r| r.0 == c && !r.1.presumed_equivalent).collect();
            let score = (!live.is_empty()).then(|| live.iter().filter(|r| r.1.killed).count() as f64 / live.len() as f64);
            (c, score)
        })
        .collect();
    Ok(MutationScore {
        overall: killed_count as f64 / (total - equivalent_count) as f64,
        per_class,
        killed_count,
        equivalent_count,
        total,
    })
}

/// `n` seeded executions of `runner` on `scenario`.
pub fn sample_runner<R: Runner + ?Sized>(runner: &R, scenario: &Scenario, n: usize, seed: u64) -> Result<(Vec<Trace>, TrialOutcomes)> {
    let traces: Vec<Trace> = (0..n)
        .map(|i| runner.run(scenario, trial_seed(seed, runner.version_id(), &scenario.scenario_id, i)))
        .collect::<Result<_>>()?;
    let bits = traces.iter().map(|t| scenario.evaluate(t)).collect();
    Ok((traces, TrialOutcomes::new(scenario.scenario_id.clone(), runner.version_id(), bits)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRunConfig {
    pub trials: usize,
    pub kill: KillConfig,
    pub equivalence: EquivalenceConfig,
    /// Use the sequential kill instead of fixed-n trials.
    pub sequential: bool,
    pub beta: f64,
    pub seed: u64,
}

impl Default for MutationRunConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            kill: KillConfig::default(),
            equivalence: EquivalenceConfig::default(),
            sequential: false,
            beta: 0.10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutantOutcome {
    pub version_id: String,
    pub operator: MutationOperator,
    pub class: OperatorClass,
    /// First killing scenario, else the scenario with the smallest p-value.
    pub result: KillResult,
    pub per_scenario: Vec<KillResult>,
    pub trials_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub parent_version: String,
    pub outcomes: Vec<MutantOutcome>,
    pub skipped: Vec<Inapplicable>,
    /// `None` when every mutant is presumed equivalent.
    pub score: Option<MutationScore>,
}

/// Evaluate every mutant against the parent on every scenario, mutants in parallel.
pub fn run_mutation_analysis(
    parent: &SimAgentSpec,
    mutants: &[Mutant],
    skipped: Vec<Inapplicable>,
    scenarios: &[Scenario],
    cfg: &MutationRunConfig,
) -> Result<MutationReport> {
    cfg.kill.validate()?;
    if scenarios.is_empty() {
        return invalid("mutation analysis needs at least one scenario");
    }
    let slots = ToolSlots::from_inventory(&parent.agent.tool_names());
    let base: Vec<(TrialOutcomes, Vec<f64>)> = scenarios
        .iter()
        .map(|s| {
            let (traces, outcomes) = sample_runner(parent, s, cfg.trials, cfg.seed)?;
            Ok((outcomes, cfg.kill.feature.values(&traces, &slots)?))
        })
        .collect::<Result<_>>()?;
    let outcomes: Vec<MutantOutcome> = mutants
        .par_iter()
        .map(|m| evaluate_mutant(m, scenarios, &base, &slots, cfg))
        .collect::<Result<_>>()?;
    let pairs: Vec<(OperatorClass, KillResult)> = outcomes.iter().map(|o| (o.class, o.result.clone())).collect();
    let score = match mutation_score(&pairs) {
        Ok(s) => Some(s),
        Err(Error::UndefinedScore) => None,
        Err(e) => return Err(e),
    };
    Ok(MutationReport {
        parent_version: parent.agent.version_id.clone(),
        outcomes,
        skipped,
        score,
    })
}

fn evaluate_mutant(
    m: &Mutant,
    scenarios: &[Scenario],
    base: &[(TrialOutcomes, Vec<f64>)],
    slots: &ToolSlots,
    cfg: &MutationRunConfig,
) -> Result<MutantOutcome> {
    let mut per_scenario = Vec::with_capacity(scenarios.len());
    let mut trials_used = 0;
    for (s, (base_outcomes, base_feature)) in scenarios.iter().zip(base) {
        let r = if cfg.sequential {
            let mut i = 0;
            let mut err = None;
            let r = sprt_kill(
                base_outcomes,
                || {
                    let seed = trial_seed(cfg.seed, m.version_id(), &s.scenario_id, i);
                    i += 1;
                    match m.spec.run(s, seed) {
                        Ok(t) => Some(s.evaluate(&t)),
                        Err(e) => {
                            err = Some(e);
                            None
                        }
                    }
                },
                &cfg.kill,
                cfg.beta,
                cfg.trials,
            )?;
            if let Some(e) = err {
                return Err(e);
            }
            r
        } else {
            let (traces, outcomes) = sample_runner(&m.spec, s, cfg.trials, cfg.seed)?;
            let sample = KillSample {
                outcomes,
                feature: cfg.kill.feature.values(&traces, slots)?,
            };
            let b = KillSample {
                outcomes: base_outcomes.clone(),
                feature: base_feature.clone(),
            };
            kill_test(&b, &sample, &cfg.kill)?
        };
        trials_used += r.trials_used;
        let stop = r.killed;
        per_scenario.push(r);
        if stop {
            break;
        }
    }
    let mut result = per_scenario
        .iter()
        .find(|r| r.killed)
        .or_else(|| per_scenario.iter().min_by(|a, b| a.p_value.total_cmp(&b.p_value)))
        .cloned()
        .expect("at least one scenario");
    if !result.killed && !cfg.sequential {
        result.presumed_equivalent = presume_equivalent(&per_scenario, &cfg.equivalence).unwrap_or(false);
    }
    Ok(MutantOutcome {
        version_id: m.version_id().to_string(),
        operator: m.operator,
        class: m.operator.class(),
        result,
        per_scenario,
        trials_used,
    })
}
