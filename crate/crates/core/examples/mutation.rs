//! Mutation analysis: perturb the agent configuration, check which mutants the
//! suite kills, and report a score that discounts presumed-equivalent mutants.

use stochtest::mutation::{adequacy_bound, generate_mutants, run_mutation_analysis, MutationOperator, MutationRunConfig, OperatorKind};
use stochtest::simkit::{ImpactTable, SimAgentSpec};
use stochtest::traces::{AgentConfig, Evaluator, ModelDescriptor, Scenario, ToolSpec};

fn main() -> stochtest::Result<()> {
    let cfg = AgentConfig {
        version_id: "router_v1".into(),
        prompt: "Route the ticket\nAnswer briefly\nNever guess the department".into(),
        tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup"), ToolSpec::named("escalate")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let parent = SimAgentSpec::new(cfg, 0.95);
    let ops: Vec<MutationOperator> = [
        OperatorKind::SynonymSubstitution,
        OperatorKind::InstructionDropout,
        OperatorKind::ToolRemoval,
        OperatorKind::ToolReordering,
        OperatorKind::VersionDowngrade,
        OperatorKind::ContextTruncation,
    ]
    .into_iter()
    .map(MutationOperator::new)
    .collect();
    let impacts = ImpactTable::default().with(OperatorKind::VersionDowngrade, -0.2);
    let (mutants, skipped) = generate_mutants(&parent, &ops, 1, &impacts, 42)?;
    for s in &skipped {
        println!("skipped {}: {}", s.operator.op, s.reason);
    }

    let scenarios = vec![
        Scenario::new("payment", "My payment failed", Evaluator::keyword("billing")?).with_property("expected_department", "billing"),
        Scenario::new("refund", "Refund my order", Evaluator::keyword("billing")?).with_property("expected_department", "billing"),
    ];
    for sequential in [false, true] {
        let run = MutationRunConfig {
            sequential,
            seed: 7,
            ..MutationRunConfig::default()
        };
        let report = run_mutation_analysis(&parent, &mutants, skipped.clone(), &scenarios, &run)?;
        println!("\n{} kill tests", if sequential { "sequential" } else { "fixed-n" });
        for o in &report.outcomes {
            let status = match (o.result.killed, o.result.presumed_equivalent) {
                (true, _) => format!("killed ({:?})", o.result.condition),
                (false, true) => "survived, presumed equivalent".into(),
                (false, false) => "survived".into(),
            };
            println!(
                "  {:<22} {:<8?} effect {:+.3}  trials {:>4}  {status}",
                o.operator.op.to_string(),
                o.class,
                o.result.effect,
                o.trials_used
            );
        }
        if let Some(score) = &report.score {
            println!(
                "  score {:.2} ({} killed, {} equivalent, {} total)",
                score.overall, score.killed_count, score.equivalent_count, score.total
            );
            println!("  per class: {:?}", score.per_class);
            println!("  detection bound for a 0.2 regression: {:.2}", adequacy_bound(score.overall, 0.2, 0.05)?);
        }
    }
    Ok(())
}
