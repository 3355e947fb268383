//! Metamorphic relations: each source run is paired with a transformed
//! follow-up under the same seed, and the relation is checked on both outputs.

use stochtest::metamorphic::{mr_regression, permute_tool_order, run_relation, transform_input, MetamorphicRelation, RelationId};
use stochtest::simkit::SimAgentSpec;
use stochtest::traces::{AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ToolSpec};

fn agent(version: &str) -> SimAgentSpec {
    let cfg = AgentConfig {
        version_id: version.into(),
        prompt: "Route the ticket".into(),
        tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup"), ToolSpec::named("escalate")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    SimAgentSpec::new(cfg, 0.95)
}

fn main() -> stochtest::Result<()> {
    let robust = agent("v1");
    let mut fragile = agent("v2");
    fragile.variant_effects.insert("doc_order_invariance".into(), -0.4);
    fragile.variant_effects.insert("noise_robustness".into(), -0.3);

    let sc = Scenario::new(
        "payment_docs",
        "My card payment failed\n\nThe bank says it went through\n\nPlease check the charge",
        Evaluator::keyword("billing")?,
    )
    .with_property("expected_department", "billing");

    let doc = MetamorphicRelation::new(RelationId::DocOrderInvariance);
    if let Some(f) = transform_input(&doc, &sc, 3).scenario() {
        println!("follow-up {} input:\n  {}", f.scenario_id, f.input.replace("\n\n", " | "));
    }

    let pairs = 150;
    let mut stats = Vec::new();
    for rel in [RelationId::DocOrderInvariance, RelationId::NoiseRobustness, RelationId::Idempotence] {
        let mr = MetamorphicRelation::new(rel);
        let a = run_relation(&mr, &robust, None, &sc, pairs, 9)?;
        let b = run_relation(&mr, &fragile, None, &sc, pairs, 9)?;
        println!(
            "{:<22} {:?}  violations v1 {}/{}  v2 {}/{}",
            rel.as_str(),
            a.family,
            a.stats.violations,
            a.stats.pairs_checked,
            b.stats.violations,
            b.stats.pairs_checked
        );
        stats.push((rel, a.stats, b.stats));
    }
    for (rel, a, b) in &stats {
        let r = mr_regression(a, b, 0.05, 0.10, 0.10)?;
        println!("{:<22} violation-rate regression: p {:.4} -> {}", rel.as_str(), r.p_value, r.verdict);
    }

    // tool order needs a second runner whose tool inventory is permuted
    let permuted = permute_tool_order(&robust, 5)?;
    println!("permuted tools: {:?}", permuted.agent.tool_names());
    let mr = MetamorphicRelation::new(RelationId::ToolOrderInvariance);
    let t = run_relation(&mr, &robust, Some(&permuted as &dyn Runner), &sc, pairs, 9)?;
    println!("tool_order_invariance  violations {}/{}", t.stats.violations, t.stats.pairs_checked);
    Ok(())
}
