//! The deployment gate over a mixed suite: a healthy candidate deploys, a
//! regressed one is blocked, and a replay from the stored traces reproduces the
//! first decision without running the agent.

use stochtest::gate::report::{emit_reports, to_junit_xml, ReportDestinations};
use stochtest::gate::{run_gate, GateConfig, GateDecision, GateInputs};
use stochtest::simkit::SimAgentSpec;
use stochtest::traces::{AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ScenarioKind, ToolParam, ToolSpec, TraceStore};

fn agent(version: &str, p: f64) -> SimAgentSpec {
    let mut search = ToolSpec::named("search");
    search.parameters.push(ToolParam {
        name: "limit".into(),
        min: 1.0,
        max: 10.0,
        discrete: true,
    });
    let cfg = AgentConfig {
        version_id: version.into(),
        prompt: "Route the ticket\nAnswer briefly".into(),
        tools: vec![search, ToolSpec::named("lookup")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let mut s = SimAgentSpec::new(cfg, p);
    s.boundary_rate = 0.3;
    s
}

fn suite() -> stochtest::Result<Vec<Scenario>> {
    let billing = |id: &str, input: &str| -> stochtest::Result<Scenario> {
        Ok(Scenario::new(id, input, Evaluator::keyword("billing")?).with_property("expected_department", "billing"))
    };
    Ok(vec![
        billing("payment_coverage", "My payment failed")?.with_kind(ScenarioKind::Coverage),
        billing("payment_docs", "My payment failed\n\nIt was a card payment\n\nPlease help")?
            .with_kind(ScenarioKind::Metamorphic)
            .with_property("relation", "doc_order_invariance"),
        billing("refund", "Refund my order")?,
        billing("double_charge", "I was charged twice")?,
    ])
}

fn gate(store: &TraceStore, base: &SimAgentSpec, cand: Option<&SimAgentSpec>, version: &str) -> stochtest::Result<GateDecision> {
    let suite = suite()?;
    run_gate(
        GateInputs {
            campaign: "ticket_routing",
            suite: &suite,
            store,
            baseline_version: base.version_id(),
            candidate_version: version,
            baseline: Some(base),
            candidate: cand.map(|c| c as &dyn Runner),
            coverage: None,
        },
        &GateConfig {
            n_max: 100,
            theta: 0.85,
            coverage_min: 0.3,
            ..GateConfig::default()
        },
        2024,
    )
}

fn main() -> stochtest::Result<()> {
    let store = TraceStore::in_memory();
    let base = agent("v1", 0.95);

    let healthy = gate(&store, &base, Some(&agent("v2", 0.95)), "v2")?;
    let dir = std::env::temp_dir().join(format!("stochtest-gate-{}", std::process::id()));
    let (terminal, written) = emit_reports(
        &healthy,
        &ReportDestinations {
            report_dir: Some(dir.clone()),
            xml: None,
        },
    );
    println!("{terminal}");
    for p in written? {
        println!("wrote {}", p.display());
    }

    let regressed = gate(&store, &base, Some(&agent("v3", 0.7)), "v3")?;
    println!("\nregressed candidate: {} (exit {})", regressed.decision.as_str(), regressed.exit_code(false));
    for s in &regressed.scenarios {
        println!("  {:<18} {}", s.scenario_id, s.verdict);
    }
    let xml = to_junit_xml(&regressed);
    println!("junit xml: {} bytes, {} failures", xml.len(), xml.matches("<failure").count());

    let replay = gate(&store, &base, None, "v2")?;
    println!(
        "\nreplay of v2: {} with {} live trials (live run: {})",
        replay.decision.as_str(),
        replay.reduction.live_trials,
        healthy.decision.as_str()
    );
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
