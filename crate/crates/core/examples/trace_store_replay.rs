//! Traces are written once to an append-only JSONL store and replayed later:
//! re-scoring with a new evaluator costs no agent calls.

use stochtest::simkit::SimAgentSpec;
use stochtest::traces::{replay_outcomes, trial_seed, AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ToolSpec, TraceStore};

fn main() -> stochtest::Result<()> {
    let cfg = AgentConfig {
        version_id: "v1".into(),
        prompt: "Route the ticket".into(),
        tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let agent = SimAgentSpec::new(cfg, 0.9);
    let sc = Scenario::new("payment", "My payment failed", Evaluator::keyword("billing")?).with_property("expected_department", "billing");

    let dir = std::env::temp_dir().join(format!("stochtest-example-{}", std::process::id()));
    let path = dir.join("traces.jsonl");
    {
        let store = TraceStore::open(&path)?;
        for i in 0..25 {
            let t = agent.run(&sc, trial_seed(11, "v1", &sc.scenario_id, i))?;
            store.append_trace("v1", &sc.scenario_id, &sc.input, t)?;
        }
    }
    let store = TraceStore::open(&path)?;
    println!("{} records in {}", store.len(), path.display());
    let first = &store.all()[0];
    println!("record {}: {} steps, output {:?}", first.record_id, first.trace.steps.len(), first.trace.final_output);

    let replay = replay_outcomes(&store, "v1", &sc)?;
    let passes = replay.outcomes.iter().filter(|&&b| b).count();
    println!("replayed keyword evaluator: {passes}/{}", replay.outcomes.len());

    // a length contract over the same stored traces
    let strict = Scenario::new("payment", "My payment failed", Evaluator::contract("words_max(3)")?);
    let again = replay_outcomes(&store, "v1", &strict)?;
    println!("replayed length contract: {}/{}", again.outcomes.iter().filter(|&&b| b).count(), again.outcomes.len());
    println!("store size unchanged: {}", store.len());

    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
