//! Five-dimensional coverage over a batch of traces, with the Chao1 estimate
//! of how many decision paths remain unseen and the next scenario to target.

use stochtest::coverage::{coverage_tuple, dimension_tag, select_next_scenario, weakest_dimension, CoverageContext, CoverageTuple, Dimension};
use stochtest::simkit::SimAgentSpec;
use stochtest::traces::{trial_seed, AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ToolParam, ToolSpec};

fn main() -> stochtest::Result<()> {
    let mut search = ToolSpec::named("search");
    search.parameters.push(ToolParam {
        name: "limit".into(),
        min: 1.0,
        max: 10.0,
        discrete: true,
    });
    let tools = vec![search, ToolSpec::named("lookup"), ToolSpec::named("escalate"), ToolSpec::named("refund")];
    let cfg = AgentConfig {
        version_id: "v1".into(),
        prompt: "Route the ticket".into(),
        tools: tools.clone(),
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let mut agent = SimAgentSpec::new(cfg, 0.9);
    agent.tool_mix = vec![0.6, 0.3, 0.1, 0.0];
    agent.boundary_rate = 0.2;
    let sc = Scenario::new("payment", "My payment failed", Evaluator::keyword("billing")?);

    let ctx = CoverageContext::from_tools(&tools).with_models(&["sim-large", "sim-small"], &["sim-large"]);
    for n in [10, 50, 200] {
        let traces: Vec<_> = (0..n).map(|i| agent.run(&sc, trial_seed(1, "v1", "payment", i))).collect::<stochtest::Result<_>>()?;
        let r = coverage_tuple(&traces, &ctx)?;
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        let t = r.tuple;
        println!(
            "n={n:>3}  tool {}  path {}  state {}  boundary {}  model {}  overall {:.2}",
            fmt(t.tool),
            fmt(t.path),
            fmt(t.state),
            fmt(t.boundary),
            fmt(t.model),
            r.overall
        );
        if let Some(p) = &r.path_stats {
            println!("        {} distinct paths, chao1 estimate {:.1}", p.distinct, p.chao1);
        }
        if n == 200 {
            println!("tools used: {:?}", r.tools_used);
            println!("boundaries hit: {:?}", r.boundaries_tested);
            let target = CoverageTuple::full();
            let weakest = weakest_dimension(&t, &target);
            println!("weakest dimension: {:?}", weakest.map(Dimension::as_str));
            let pool = vec![
                Scenario::new("refund_flow", "I want a refund", Evaluator::keyword("billing")?).with_tag(dimension_tag(Dimension::Tool)),
                Scenario::new("edge_limits", "Show 10 results", Evaluator::keyword("billing")?).with_tag(dimension_tag(Dimension::Boundary)),
                Scenario::new("long_dialogue", "Several follow-up questions", Evaluator::keyword("billing")?).with_tag(dimension_tag(Dimension::State)),
                Scenario::new("other_model", "Route on the small model", Evaluator::keyword("billing")?).with_tag(dimension_tag(Dimension::Model)),
            ];
            println!("next scenario: {:?}", select_next_scenario(&t, &target, &pool).map(|s| &s.scenario_id));
        }
    }
    Ok(())
}
