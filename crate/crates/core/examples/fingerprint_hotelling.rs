//! Behavioral fingerprints: a candidate that keeps its pass rate but shifts
//! which tools it calls is invisible to a pass/fail test and obvious to a
//! multivariate one.

use stochtest::fingerprint::{extract_fingerprint, fingerprint_sample_size, hotelling_test, pca_project, FingerprintScale, ToolSlots};
use stochtest::simkit::SimAgentSpec;
use stochtest::stats::{two_proportion_test, Sidedness};
use stochtest::traces::{trial_seed, AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ToolSpec};

fn agent(version: &str, mix: Vec<f64>) -> SimAgentSpec {
    let cfg = AgentConfig {
        version_id: version.into(),
        prompt: "Route the ticket".into(),
        tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup"), ToolSpec::named("escalate")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let mut s = SimAgentSpec::new(cfg, 1.0);
    s.tool_mix = mix;
    s
}

fn main() -> stochtest::Result<()> {
    let base = agent("v1", vec![0.72, 0.14, 0.14]);
    let cand = agent("v2", vec![0.14, 0.14, 0.72]);
    let sc = Scenario::new("refund", "Please refund my order", Evaluator::keyword("billing")?).with_property("expected_department", "billing");

    let slots = ToolSlots::from_inventory(&base.agent.tool_names());
    let scale = FingerprintScale::default();
    let n = 40;
    let sample = |spec: &SimAgentSpec| -> stochtest::Result<(Vec<Vec<f64>>, usize)> {
        let mut rows = Vec::new();
        let mut passes = 0;
        for i in 0..n {
            let t = spec.run(&sc, trial_seed(3, spec.version_id(), &sc.scenario_id, i))?;
            passes += sc.evaluate(&t) as usize;
            rows.push(scale.normalize(&extract_fingerprint(&t, &slots)?));
        }
        Ok((rows, passes))
    };
    let (a, pa) = sample(&base)?;
    let (b, pb) = sample(&cand)?;
    println!("fingerprint dimension: {}", a[0].len());

    let uni = two_proportion_test(pa, n, pb, n, Sidedness::Less)?;
    println!("pass rates {pa}/{n} vs {pb}/{n}: one-sided p = {:.3}", uni.p_value);

    let pooled: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
    let pca = pca_project(&pooled)?;
    println!("effective dimension d_eff = {} ({:.0}% of variance)", pca.d_eff, 100.0 * pca.explained_ratio(pca.d_eff));

    let h = hotelling_test(&a, &b, 0.05)?;
    println!(
        "hotelling T2 {:.1}  F({}, {}) = {:.2}  p = {:.2e}  mahalanobis {:.2}  rejected {}",
        h.t2, h.df1, h.df2, h.f_statistic, h.p_value, h.mahalanobis, h.rejected
    );
    let same = hotelling_test(&a, &sample(&agent("v1b", vec![0.72, 0.14, 0.14]))?.0, 0.05)?;
    println!("same behaviour: p = {:.3}  rejected {}", same.p_value, same.rejected);

    for d in [1.0, 0.5, 0.25] {
        println!("trials per side for mahalanobis {d}: {}", fingerprint_sample_size(0.05, 0.10, h.d_eff_used.max(1), d)?);
    }
    Ok(())
}
