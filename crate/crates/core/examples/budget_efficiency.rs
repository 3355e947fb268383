//! Sizing and cost: a short calibration run fixes the trial budget, a cheap
//! proxy model stretches it, and the per-technique savings multiply.

use stochtest::efficiency::{
    calibrate_budget, combine_evidence, combined_reduction, estimate_rho, mf_cost_ratio, optimal_allocation, CalibrationConfig, CombineMethod, FidelityPair,
    ReductionFactors,
};
use stochtest::fingerprint::{extract_fingerprint, FingerprintScale, ToolSlots};
use stochtest::simkit::SimAgentSpec;
use stochtest::traces::{AgentConfig, Evaluator, ModelDescriptor, Runner, Scenario, ToolSpec};

fn agent(version: &str, tool_call_rate: f64, error_rate: f64) -> SimAgentSpec {
    let cfg = AgentConfig {
        version_id: version.into(),
        prompt: "Route the ticket".into(),
        tools: vec![ToolSpec::named("search"), ToolSpec::named("lookup"), ToolSpec::named("escalate")],
        model: ModelDescriptor::default(),
        orchestration: "react".into(),
        context: Default::default(),
    };
    let mut s = SimAgentSpec::new(cfg, 0.9);
    s.tool_call_rate = tool_call_rate;
    s.error_rate = error_rate;
    s
}

fn main() -> stochtest::Result<()> {
    let sc = Scenario::new("payment", "My payment failed", Evaluator::keyword("billing")?).with_property("expected_department", "billing");

    println!("calibration (k = 20, smallest shift of interest 0.25)");
    for (label, spec) in [("steady", agent("steady", 0.05, 0.0)), ("erratic", agent("erratic", 0.6, 0.3))] {
        let cal = calibrate_budget(&spec, &sc, &CalibrationConfig {
                k: 20,
                mahalanobis_min: 0.25,
                seed: 1,
                ..CalibrationConfig::default()
            })?;
        let e = &cal.estimate;
        println!(
            "  {label:<8} sigma2 {:.4} ({})  d_eff {}  raw n {}  budget n* {}  margin x{:.2}",
            e.sigma2_fp,
            e.variance_class.as_str(),
            e.d_eff,
            e.n_raw,
            e.n_star,
            e.safety_factor
        );
    }

    // the proxy sees the same seeds, so paired fingerprints correlate
    let target = agent("target", 0.5, 0.05);
    let proxy = agent("proxy", 0.35, 0.2);
    let slots = ToolSlots::from_inventory(&target.agent.tool_names());
    let scale = FingerprintScale::default();
    let rows = |spec: &SimAgentSpec| -> stochtest::Result<Vec<Vec<f64>>> {
        (0..60).map(|i| Ok(scale.normalize(&extract_fingerprint(&spec.run(&sc, 1000 + i)?, &slots)?))).collect()
    };
    let rho = estimate_rho(&rows(&target)?, &rows(&proxy)?)?;
    println!("\nestimated target/proxy correlation: {rho:.2}");

    for rho in [0.5, 0.8, 0.95] {
        let pair = FidelityPair {
            cost_expensive: 1.0,
            cost_cheap: 0.05,
            rho,
            sigma_e: 1.0,
            sigma_c: 1.0,
        };
        let plan = optimal_allocation(&pair, 100)?;
        println!(
            "  rho {rho:.2}: {} expensive + {} cheap  effective {:.1}  cost {:.1} vs 100  (cost ratio {:.3}){}",
            plan.n_e,
            plan.n_c,
            plan.effective_n,
            plan.total_cost,
            mf_cost_ratio(rho, 0.05)?,
            if plan.fallback { "  fallback" } else { "" }
        );
    }

    // the weighted Fisher form is referred to four degrees of freedom and runs conservative
    for method in [CombineMethod::Stouffer, CombineMethod::Fisher] {
        let c = combine_evidence(0.08, 0.02, 0.8, method)?;
        println!("combined p ({method:?}) from 0.08 and 0.02: {:.4}", c.p_value);
    }

    let factors = ReductionFactors {
        fingerprint: 0.5,
        budget: 0.7,
        trace_first: 0.6,
        multi_fidelity: 0.45,
        warm_start: 0.67,
    };
    println!("combined cost factor: {:.3}", combined_reduction(&factors)?);
    Ok(())
}
