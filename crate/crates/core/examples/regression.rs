//! Two-version regression test with effect sizes, Holm correction and the
//! Bayesian alternative.
//!
//!     cargo run --example regression

use stochtest::stats::{
    bayesian_regression, holm_adjusted, regression_verdict, required_n_regression, suite_verdict, BayesianPosterior, TrialOutcomes,
    DEFAULT_DRAWS,
};

fn main() -> stochtest::Result<()> {
    let n = required_n_regression(0.9, 0.8, 0.1, 0.05, 0.10)?;
    println!("trials per side to detect a 0.10 drop from 0.90: {n}");

    let cases = [("checkout", 190, 200, 150, 200), ("search", 180, 200, 178, 200), ("login", 9, 10, 8, 10)];
    let mut p_values = Vec::new();
    let mut verdicts = Vec::new();
    for (name, kb, nb, kc, nc) in cases {
        let r = regression_verdict(&TrialOutcomes::from_counts(kb, nb), &TrialOutcomes::from_counts(kc, nc), 0.05, 0.10, 0.10)?;
        println!(
            "{name:<9} {kb}/{nb} -> {kc}/{nc}  drop {:+.3}  h {:.3}  p {:.4} ({:?})  power {:.2}  {}",
            r.effects.absolute_diff, r.effects.cohens_h, r.p_value, r.method, r.achieved_power, r.verdict
        );
        p_values.push(r.p_value);
        verdicts.push(r.verdict);
    }
    println!("holm-adjusted p: {:?}", holm_adjusted(&p_values).iter().map(|p| format!("{p:.4}")).collect::<Vec<_>>());
    println!("suite verdict: {}", suite_verdict(&verdicts)?);

    let prior = (1.0, 1.0);
    let b = BayesianPosterior::update(prior.0, prior.1, &TrialOutcomes::from_counts(190, 200));
    let c = BayesianPosterior::update(prior.0, prior.1, &TrialOutcomes::from_counts(150, 200));
    println!("posterior means {:.3} -> {:.3}", b.mean(), c.mean());
    let bayes = bayesian_regression(
        &TrialOutcomes::from_counts(190, 200),
        &TrialOutcomes::from_counts(150, 200),
        prior,
        0.10,
        0.05,
        0.10,
        DEFAULT_DRAWS,
        7,
    )?;
    println!("bayesian: P(drop > 0.10) = {:.3} -> {}", bayes.p_regression, bayes.verdict);
    Ok(())
}
