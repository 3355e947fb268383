//! Confidence intervals and three-valued threshold verdicts.
//!
//!     cargo run --example intervals

use stochtest::stats::{confidence_interval, required_n_threshold, threshold_verdict, IntervalMethod, TrialOutcomes};

fn main() -> stochtest::Result<()> {
    let theta = 0.85;
    println!("threshold {theta}, alpha 0.05");
    for (k, n) in [(45, 50), (90, 100), (180, 200), (20, 40)] {
        let r = threshold_verdict(&TrialOutcomes::from_counts(k, n), theta, 0.05)?;
        let cp = confidence_interval(k, n, 0.05, IntervalMethod::ClopperPearson)?;
        println!(
            "{k:>4}/{n:<4} wilson [{:.3}, {:.3}]  clopper-pearson [{:.3}, {:.3}]  -> {}",
            r.interval.lower, r.interval.upper, cp.lower, cp.upper, r.verdict
        );
    }
    // trials needed to pin a 90% agent within +/-0.05
    println!("trials for half-width 0.05 at p=0.9: {}", required_n_threshold(0.9, 0.05, 0.05, 0.10)?);
    Ok(())
}
