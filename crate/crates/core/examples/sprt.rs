//! Sequential testing: boundaries, expected sample sizes, early stopping and
//! a warm start from earlier results.
//!
//!     cargo run --example sprt

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stochtest::sequential::{run_sprt, sprt_expected_n, Hypothesis, SprtConfig, WarmStartPrior};

fn main() -> stochtest::Result<()> {
    let cfg = SprtConfig::new(0.9, 0.1, 0.05, 0.10, Some(200))?;
    let b = cfg.boundaries();
    println!("boundaries a {:.4}  b {:.4}", b.a, b.b);
    println!(
        "expected trials: {:.1} at p=0.9, {:.1} at p=0.8",
        sprt_expected_n(&cfg, Hypothesis::H0)?,
        sprt_expected_n(&cfg, Hypothesis::H1)?
    );

    let clean = run_sprt(|| Some(true), &cfg, None)?;
    println!("all-success stream: {} after {} trials", clean.verdict, clean.trials_used);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in [0.95, 0.85, 0.7] {
        let run = run_sprt(|| Some(rng.random::<f64>() < p), &cfg, None)?;
        println!("true p {p}: {} after {} trials (llr {:.3})", run.verdict, run.trials_used, run.final_llr);
    }

    // 18 of 20 earlier trials passed: start partway toward acceptance
    let prior = WarmStartPrior::new(18, 20, &cfg)?;
    let (mut cold, mut warm) = (0, 0);
    for seed in 0..500 {
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        cold += run_sprt(|| Some(r1.random::<f64>() < 0.95), &cfg, None)?.trials_used;
        warm += run_sprt(|| Some(r2.random::<f64>() < 0.95), &cfg, Some(&prior))?.trials_used;
    }
    println!(
        "warm start offset {:.3}: mean trials {:.1} cold vs {:.1} warm",
        prior.lambda0,
        cold as f64 / 500.0,
        warm as f64 / 500.0
    );
    Ok(())
}
