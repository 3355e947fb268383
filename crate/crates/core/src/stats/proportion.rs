use serde::{Deserialize, Serialize};

use super::special::{ln_gamma, normal_sf};
use crate::error::{invalid, Result};

/// Combined sample size at or above which the Z-test replaces Fisher's exact test.
pub const Z_TEST_MIN_TOTAL: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// H1: current rate below baseline.
    #[default]
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProportionMethod {
    ZTest,
    FisherExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionTest {
    pub p_value: f64,
    pub method: ProportionMethod,
    /// Pooled data all-pass or all-fail; carries no evidence.
    pub degenerate: bool,
}

/// Compare baseline `k_b/n_b` with current `k_c/n_c`.
pub fn two_proportion_test(k_b: usize, n_b: usize, k_c: usize, n_c: usize, sidedness: Sidedness) -> Result<ProportionTest> {
    if n_b == 0 || n_c == 0 {
        return invalid("two-proportion test needs both samples non-empty");
    }
    if k_b > n_b || k_c > n_c {
        return invalid("success count exceeds trial count");
    }
    let total = n_b + n_c;
    let method = if total >= Z_TEST_MIN_TOTAL {
        ProportionMethod::ZTest
    } else {
        ProportionMethod::FisherExact
    };
    let pooled_k = k_b + k_c;
    if pooled_k == 0 || pooled_k == total {
        return Ok(ProportionTest {
            p_value: 1.0,
            method,
            degenerate: true,
        });
    }
    let p_value = match method {
        ProportionMethod::ZTest => z_test(k_b, n_b, k_c, n_c, sidedness),
        ProportionMethod::FisherExact => fisher_exact(k_b, n_b, k_c, n_c, sidedness),
    };
    Ok(ProportionTest {
        p_value: p_value.clamp(0.0, 1.0),
        method,
        degenerate: false,
    })
}

fn z_test(k_b: usize, n_b: usize, k_c: usize, n_c: usize, sidedness: Sidedness) -> f64 {
    let (nb, nc) = (n_b as f64, n_c as f64);
    let pooled = (k_b + k_c) as f64 / (nb + nc);
    let se = (pooled * (1.0 - pooled) * (1.0 / nb + 1.0 / nc)).sqrt();
    let stat = (k_b as f64 / nb - k_c as f64 / nc) / se;
    match sidedness {
        Sidedness::Less => normal_sf(stat),
        Sidedness::TwoSided => (2.0 * normal_sf(stat.abs())).min(1.0),
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Fisher's exact test conditioning on both margins.
///
/// Under H0 the current-sample success count is hypergeometric; the one-sided
/// p-value is its lower tail at the observed count.
pub fn fisher_exact(k_b: usize, n_b: usize, k_c: usize, n_c: usize, sidedness: Sidedness) -> f64 {
    let total = n_b + n_c;
    let succ = k_b + k_c;
    let lo = succ.saturating_sub(n_b);
    let hi = succ.min(n_c);
    let denom = ln_choose(total, n_c);
    let prob = |x: usize| (ln_choose(succ, x) + ln_choose(total - succ, n_c - x) - denom).exp();
    match sidedness {
        Sidedness::Less => (lo..=k_c).map(prob).sum(),
        Sidedness::TwoSided => {
            let observed = prob(k_c) * (1.0 + 1e-7);
            (lo..=hi).map(prob).filter(|&p| p <= observed).sum::<f64>().min(1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choose(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    // Direct hypergeometric enumeration with product-form binomials.
    fn hypergeom_lower_tail(k_b: u64, n_b: u64, k_c: u64, n_c: u64) -> f64 {
        let s = k_b + k_c;
        let denom = choose(n_b + n_c, s);
        (0..=k_c)
            .filter(|&x| s - x <= n_b)
            .map(|x| choose(n_c, x) * choose(n_b, s - x) / denom)
            .sum()
    }

    #[test]
    fn identical_samples() {
        let t = two_proportion_test(45, 50, 45, 50, Sidedness::Less).unwrap();
        assert_eq!(t.method, ProportionMethod::ZTest);
        assert!((t.p_value - 0.5).abs() < 1e-12);
        let t = two_proportion_test(45, 50, 45, 50, Sidedness::TwoSided).unwrap();
        assert!((t.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn maximal_separation() {
        let t = two_proportion_test(50, 50, 0, 50, Sidedness::Less).unwrap();
        assert!(t.p_value < 1e-10, "{}", t.p_value);
    }

    #[test]
    fn z_test_against_fisher_oracle() {
        let t = two_proportion_test(45, 50, 30, 50, Sidedness::Less).unwrap();
        let oracle = hypergeom_lower_tail(45, 50, 30, 50);
        assert!((oracle - 4.834e-4).abs() < 1e-6, "{oracle}");
        // The normal approximation underestimates this tail (2.66e-4 vs 4.83e-4);
        // agreement is judged on the absolute scale and on the decision at alpha.
        assert!((t.p_value - oracle).abs() < 0.10);
        assert_eq!(t.p_value < 0.05, oracle < 0.05);
        assert!((fisher_exact(45, 50, 30, 50, Sidedness::Less) - oracle).abs() < 1e-12);
    }

    #[test]
    fn small_samples_use_fisher() {
        let t = two_proportion_test(9, 10, 7, 10, Sidedness::Less).unwrap();
        assert_eq!(t.method, ProportionMethod::FisherExact);
        assert!((t.p_value - hypergeom_lower_tail(9, 10, 7, 10)).abs() < 1e-12);
        assert!((t.p_value - 0.2910).abs() < 1e-3);
    }

    #[test]
    fn degenerate_pooled_data() {
        let t = two_proportion_test(0, 30, 0, 30, Sidedness::Less).unwrap();
        assert!(t.degenerate);
        assert_eq!(t.p_value, 1.0);
        let t = two_proportion_test(5, 5, 5, 5, Sidedness::TwoSided).unwrap();
        assert!(t.degenerate);
    }

    #[test]
    fn two_sided_fisher_is_symmetric() {
        let a = fisher_exact(8, 12, 3, 12, Sidedness::TwoSided);
        let b = fisher_exact(3, 12, 8, 12, Sidedness::TwoSided);
        assert!((a - b).abs() < 1e-12);
        assert!(a > fisher_exact(8, 12, 3, 12, Sidedness::Less));
    }
}
