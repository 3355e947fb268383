use super::Verdict;
use crate::error::{invalid, Result};

/// Holm step-down rejections, aligned with the input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut reject = vec![false; m];
    for (rank, &idx) in order.iter().enumerate() {
        if p_values[idx] <= alpha / (m - rank) as f64 {
            reject[idx] = true;
        } else {
            break;
        }
    }
    reject
}

/// Holm-adjusted p-values; `adjusted[i] <= alpha` iff `holm_bonferroni` rejects `i`.
pub fn holm_adjusted(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p_values[i].total_cmp(&p_values[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0_f64;
    for (rank, &idx) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[idx]).min(1.0));
        adjusted[idx] = running;
    }
    adjusted
}

/// FAIL dominates, then INCONCLUSIVE.
pub fn suite_verdict(verdicts: &[Verdict]) -> Result<Verdict> {
    if verdicts.is_empty() {
        return invalid("suite verdict needs at least one verdict");
    }
    Ok(if verdicts.contains(&Verdict::Fail) {
        Verdict::Fail
    } else if verdicts.contains(&Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Verdict::*;

    #[test]
    fn holm_examples() {
        assert_eq!(holm_bonferroni(&[0.01, 0.02, 0.04], 0.05), vec![true, true, true]);
        assert_eq!(holm_bonferroni(&[0.04, 0.01, 0.02], 0.05), vec![true, true, true]);
        assert_eq!(holm_bonferroni(&[1.0, 1.0], 0.05), vec![false, false]);
        assert!(holm_bonferroni(&[], 0.05).is_empty());
        // 0.03 > 0.05/2 stops the procedure before 0.04
        assert_eq!(holm_bonferroni(&[0.01, 0.03, 0.04], 0.05), vec![true, false, false]);
    }

    #[test]
    fn suite_examples() {
        assert_eq!(suite_verdict(&[Pass, Pass]).unwrap(), Pass);
        assert_eq!(suite_verdict(&[Pass, Fail, Inconclusive]).unwrap(), Fail);
        assert_eq!(suite_verdict(&[Pass, Inconclusive]).unwrap(), Inconclusive);
        assert!(suite_verdict(&[]).is_err());
    }

    fn verdict() -> impl Strategy<Value = Verdict> {
        prop_oneof![Just(Pass), Just(Fail), Just(Inconclusive)]
    }

    proptest! {
        #[test]
        fn adjusted_agrees_with_flags(ps in proptest::collection::vec(0.0f64..=1.0, 0..12), alpha in 0.001f64..0.2) {
            let flags = holm_bonferroni(&ps, alpha);
            let adj = holm_adjusted(&ps);
            for (f, a) in flags.iter().zip(&adj) {
                prop_assert_eq!(*f, *a <= alpha);
            }
        }

        #[test]
        fn suite_idempotent_under_pass_concat(vs in proptest::collection::vec(verdict(), 1..10), k in 0usize..5) {
            let mut ext = vs.clone();
            ext.extend(std::iter::repeat_n(Pass, k));
            prop_assert_eq!(suite_verdict(&vs).unwrap(), suite_verdict(&ext).unwrap());
        }
    }
}
