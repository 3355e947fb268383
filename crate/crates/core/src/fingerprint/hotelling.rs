use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::pca::{covariance, pca_project, to_matrix};
use crate::error::{check_probability, invalid, Error, Result};
use crate::stats::special::f_sf;

/// Relative ridge added to the pooled covariance diagonal.
pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub t2: f64,
    pub f_statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    pub d_eff_used: usize,
    pub mahalanobis: f64,
    pub rejected: bool,
}

/// Two-sample Hotelling T² on the top-`d_eff` pooled principal components.
pub fn hotelling_test(baseline: &[Vec<f64>], candidate: &[Vec<f64>], alpha: f64) -> Result<HotellingResult> {
    hotelling_test_with(baseline, candidate, alpha, None)
}

/// As [`hotelling_test`], optionally forcing the number of components.
pub fn hotelling_test_with(
    baseline: &[Vec<f64>],
    candidate: &[Vec<f64>],
    alpha: f64,
    d_eff: Option<usize>,
) -> Result<HotellingResult> {
    check_probability("alpha", alpha)?;
    let (nb, nc) = (baseline.len(), candidate.len());
    if nb < 2 || nc < 2 {
        return Err(Error::InsufficientData {
            what: "fingerprints per side for Hotelling's test".into(),
            needed: 2,
            available: nb.min(nc),
        });
    }
    let pooled: Vec<Vec<f64>> = baseline.iter().chain(candidate).cloned().collect();
    let pca = pca_project(&pooled)?;
    let dim = pca.basis.len();
    let k = match d_eff {
        Some(k) if k > dim => return invalid(format!("d_eff {k} exceeds dimension {dim}")),
        Some(k) => k,
        None => pca.d_eff,
    };
    let n = nb + nc;
    if k == 0 {
        return Ok(HotellingResult {
            t2: 0.0,
            f_statistic: 0.0,
            df1: 0,
            df2: n.saturating_sub(1),
            p_value: 1.0,
            d_eff_used: 0,
            mahalanobis: 0.0,
            rejected: false,
        });
    }
    if n < k + 3 {
        return Err(Error::InsufficientData {
            what: format!("fingerprints for Hotelling's test at d_eff = {k}"),
            needed: k + 3,
            available: n,
        });
    }
    let project = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> { rows.iter().map(|r| pca.project(r, k)).collect() };
    let yb = to_matrix(&project(baseline))?;
    let yc = to_matrix(&project(candidate))?;
    let (d2, _) = pooled_distance(&yb, &yc)?;
    let t2 = (nb * nc) as f64 / n as f64 * d2;
    let df1 = k;
    let df2 = n - k - 1;
    let f_statistic = (n - k - 1) as f64 / ((n - 2) * k) as f64 * t2;
    let p_value = f_sf(f_statistic, df1 as f64, df2 as f64).clamp(0.0, 1.0);
    Ok(HotellingResult {
        t2,
        f_statistic,
        df1,
        df2,
        p_value,
        d_eff_used: k,
        mahalanobis: d2.sqrt(),
        rejected: p_value < alpha,
    })
}

/// Squared Mahalanobis distance of the means under the ridged pooled covariance.
fn pooled_distance(xb: &DMatrix<f64>, xc: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let (nb, nc) = (xb.nrows() as f64, xc.nrows() as f64);
    let (mb, sb) = covariance(xb);
    let (mc, sc) = covariance(xc);
    let mut s = (sb * (nb - 1.0) + sc * (nc - 1.0)) / (nb + nc - 2.0);
    let k = s.nrows();
    let ridge = RIDGE * s.trace() / k as f64;
    // an all-zero covariance still needs an invertible matrix
    let ridge = if ridge > 0.0 { ridge } else { 1e-12 };
    for i in 0..k {
        s[(i, i)] += ridge;
    }
    let diff: DVector<f64> = mb - mc;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidState("pooled covariance is not positive definite".into()))?;
    let sol = chol.solve(&diff);
    Ok((diff.dot(&sol).max(0.0), s))
}

/// Mahalanobis distance between sample means in the full space.
pub fn mahalanobis(baseline: &[Vec<f64>], candidate: &[Vec<f64>]) -> Result<f64> {
    if baseline.len() < 2 || candidate.len() < 2 {
        return Err(Error::InsufficientData {
            what: "samples per side for a Mahalanobis distance".into(),
            needed: 2,
            available: baseline.len().min(candidate.len()),
        });
    }
    let (d2, _) = pooled_distance(&to_matrix(baseline)?, &to_matrix(candidate)?)?;
    Ok(d2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, dim: usize, shift: &[f64]) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(rng);
                        z + shift.get(j).copied().unwrap_or(0.0)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gaussian(&mut rng, 20, 4, &[]);
        let r = hotelling_test(&a, &a, 0.05).unwrap();
        assert!(r.t2.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(!r.rejected);
    }

    #[test]
    fn t2_matches_direct_formula_in_two_dims() {
        // hand-rolled 2x2 inverse as the oracle
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![3.0, 4.0], vec![4.0, 2.5]];
        let b = vec![vec![2.0, 3.0], vec![4.0, 4.0], vec![5.0, 3.5], vec![3.0, 5.0]];
        let r = hotelling_test_with(&a, &b, 0.05, Some(2)).unwrap();
        let mean = |s: &Vec<Vec<f64>>, j: usize| s.iter().map(|r| r[j]).sum::<f64>() / s.len() as f64;
        let cov = |s: &Vec<Vec<f64>>, i: usize, j: usize| {
            let (mi, mj) = (mean(s, i), mean(s, j));
            s.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>()
        };
        let sp = |i, j| (cov(&a, i, j) + cov(&b, i, j)) / 6.0;
        let (s00, s01, s11) = (sp(0, 0), sp(0, 1), sp(1, 1));
        let det = s00 * s11 - s01 * s01;
        let (d0, d1) = (mean(&a, 0) - mean(&b, 0), mean(&a, 1) - mean(&b, 1));
        let q = (s11 * d0 * d0 - 2.0 * s01 * d0 * d1 + s00 * d1 * d1) / det;
        let t2 = 4.0 * 4.0 / 8.0 * q;
        assert!((r.t2 - t2).abs() / t2 < 1e-5, "{} vs {t2}", r.t2);
        assert!((r.f_statistic - 5.0 / 12.0 * t2).abs() / t2 < 1e-5);
        assert_eq!((r.df1, r.df2), (2, 5));
    }

    #[test]
    fn mean_shift_is_detected() {
        let mut hits = 0;
        let reps = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..reps {
            let a = gaussian(&mut rng, 30, 5, &[]);
            let b = gaussian(&mut rng, 30, 5, &[3.0]);
            if hotelling_test(&a, &b, 0.05).unwrap().rejected {
                hits += 1;
            }
        }
        assert!(hits as f64 / reps as f64 >= 0.95, "{hits}");
    }

    #[test]
    fn type_one_error() {
        let mut rej = 0;
        let reps = 1000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..reps {
            let a = gaussian(&mut rng, 30, 5, &[]);
            let b = gaussian(&mut rng, 30, 5, &[]);
            if hotelling_test_with(&a, &b, 0.05, Some(5)).unwrap().rejected {
                rej += 1;
            }
        }
        assert!(rej as f64 / reps as f64 <= 0.05 + 0.02, "{rej}");
    }

    #[test]
    fn invariant_under_linear_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = gaussian(&mut rng, 25, 3, &[]);
        let b = gaussian(&mut rng, 25, 3, &[0.7, -0.2]);
        let m = [[2.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 3.0]];
        let shift: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let map = |rows: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| (0..3).map(|i| (0..3).map(|j| m[i][j] * r[j]).sum::<f64>() + shift[i]).collect())
                .collect()
        };
        let p1 = hotelling_test_with(&a, &b, 0.05, Some(3)).unwrap().p_value;
        let p2 = hotelling_test_with(&map(&a), &map(&b), 0.05, Some(3)).unwrap().p_value;
        assert!((p1 - p2).abs() < 1e-6, "{p1} vs {p2}");
    }

    #[test]
    fn insufficient_samples() {
        let a = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0]];
        let b = vec![vec![0.5, 1.0, 0.0], vec![1.0, 1.0, 1.0]];
        assert!(matches!(
            hotelling_test_with(&a, &b, 0.05, Some(3)),
            Err(Error::InsufficientData { needed: 6, .. })
        ));
    }
}
