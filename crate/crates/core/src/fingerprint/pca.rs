use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Cumulative explained-variance share that defines `d_eff`.
pub const VARIANCE_TARGET: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub mean: Vec<f64>,
    /// Orthonormal component rows, by descending eigenvalue.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub d_eff: usize,
}

impl PcaProjection {
    /// Coordinates of `x` on the first `k` components.
    pub fn project(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.basis[..k]
            .iter()
            .map(|row| row.iter().zip(x).zip(&self.mean).map(|((b, xi), m)| b * (xi - m)).sum())
            .collect()
    }

    pub fn explained_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        self.eigenvalues[..k].iter().sum::<f64>() / total
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 {
        return invalid("rows must be non-empty vectors");
    }
    if rows.iter().any(|r| r.len() != d) {
        return invalid("rows have inconsistent dimension");
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return invalid("rows contain non-finite values");
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub(crate) fn covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0).max(1.0);
    (mean, cov)
}

/// Principal components of the sample covariance.
pub fn pca_project(rows: &[Vec<f64>]) -> Result<PcaProjection> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData {
            what: "fingerprints for PCA".into(),
            needed: 3,
            available: rows.len(),
        });
    }
    let x = to_matrix(rows)?;
    let (mean, cov) = covariance(&x);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let basis: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    // zero variance up to rounding noise
    let d_eff = if total <= 1e-20 {
        0
    } else {
        let mut acc = 0.0;
        let mut k = 0;
        for (i, l) in eigenvalues.iter().enumerate() {
            acc += l;
            k = i + 1;
            if acc / total >= VARIANCE_TARGET - 1e-12 {
                break;
            }
        }
        k
    };
    Ok(PcaProjection {
        mean: mean.iter().copied().collect(),
        basis,
        eigenvalues,
        d_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn points_on_a_line() {
        let dir: Vec<f64> = (0..14).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let rows: Vec<Vec<f64>> = (0..20).map(|t| dir.iter().map(|d| d * t as f64 + 0.5).collect()).collect();
        let p = pca_project(&rows).unwrap();
        assert_eq!(p.d_eff, 1);
        for (i, a) in p.basis.iter().enumerate() {
            for (j, b) in p.basis.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identical_points() {
        let rows = vec![vec![0.3; 14]; 10];
        let p = pca_project(&rows).unwrap();
        assert_eq!(p.d_eff, 0);
        assert!(p.eigenvalues.iter().all(|&l| l == 0.0 || l.abs() < 1e-30));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(pca_project(&[vec![1.0], vec![2.0]]), Err(Error::InsufficientData { needed: 3, .. })));
    }

    #[test]
    fn isotropic_three_dim_cloud() {
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // fixed orthonormal basis: three coordinate axes rotated into the 14-space
            let rows: Vec<Vec<f64>> = (0..200)
                .map(|_| {
                    let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
                    let mut v = vec![0.0; 14];
                    v[0] = (z[0] + z[1]) / 2f64.sqrt();
                    v[1] = (z[0] - z[1]) / 2f64.sqrt();
                    v[7] = z[2];
                    v
                })
                .collect();
            if pca_project(&rows).unwrap().d_eff == 3 {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }
}
