//! PCA over feature maps via a Jacobi eigensolver on the covariance.

/// Orthonormal projection onto the top `out_dim` principal components of the
/// (centered) samples, plus explained variance.
pub struct Pca {
    pub mean: Vec<f64>,
    /// out_dim rows of length in_dim.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
}

impl Pca {
    pub fn project(&self, sample: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(sample.iter().zip(&self.mean))
                    .map(|(ci, (x, m))| ci * (x - m))
                    .sum()
            })
            .collect()
    }

    pub fn reconstruct(&self, reduced: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (coef, comp) in reduced.iter().zip(&self.components) {
            for (o, c) in out.iter_mut().zip(comp) {
                *o += coef * c;
            }
        }
        out
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// (eigenvalues, eigenvectors as rows), descending.
pub fn jacobi_eigen(mat: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = mat.len();
    let mut a: Vec<Vec<f64>> = mat.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-18 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let eigvecs: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (eigvals, eigvecs)
}

/// Centered PCA of row-major samples down to `out_dim` components.
pub fn pca_reduce(samples: &[Vec<f64>], out_dim: usize) -> (Pca, Vec<Vec<f64>>) {
    assert!(!samples.is_empty());
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for s in samples {
        let c: Vec<f64> = s.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += c[i] * c[j] / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i][j] = cov[j][i];
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen(&cov);
    let keep = out_dim.min(d);
    let total_variance: f64 = eigvals.iter().map(|e| e.max(0.0)).sum();
    let pca = Pca {
        mean,
        components: eigvecs.into_iter().take(keep).collect(),
        explained_variance: eigvals.iter().take(keep).map(|e| e.max(0.0)).collect(),
        total_variance,
    };
    let reduced = samples.iter().map(|s| pca.project(s)).collect();
    (pca, reduced)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::Rng;

    #[test]
    fn white_16d_data_projection_is_a_rotation() {
        let mut rng = Rng::new(41);
        let samples: Vec<Vec<f64>> = (0..400)
            .map(|_| (0..16).map(|_| rng.normal()).collect())
            .collect();
        let (pca, reduced) = pca_reduce(&samples, 16);
        // orthonormal components
        for i in 0..16 {
            for j in 0..16 {
                let dot: f64 = pca.components[i]
                    .iter()
                    .zip(&pca.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9, "({},{}) -> {}", i, j, dot);
            }
        }
        // exact reconstruction at full dimension
        for (s, r) in samples.iter().zip(&reduced).take(20) {
            let rec = pca.reconstruct(r);
            for (a, b) in rec.iter().zip(s) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_two_data_has_two_nonzero_eigenvalues() {
        let mut rng = Rng::new(42);
        let u: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let v: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let samples: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                (0..10).map(|i| a * u[i] + b * v[i]).collect()
            })
            .collect();
        let (pca, _) = pca_reduce(&samples, 10);
        let nonzero = pca
            .explained_variance
            .iter()
            .filter(|&&e| e > 1e-9)
            .count();
        assert_eq!(nonzero, 2, "{:?}", pca.explained_variance);
    }

    #[test]
    fn reconstruction_error_matches_svd_oracle_on_5x40() {
        // 5 samples in 40 dims: centered rank <= 4 <= 16, so the optimal
        // rank-16 error is ~0 and the reconstruction must be exact
        let mut rng = Rng::new(43);
        let samples: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..40).map(|_| rng.normal()).collect())
            .collect();
        let (pca, reduced) = pca_reduce(&samples, 16);
        let mut err = 0.0f64;
        for (s, r) in samples.iter().zip(&reduced) {
            let rec = pca.reconstruct(r);
            err += rec.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        // independent oracle: optimal rank-k error from the Gram-matrix
        // spectrum of the centered data
        let d = 40;
        let n = samples.len();
        let mut mean = vec![0.0; d];
        for s in &samples {
            for (m, x) in mean.iter_mut().zip(s) {
                *m += x / n as f64;
            }
        }
        let centered: Vec<Vec<f64>> = samples
            .iter()
            .map(|s| s.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect();
        let mut gram = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                gram[i][j] = centered[i]
                    .iter()
                    .zip(&centered[j])
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        let (gvals, _) = jacobi_eigen(&gram);
        let optimal: f64 = gvals.iter().skip(16).map(|e| e.max(0.0)).sum();
        assert!((err - optimal).abs() < 1e-9, "err {} optimal {}", err, optimal);
        assert!(err < 1e-9);
    }

    #[test]
    fn explained_variance_is_reported_descending() {
        let mut rng = Rng::new(44);
        let samples: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                (0..6)
                    .map(|i| rng.normal_scaled(1.0 / (i + 1) as f64))
                    .collect()
            })
            .collect();
        let (pca, _) = pca_reduce(&samples, 4);
        for w in pca.explained_variance.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!(pca.total_variance >= pca.explained_variance.iter().sum::<f64>() - 1e-12);
    }
}
