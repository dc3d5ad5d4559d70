//! Shared oracles for the integration tests: an independent symmetric
//! eigensolver (cyclic Jacobi), exact batch PCA built on it, and principal
//! subspace angles. Deliberately avoids the library's linear-algebra path.

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as rows.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..200 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
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
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r][i]).collect())
        .collect();
    (eigenvalues, components)
}

pub struct BatchPca {
    pub mean: Vec<f64>,
    /// Sample-covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as rows, matching `eigenvalues`.
    pub components: Vec<Vec<f64>>,
}

/// Exact batch PCA: full covariance matrix plus the Jacobi eigensolver.
pub fn batch_pca(data: &[Vec<f64>]) -> BatchPca {
    let n = data.len();
    let d = data[0].len();
    let mut mean = vec![0.0; d];
    for row in data {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for row in data {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in i..d {
                cov[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    let (eigenvalues, components) = jacobi_eigen(cov);
    BatchPca {
        mean,
        eigenvalues,
        components,
    }
}

/// Largest principal angle (radians) between the row spans of two
/// orthonormal k x n bases.
pub fn principal_angle(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a.len();
    assert_eq!(k, b.len(), "subspace dimensions differ");
    let mut m = vec![vec![0.0; k]; k];
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            m[i][j] = ai.iter().zip(bj).map(|(x, y)| x * y).sum();
        }
    }
    // Singular values of M are the cosines of the principal angles.
    let mut mtm = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            mtm[i][j] = (0..k).map(|r| m[r][i] * m[r][j]).sum();
        }
    }
    let (eigenvalues, _) = jacobi_eigen(mtm);
    let sigma_min = eigenvalues
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt();
    sigma_min.min(1.0).acos()
}
