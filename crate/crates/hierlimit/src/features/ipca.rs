//! Incremental PCA with a variance-targeted component count and a
//! nonnegativity shift so projected counts stay valid Naive Bayes input.

use crate::error::{Error, Result};
use crate::features::CountVector;
use nalgebra::{DMatrix, SymmetricEigen};

/// Fitted projection: center, rotate onto the principal components, then
/// shift so every training projection is nonnegative.
#[derive(Debug, Clone)]
pub struct Projector {
    mean: Vec<f64>,
    /// k x n_features, row-major, row-orthonormal.
    components: Vec<f64>,
    /// Per-component explained variance, descending.
    explained_variance: Vec<f64>,
    variance_target: f64,
    /// Per-dimension nonnegativity offset.
    shift: Vec<f64>,
    k: usize,
    n_features: usize,
    /// Total training variance (denominator of the explained ratio).
    total_variance: f64,
    /// Cached components . mean, so sparse projection never touches the
    /// zero coordinates.
    projected_mean: Vec<f64>,
}

impl Projector {
    pub(crate) fn from_parts(
        mean: Vec<f64>,
        components: Vec<f64>,
        explained_variance: Vec<f64>,
        variance_target: f64,
        shift: Vec<f64>,
        n_features: usize,
        total_variance: f64,
    ) -> Result<Self> {
        let k = explained_variance.len();
        if mean.len() != n_features
            || components.len() != k * n_features
            || shift.len() != k
        {
            return Err(Error::Validation("projector shapes are inconsistent".into()));
        }
        let projected_mean = mat_vec(&components, k, n_features, &mean);
        let projector = Projector {
            mean,
            components,
            explained_variance,
            variance_target,
            shift,
            k,
            n_features,
            total_variance,
            projected_mean,
        };
        projector.validate()?;
        Ok(projector)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn variance_target(&self) -> f64 {
        self.variance_target
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|ev| ev / self.total_variance)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.explained_variance.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Validation(
                "explained variance must be descending".into(),
            ));
        }
        if self.shift.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::Validation("projector shift must be nonnegative".into()));
        }
        if !(self.total_variance > 0.0) {
            return Err(Error::Validation("projector total variance must be positive".into()));
        }
        let cumulative: f64 = self.explained_variance_ratio().iter().sum();
        if cumulative < self.variance_target - 1e-9 {
            return Err(Error::Validation(format!(
                "projector explains {cumulative:.6} of variance, below target {:.6}",
                self.variance_target
            )));
        }
        // Row orthonormality within 1e-8.
        for i in 0..self.k {
            for j in i..self.k {
                let dot: f64 = (0..self.n_features)
                    .map(|c| self.components[i * self.n_features + c]
                        * self.components[j * self.n_features + c])
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > 1e-8 {
                    return Err(Error::Validation(format!(
                        "projector components not orthonormal: row {i} . row {j} = {dot}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rotation of the centered vector, before shift and clamping. The
    /// nonnegativity shift is derived from this exact arithmetic path.
    fn project_raw(&self, v: &CountVector) -> Vec<f64> {
        let n = self.n_features;
        let mut out = Vec::with_capacity(self.k);
        for d in 0..self.k {
            let row = &self.components[d * n..(d + 1) * n];
            let mut acc = 0.0;
            for (i, count) in v.iter() {
                acc += row[i] * count as f64;
            }
            out.push(acc - self.projected_mean[d]);
        }
        out
    }

    /// Project a count vector: `clamp0(components . (v - mean) + shift)`.
    /// Training vectors come out exactly nonnegative; the clamp only fires
    /// for out-of-training inputs.
    pub fn project(&self, v: &CountVector) -> Result<Vec<f64>> {
        if v.dimension() != self.n_features {
            return Err(Error::Validation(format!(
                "projector expects dimension {}, got {}",
                self.n_features,
                v.dimension()
            )));
        }
        let mut out = self.project_raw(v);
        for (d, value) in out.iter_mut().enumerate() {
            *value = (*value + self.shift[d]).max(0.0);
        }
        Ok(out)
    }

    /// Dense-input variant of [`Projector::project`].
    pub fn project_dense(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_features {
            return Err(Error::Validation(format!(
                "projector expects dimension {}, got {}",
                self.n_features,
                v.len()
            )));
        }
        let mut out = self.project_raw_dense(v);
        for (d, value) in out.iter_mut().enumerate() {
            *value = (*value + self.shift[d]).max(0.0);
        }
        Ok(out)
    }

    fn project_raw_dense(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n_features;
        (0..self.k)
            .map(|d| {
                let row = &self.components[d * n..(d + 1) * n];
                row.iter()
                    .zip(v)
                    .zip(&self.mean)
                    .map(|((c, x), m)| c * (x - m))
                    .sum()
            })
            .collect()
    }
}

fn mat_vec(mat: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| mat[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Running state of the mini-batch update.
struct IpcaState {
    n_features: usize,
    retain: usize,
    n_seen: usize,
    mean: Vec<f64>,
    /// Per-feature sum of squared deviations from the running mean.
    ssd: Vec<f64>,
    singular: Vec<f64>,
    /// r x n_features.
    components: DMatrix<f64>,
}

impl IpcaState {
    fn new(n_features: usize, batch_size: usize) -> Self {
        IpcaState {
            n_features,
            retain: batch_size.min(n_features),
            n_seen: 0,
            mean: vec![0.0; n_features],
            ssd: vec![0.0; n_features],
            singular: Vec::new(),
            components: DMatrix::zeros(0, n_features),
        }
    }

    fn partial_fit(&mut self, batch: &DMatrix<f64>) {
        let n_b = batch.nrows();
        let n = self.n_features;
        debug_assert!(n_b > 0 && batch.ncols() == n);

        let mut batch_mean = vec![0.0; n];
        for row in batch.row_iter() {
            for (j, value) in row.iter().enumerate() {
                batch_mean[j] += value;
            }
        }
        for m in &mut batch_mean {
            *m /= n_b as f64;
        }

        let mut centered = batch.clone();
        for mut row in centered.row_iter_mut() {
            for (j, value) in row.iter_mut().enumerate() {
                *value -= batch_mean[j];
            }
        }

        let mut batch_ssd = vec![0.0; n];
        for row in centered.row_iter() {
            for (j, value) in row.iter().enumerate() {
                batch_ssd[j] += value * value;
            }
        }

        let stacked = if self.n_seen == 0 {
            self.mean = batch_mean;
            self.ssd = batch_ssd;
            self.n_seen = n_b;
            centered
        } else {
            let n_a = self.n_seen as f64;
            let n_total = n_a + n_b as f64;
            let weight = n_a * n_b as f64 / n_total;
            // Mean-correction row reconciles the two centerings.
            let correction: Vec<f64> = self
                .mean
                .iter()
                .zip(&batch_mean)
                .map(|(a, b)| weight.sqrt() * (a - b))
                .collect();
            for j in 0..n {
                let delta = batch_mean[j] - self.mean[j];
                self.ssd[j] += batch_ssd[j] + weight * delta * delta;
                self.mean[j] += delta * n_b as f64 / n_total;
            }
            self.n_seen += n_b;

            let r = self.components.nrows();
            let mut stacked = DMatrix::zeros(r + n_b + 1, n);
            for i in 0..r {
                let s = self.singular[i];
                for j in 0..n {
                    stacked[(i, j)] = s * self.components[(i, j)];
                }
            }
            stacked.rows_mut(r, n_b).copy_from(&centered);
            for j in 0..n {
                stacked[(r + n_b, j)] = correction[j];
            }
            stacked
        };

        let (singular, components) = top_right_singular(&stacked, self.retain);
        self.singular = singular;
        self.components = components;
    }
}

/// Eigendecomposition of a symmetric positive semidefinite matrix with
/// eigenvalues descending. nalgebra's QL-based solver occasionally yields
/// NaN on near-singular Gram matrices; fall back to cyclic Jacobi, which
/// cannot.
fn symmetric_eigen_desc(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eigen = SymmetricEigen::new(gram.clone());
    let (values, vectors) = if eigen.eigenvalues.iter().all(|v| v.is_finite()) {
        (eigen.eigenvalues, eigen.eigenvectors)
    } else {
        jacobi_eigen(gram)
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let n = vectors.nrows();
    let mut sorted_vectors = DMatrix::zeros(n, order.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted_vectors.column_mut(dst).copy_from(&vectors.column(src));
    }
    (sorted_values, sorted_vectors)
}

/// Cyclic Jacobi rotations; unconditionally stable for symmetric input.
fn jacobi_eigen(mut a: DMatrix<f64>) -> (nalgebra::DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() < 1e-12 * (1.0 + a.trace().abs()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Leading singular values and right singular vectors of `a`, via an
/// eigendecomposition of the smaller Gram matrix. The left factor is never
/// needed by the incremental update.
fn top_right_singular(a: &DMatrix<f64>, retain: usize) -> (Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let small_side_is_rows = m <= n;
    let gram = if small_side_is_rows {
        a * a.transpose()
    } else {
        a.transpose() * a
    };
    let (eigenvalues, eigenvectors) = symmetric_eigen_desc(gram);

    let sigma_max = eigenvalues[0].max(0.0).sqrt();
    let tol = (m.max(n) as f64) * f64::EPSILON * sigma_max;

    let mut singular = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for idx in 0..retain.min(eigenvalues.len()) {
        let sigma = eigenvalues[idx].max(0.0).sqrt();
        if sigma <= tol || sigma == 0.0 {
            break;
        }
        let row: Vec<f64> = if small_side_is_rows {
            // v_i = (u_i^T A) / sigma_i
            let u = eigenvectors.column(idx);
            (0..n)
                .map(|j| (0..m).map(|r| u[r] * a[(r, j)]).sum::<f64>() / sigma)
                .collect()
        } else {
            eigenvectors.column(idx).iter().copied().collect()
        };
        singular.push(sigma);
        rows.push(row);
    }

    // Deterministic sign: the entry of largest magnitude is positive.
    for row in &mut rows {
        let lead = row
            .iter()
            .enumerate()
            .max_by(|(i, a), (j, b)| {
                a.abs()
                    .partial_cmp(&b.abs())
                    .unwrap()
                    .then_with(|| j.cmp(i))
            })
            .map(|(_, v)| *v)
            .unwrap_or(0.0);
        if lead < 0.0 {
            for value in row.iter_mut() {
                *value = -*value;
            }
        }
    }

    let r = rows.len();
    let mut components = DMatrix::zeros(r, n);
    for (i, row) in rows.iter().enumerate() {
        for (j, value) in row.iter().enumerate() {
            components[(i, j)] = *value;
        }
    }
    (singular, components)
}

struct FitCore {
    mean: Vec<f64>,
    components: Vec<f64>,
    explained_variance: Vec<f64>,
    k: usize,
    total_variance: f64,
}

fn fit_core(
    batches: impl Iterator<Item = DMatrix<f64>>,
    n_samples: usize,
    n_features: usize,
    variance_target: f64,
    batch_size: usize,
) -> Result<FitCore> {
    if n_samples < 2 {
        return Err(Error::Validation(
            "incremental PCA needs at least 2 samples".into(),
        ));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Validation(format!(
            "variance target {variance_target} must lie in (0, 1]"
        )));
    }
    if batch_size < 2 {
        return Err(Error::Validation("batch size must be at least 2".into()));
    }

    let mut state = IpcaState::new(n_features, batch_size);
    for batch in batches {
        state.partial_fit(&batch);
    }

    let total_ssd: f64 = state.ssd.iter().sum();
    if total_ssd <= 0.0 {
        return Err(Error::Validation(
            "training data has zero variance; nothing to project".into(),
        ));
    }

    let mut cumulative = 0.0;
    let mut k = None;
    for (i, sigma) in state.singular.iter().enumerate() {
        cumulative += sigma * sigma / total_ssd;
        if cumulative >= variance_target - 1e-9 {
            k = Some(i + 1);
            break;
        }
    }
    let k = k.ok_or_else(|| {
        Error::Validation(format!(
            "variance target {variance_target} unreachable: {} retained components explain only {cumulative:.6}",
            state.singular.len()
        ))
    })?;

    let denom = (state.n_seen - 1) as f64;
    let explained_variance: Vec<f64> = state.singular[..k]
        .iter()
        .map(|s| s * s / denom)
        .collect();
    let mut components = Vec::with_capacity(k * n_features);
    for i in 0..k {
        for j in 0..n_features {
            components.push(state.components[(i, j)]);
        }
    }
    Ok(FitCore {
        mean: state.mean,
        components,
        explained_variance,
        k,
        total_variance: total_ssd / denom,
    })
}

/// Fit an incremental PCA projector over count vectors, processing
/// mini-batches of `batch_size` rows. Memory is bounded by one dense
/// batch; the count vectors themselves stay sparse.
///
/// The component count is the smallest k whose cumulative explained
/// variance ratio reaches `variance_target`, and the per-dimension shift
/// makes every training projection nonnegative.
pub fn fit_ipca(
    vectors: &[CountVector],
    variance_target: f64,
    batch_size: usize,
) -> Result<Projector> {
    let n_features = match vectors.first() {
        Some(v) => v.dimension(),
        None => return Err(Error::Validation("incremental PCA needs at least 2 samples".into())),
    };
    if vectors.iter().any(|v| v.dimension() != n_features) {
        return Err(Error::Validation(
            "count vectors disagree on dimension".into(),
        ));
    }

    let batches = vectors.chunks(batch_size).map(|chunk| {
        let mut dense = DMatrix::zeros(chunk.len(), n_features);
        for (r, v) in chunk.iter().enumerate() {
            for (i, count) in v.iter() {
                dense[(r, i)] = count as f64;
            }
        }
        dense
    });
    let core = fit_core(batches, vectors.len(), n_features, variance_target, batch_size)?;

    // Second pass: derive the shift from the exact projection arithmetic.
    let mut projector = Projector::from_parts(
        core.mean,
        core.components,
        core.explained_variance,
        variance_target,
        vec![0.0; core.k],
        n_features,
        core.total_variance,
    )?;
    let mut min_coord = vec![f64::INFINITY; core.k];
    for v in vectors {
        for (d, value) in projector.project_raw(v).into_iter().enumerate() {
            min_coord[d] = min_coord[d].min(value);
        }
    }
    projector.shift = min_coord.into_iter().map(|m| (-m).max(0.0)).collect();
    Ok(projector)
}

/// Dense-row variant of [`fit_ipca`], for inputs that are no longer
/// integer counts (e.g. oversampled vectors).
pub fn fit_ipca_dense(
    rows: &[Vec<f64>],
    variance_target: f64,
    batch_size: usize,
) -> Result<Projector> {
    let n_features = match rows.first() {
        Some(r) => r.len(),
        None => return Err(Error::Validation("incremental PCA needs at least 2 samples".into())),
    };
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::Validation("rows disagree on dimension".into()));
    }
    let batches = rows.chunks(batch_size).map(|chunk| {
        DMatrix::from_fn(chunk.len(), n_features, |r, c| chunk[r][c])
    });
    let core = fit_core(batches, rows.len(), n_features, variance_target, batch_size)?;

    let mut projector = Projector::from_parts(
        core.mean,
        core.components,
        core.explained_variance,
        variance_target,
        vec![0.0; core.k],
        n_features,
        core.total_variance,
    )?;
    let mut min_coord = vec![f64::INFINITY; core.k];
    for row in rows {
        for (d, value) in projector.project_raw_dense(row).into_iter().enumerate() {
            min_coord[d] = min_coord[d].min(value);
        }
    }
    projector.shift = min_coord.into_iter().map(|m| (-m).max(0.0)).collect();
    Ok(projector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_vec(dense: &[u64]) -> CountVector {
        let (indices, values): (Vec<usize>, Vec<u64>) = dense
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (i, v))
            .unzip();
        CountVector::new(indices, values, dense.len()).unwrap()
    }

    #[test]
    fn collinear_data_needs_one_component() {
        let vectors: Vec<CountVector> = (1..=100).map(|x| count_vec(&[x, 2 * x])).collect();
        let p = fit_ipca(&vectors, 0.9, 16).unwrap();
        assert_eq!(p.k(), 1);
        assert!(p.explained_variance_ratio()[0] >= 0.999);
    }

    #[test]
    fn full_rank_data_keeps_both_components() {
        // A near-isotropic cloud: no single direction reaches 90%.
        let vectors: Vec<CountVector> = (0..64)
            .map(|i| count_vec(&[1 + (i * 7 + 3) % 13, 1 + (i * 5 + 1) % 11]))
            .collect();
        let p = fit_ipca(&vectors, 0.9, 16).unwrap();
        assert_eq!(p.k(), 2);
        let cumulative: f64 = p.explained_variance_ratio().iter().sum();
        assert!(cumulative >= 0.9);
    }

    #[test]
    fn projecting_the_mean_returns_the_shift() {
        let vectors: Vec<CountVector> =
            (0..40).map(|i| count_vec(&[i % 5 + 1, i % 3 + 1, i % 7 + 1])).collect();
        let p = fit_ipca(&vectors, 0.95, 8).unwrap();
        let projected = p.project_dense(p.mean().to_vec().as_slice()).unwrap();
        for (got, want) in projected.iter().zip(p.shift()) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn training_projections_are_exactly_nonnegative() {
        let vectors: Vec<CountVector> = (0..80)
            .map(|i| count_vec(&[(i * 3) % 9 + 1, (i * 5) % 4 + 1, (i * 11) % 6 + 1, i % 2 + 1]))
            .collect();
        let p = fit_ipca(&vectors, 0.99, 32).unwrap();
        for v in &vectors {
            for coord in p.project(v).unwrap() {
                assert!(coord >= 0.0);
            }
        }
    }

    #[test]
    fn projection_is_affine_where_unclamped() {
        let vectors: Vec<CountVector> = (0..50)
            .map(|i| count_vec(&[(i * 7) % 10 + 1, (i * 3) % 8 + 1, (i * 13) % 5 + 1]))
            .collect();
        let p = fit_ipca(&vectors, 0.999, 16).unwrap();
        // For training vectors (no clamping), project - shift is linear in
        // the centered input.
        let a = vectors[3].to_dense();
        let b = vectors[17].to_dense();
        let pa = p.project(&vectors[3]).unwrap();
        let pb = p.project(&vectors[17]).unwrap();
        let midpoint: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect();
        let pm = p.project_dense(&midpoint).unwrap();
        for d in 0..p.k() {
            let expected = (pa[d] + pb[d]) / 2.0;
            assert!((pm[d] - expected).abs() < 1e-9, "dim {d}");
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let one = vec![count_vec(&[1, 2])];
        assert!(fit_ipca(&one, 0.9, 8).is_err());

        let two: Vec<CountVector> = vec![count_vec(&[1, 2]), count_vec(&[2, 1])];
        assert!(fit_ipca(&two, 0.0, 8).is_err());
        assert!(fit_ipca(&two, 1.5, 8).is_err());

        let constant: Vec<CountVector> = vec![count_vec(&[1, 1]); 5];
        assert!(fit_ipca(&constant, 0.9, 8).is_err());
    }

    #[test]
    fn orthonormality_holds_after_multi_batch_fit() {
        let vectors: Vec<CountVector> = (0..200)
            .map(|i| {
                count_vec(&[
                    (i * 7) % 11 + 1,
                    (i * 3) % 7 + 1,
                    (i * 5) % 13 + 1,
                    (i * 2) % 5 + 1,
                    (i * 9) % 4 + 1,
                ])
            })
            .collect();
        let p = fit_ipca(&vectors, 0.95, 32).unwrap();
        p.validate().unwrap();
        assert!(p.k() >= 1);
        // EVR is non-increasing and cumulative minimal at k.
        let evr = p.explained_variance_ratio();
        assert!(evr.windows(2).all(|w| w[0] >= w[1] - 1e-12));
        let before_last: f64 = evr[..evr.len() - 1].iter().sum();
        assert!(before_last < 0.95, "k was not minimal");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let vectors: Vec<CountVector> = (0..10).map(|i| count_vec(&[i + 1, 2 * i + 1])).collect();
        let p = fit_ipca(&vectors, 0.9, 8).unwrap();
        let wrong = count_vec(&[1, 2, 3]);
        assert!(p.project(&wrong).is_err());
    }
}
