//! Particle similarity graph: Gaussian-kernel weights, degree matrix,
//! Laplacian, and the smoothness penalty in both its trace and pairwise forms.

use ndarray::{Array2, ArrayView2};

use crate::error::{Result, SmttError};

/// Symmetric nonnegative similarity weights between particle features.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    w: Array2<f64>,
    sigma: f64,
}

impl SimilarityMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Graph Laplacian L = D - W. Symmetric, rows sum to zero, PSD.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    l: Array2<f64>,
}

impl GraphLaplacian {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    /// The zero Laplacian on n nodes (no smoothing).
    pub fn zero(n: usize) -> Self {
        GraphLaplacian {
            l: Array2::zeros((n, n)),
        }
    }

    /// Wrap an explicit matrix. Intended for tests; no invariants checked.
    pub fn from_matrix(l: Array2<f64>) -> Self {
        GraphLaplacian { l }
    }
}

/// W_ij = exp(-||f_i - f_j||^2 / sigma^2) over feature columns.
/// Each unordered pair is computed once, so symmetry is exact.
pub fn build_similarity(features: ArrayView2<'_, f64>, sigma: f64) -> Result<SimilarityMatrix> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SmttError::Parameter(format!(
            "similarity bandwidth must be positive and finite, got {sigma}"
        )));
    }
    if features.ncols() == 0 {
        return Err(SmttError::Parameter("need at least one feature column".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(SmttError::NonFinite("feature matrix".into()));
    }
    let n = features.ncols();
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        w[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for k in 0..features.nrows() {
                let diff = features[[k, i]] - features[[k, j]];
                d2 += diff * diff;
            }
            let v = (-d2 * inv_s2).exp();
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    Ok(SimilarityMatrix { w, sigma })
}

/// Median-heuristic bandwidth: sigma^2 = median of the pairwise squared
/// distances between feature columns. Falls back to 1.0 when all columns
/// coincide (or n = 1).
pub fn median_bandwidth(features: ArrayView2<'_, f64>) -> f64 {
    let n = features.ncols();
    let mut d2s = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for k in 0..features.nrows() {
                let diff = features[[k, i]] - features[[k, j]];
                d2 += diff * diff;
            }
            d2s.push(d2);
        }
    }
    d2s.retain(|&v| v > 0.0);
    if d2s.is_empty() {
        return 1.0;
    }
    d2s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = d2s[d2s.len() / 2];
    med.sqrt()
}

/// Diagonal degree matrix with D_ii = sum_j W_ij.
pub fn degree_matrix(w: &SimilarityMatrix) -> Array2<f64> {
    let n = w.n();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        d[[i, i]] = w.w.row(i).sum();
    }
    d
}

/// L = D - W.
pub fn laplacian(w: &SimilarityMatrix) -> GraphLaplacian {
    let mut l = degree_matrix(w);
    l -= &w.w;
    GraphLaplacian { l }
}

/// Smoothness penalty in trace form: Tr(C L C^T) with columns of C as node
/// signals. Equals the pairwise form up to floating-point roundoff.
pub fn penalty_trace(c: ArrayView2<'_, f64>, l: &GraphLaplacian) -> Result<f64> {
    if c.ncols() != l.n() {
        return Err(SmttError::Shape(format!(
            "coefficient columns {} vs graph nodes {}",
            c.ncols(),
            l.n()
        )));
    }
    // Tr(C L C^T) = sum over rows r of C: r L r^T
    let cl = c.dot(&l.l);
    let mut acc = 0.0;
    for (a, b) in cl.iter().zip(c.iter()) {
        acc += a * b;
    }
    Ok(acc)
}

/// Smoothness penalty in pairwise form: 1/2 sum_ij W_ij ||c_i - c_j||^2.
/// Serves as the independent oracle for `penalty_trace`.
pub fn penalty_pairwise(c: ArrayView2<'_, f64>, w: &SimilarityMatrix) -> Result<f64> {
    if c.ncols() != w.n() {
        return Err(SmttError::Shape(format!(
            "coefficient columns {} vs graph nodes {}",
            c.ncols(),
            w.n()
        )));
    }
    let n = w.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut d2 = 0.0;
            for k in 0..c.nrows() {
                let diff = c[[k, i]] - c[[k, j]];
                d2 += diff * diff;
            }
            acc += w.w[[i, j]] * d2;
        }
    }
    Ok(0.5 * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_features(d: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((d, n), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_columns_give_unit_similarity() {
        let f = array![[1.0, 1.0], [2.0, 2.0]];
        let w = build_similarity(f.view(), 0.7).unwrap();
        assert_eq!(w.matrix()[[0, 1]], 1.0);
        assert_eq!(w.matrix()[[0, 0]], 1.0);
    }

    #[test]
    fn unit_distance_ratio_gives_e_inverse() {
        // ||f1 - f2||^2 = sigma^2 forces the exponent to -1
        let sigma = 1.3;
        let f = array![[0.0, sigma]];
        let w = build_similarity(f.view(), sigma).unwrap();
        assert!((w.matrix()[[0, 1]] - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn similarity_matches_naive_pairwise_oracle() {
        let f = random_features(3, 5, 11);
        let sigma = 0.9;
        let w = build_similarity(f.view(), sigma).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let mut d2 = 0.0;
                for k in 0..3 {
                    d2 += (f[[k, i]] - f[[k, j]]).powi(2);
                }
                let expect = (-d2 / (sigma * sigma)).exp();
                assert!((w.matrix()[[i, j]] - expect).abs() < 1e-14);
                assert_eq!(w.matrix()[[i, j]], w.matrix()[[j, i]]);
            }
        }
    }

    #[test]
    fn rejects_bad_sigma_and_nonfinite_input() {
        let f = array![[0.0, 1.0]];
        assert!(matches!(
            build_similarity(f.view(), 0.0),
            Err(SmttError::Parameter(_))
        ));
        assert!(matches!(
            build_similarity(f.view(), -1.0),
            Err(SmttError::Parameter(_))
        ));
        let bad = array![[0.0, f64::NAN]];
        assert!(matches!(
            build_similarity(bad.view(), 1.0),
            Err(SmttError::NonFinite(_))
        ));
    }

    #[test]
    fn degree_matrix_2x2() {
        let f = array![[0.0, 1.0]];
        let w = build_similarity(f.view(), 1.0).unwrap();
        let a = w.matrix()[[0, 1]];
        let d = degree_matrix(&w);
        assert!((d[[0, 0]] - (1.0 + a)).abs() < 1e-15);
        assert!((d[[1, 1]] - (1.0 + a)).abs() < 1e-15);
        assert_eq!(d[[0, 1]], 0.0);
    }

    #[test]
    fn degree_matches_rowsum_oracle() {
        let f = random_features(4, 6, 7);
        let w = build_similarity(f.view(), 1.1).unwrap();
        let d = degree_matrix(&w);
        for i in 0..6 {
            let mut s = 0.0;
            for j in 0..6 {
                s += w.matrix()[[i, j]];
            }
            assert!((d[[i, i]] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_two_node_closed_form() {
        let f = array![[0.0, 2.0]];
        let w = build_similarity(f.view(), 1.5).unwrap();
        let a = w.matrix()[[0, 1]];
        let l = laplacian(&w);
        assert!((l.matrix()[[0, 0]] - a).abs() < 1e-15);
        assert!((l.matrix()[[0, 1]] + a).abs() < 1e-15);
    }

    #[test]
    fn laplacian_rowsums_and_psd() {
        let f = random_features(5, 8, 3);
        let w = build_similarity(f.view(), 1.0).unwrap();
        let l = laplacian(&w);
        for i in 0..8 {
            assert!(l.matrix().row(i).sum().abs() < 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut quad = 0.0;
            let mut nrm = 0.0;
            for i in 0..8 {
                nrm += x[i] * x[i];
                for j in 0..8 {
                    quad += x[i] * l.matrix()[[i, j]] * x[j];
                }
            }
            assert!(quad >= -1e-10 * nrm);
        }
    }

    #[test]
    fn penalty_vanishes_on_constant_signal_and_zero_graph() {
        let f = random_features(3, 4, 1);
        let w = build_similarity(f.view(), 1.0).unwrap();
        let l = laplacian(&w);
        // all columns identical
        let c = Array2::from_shape_fn((6, 4), |(r, _)| r as f64 * 0.3 - 1.0);
        assert!(penalty_trace(c.view(), &l).unwrap().abs() < 1e-10);
        let lz = GraphLaplacian::zero(4);
        let c2 = random_features(6, 4, 2);
        assert_eq!(penalty_trace(c2.view(), &lz).unwrap(), 0.0);
    }

    #[test]
    fn pairwise_hand_case() {
        // C columns (1,0) and (0,1), W12 = 1 -> 1/2 * 2 * 2 = 2
        let f = array![[0.0, 0.0]];
        let w = build_similarity(f.view(), 1.0).unwrap();
        let c = array![[1.0, 0.0], [0.0, 1.0]];
        assert!((penalty_pairwise(c.view(), &w).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_node_penalty_is_zero() {
        let f = array![[0.5]];
        let w = build_similarity(f.view(), 1.0).unwrap();
        let c = array![[1.0], [2.0]];
        assert_eq!(penalty_pairwise(c.view(), &w).unwrap(), 0.0);
        let l = laplacian(&w);
        assert!(penalty_trace(c.view(), &l).unwrap().abs() < 1e-12);
    }

    #[test]
    fn trace_equals_pairwise_on_random_inputs() {
        for seed in 0..20 {
            let f = random_features(4, 7, seed);
            let w = build_similarity(f.view(), 0.8).unwrap();
            let l = laplacian(&w);
            let c = random_features(9, 7, seed + 1000);
            let a = penalty_trace(c.view(), &l).unwrap();
            let b = penalty_pairwise(c.view(), &w).unwrap();
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn penalty_shape_mismatch_is_an_error() {
        let f = random_features(3, 4, 5);
        let w = build_similarity(f.view(), 1.0).unwrap();
        let l = laplacian(&w);
        let c = random_features(3, 5, 6);
        assert!(matches!(
            penalty_trace(c.view(), &l),
            Err(SmttError::Shape(_))
        ));
        assert!(matches!(
            penalty_pairwise(c.view(), &w),
            Err(SmttError::Shape(_))
        ));
    }

    #[test]
    fn wider_bandwidth_raises_offdiagonal_weights() {
        let f = random_features(3, 5, 42);
        let w1 = build_similarity(f.view(), 0.5).unwrap();
        let w2 = build_similarity(f.view(), 1.5).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(w2.matrix()[[i, j]] > w1.matrix()[[i, j]]);
                }
            }
        }
    }

    #[test]
    fn permutation_equivariance() {
        let f = random_features(3, 5, 8);
        let c = random_features(6, 5, 9);
        let perm = [2usize, 0, 4, 1, 3];
        let mut fp = Array2::zeros((3, 5));
        let mut cp = Array2::zeros((6, 5));
        for (new, &old) in perm.iter().enumerate() {
            fp.column_mut(new).assign(&f.column(old));
            cp.column_mut(new).assign(&c.column(old));
        }
        let w = build_similarity(f.view(), 1.0).unwrap();
        let wp = build_similarity(fp.view(), 1.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let (oi, oj) = (perm[i], perm[j]);
                assert!((wp.matrix()[[i, j]] - w.matrix()[[oi, oj]]).abs() < 1e-15);
            }
        }
        let a = penalty_trace(c.view(), &laplacian(&w)).unwrap();
        let b = penalty_trace(cp.view(), &laplacian(&wp)).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}
