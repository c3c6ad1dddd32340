//! Empirical covariance and the graphical lasso.
//!
//! The graphical lasso estimates a sparse precision matrix `Θ` maximizing
//! `log det Θ − tr(SΘ) − λ‖Θ‖₁` (the penalty covers every entry, so the
//! diagonal of the estimated covariance is `S_ii + λ`). It is solved by block
//! coordinate ascent on the dual: one column of the covariance estimate `W`
//! at a time, each via a lasso subproblem solved by coordinate descent. The
//! regularized covariance `W ≈ Θ⁻¹` becomes the KRR-COV kernel.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::WeightMatrix;
use crate::linalg;
use crate::reconstruction::KernelMatrix;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 500;

const INNER_TOL: f64 = 1e-12;
const INNER_MAX_ITERS: usize = 10_000;

/// Sample covariance of the columns of `x` with `1/(P−1)` normalization.
pub fn empirical_covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = x.nrows();
    if p < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: p });
    }
    for column in 0..x.ncols() {
        for row in 0..p {
            if !x[(row, column)].is_finite() {
                return Err(Error::MissingData { row, column });
            }
        }
    }
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut s = centered.transpose() * &centered / (p - 1) as f64;
    linalg::symmetrize_from_upper(&mut s);
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    /// Regularized covariance `Σ̂`.
    pub sigma: DMatrix<f64>,
    /// Sparse precision `Θ`.
    pub theta: DMatrix<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `−log det W` after every sweep; nonincreasing.
    pub objective_trace: Vec<f64>,
    /// `tr(SΘ) + λ‖Θ‖₁ − N` at the returned estimate.
    pub duality_gap: f64,
}

impl CovarianceEstimate {
    pub fn kernel(&self) -> Result<KernelMatrix> {
        KernelMatrix::new(self.sigma.clone())
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Coordinate descent for `min ½ βᵀ W β − sᵀβ + λ‖β‖₁`, warm-started.
fn lasso_cd(w: &DMatrix<f64>, s: &[f64], lambda: f64, beta: &mut [f64]) {
    let m = beta.len();
    let scale = s.iter().fold(1e-300_f64, |a, v| a.max(v.abs()));
    for _ in 0..INNER_MAX_ITERS {
        let mut max_change = 0.0_f64;
        for k in 0..m {
            let mut r = s[k];
            for l in 0..m {
                if l != k {
                    r -= w[(k, l)] * beta[l];
                }
            }
            let updated = soft_threshold(r, lambda) / w[(k, k)];
            max_change = max_change.max((updated - beta[k]).abs() * w[(k, k)]);
            beta[k] = updated;
        }
        if max_change <= INNER_TOL * scale {
            break;
        }
    }
}

fn log_det(w: &DMatrix<f64>) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(w.clone())?;
    Some(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Graphical lasso on the covariance `s` with penalty `lambda`.
///
/// Stops when the largest change of `W` in a sweep falls below `tol` relative
/// to the largest entry of `W`. Hitting `max_iters`, or losing positive
/// definiteness to rounding under heavy multicollinearity, returns the current
/// estimate with `converged = false` rather than an error.
pub fn graphical_lasso(s: &DMatrix<f64>, lambda: f64, tol: f64, max_iters: usize) -> Result<CovarianceEstimate> {
    if !s.is_square() {
        return Err(Error::DimensionMismatch {
            expected: s.nrows(),
            got: s.ncols(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(tol > 0.0) || max_iters == 0 {
        return Err(Error::InvalidConfig("tol must be positive and max_iters >= 1".into()));
    }
    if linalg::asymmetry(s) > 1e-10 * linalg::max_abs(s).max(1.0) {
        return Err(Error::InvalidConfig("covariance is not symmetric".into()));
    }
    let n = s.nrows();
    let mut w = linalg::symmetric_part(s) + DMatrix::identity(n, n) * lambda;
    if linalg::cholesky_checked(&w).is_none() {
        return Err(Error::NonPositiveDefinite);
    }

    // coefficient columns: betas[j] holds the weights on the other nodes
    let mut betas: Vec<Vec<f64>> = vec![vec![0.0; n.saturating_sub(1)]; n];
    let mut trace = Vec::new();
    let mut converged = n <= 1;
    let mut iterations = 0;
    let mut degenerate = false;

    while !converged && iterations < max_iters {
        iterations += 1;
        let mut max_change = 0.0_f64;
        for j in 0..n {
            let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            let w11 = linalg::select(&w, &others, &others);
            let s12: Vec<f64> = others.iter().map(|&i| s[(i, j)]).collect();
            lasso_cd(&w11, &s12, lambda, &mut betas[j]);
            for (r, &i) in others.iter().enumerate() {
                let mut w12 = 0.0;
                for (c, b) in betas[j].iter().enumerate() {
                    w12 += w11[(r, c)] * b;
                }
                max_change = max_change.max((w12 - w[(i, j)]).abs());
                w[(i, j)] = w12;
                w[(j, i)] = w12;
            }
        }
        match log_det(&w) {
            Some(v) if v.is_finite() => trace.push(-v),
            _ => {
                degenerate = true;
                break;
            }
        }
        let scale = linalg::max_abs(&w).max(f64::MIN_POSITIVE);
        if max_change <= tol * scale {
            converged = true;
        }
    }

    let mut theta = DMatrix::zeros(n, n);
    for j in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != j).collect();
        let mut cross = 0.0;
        for (c, &i) in others.iter().enumerate() {
            cross += w[(i, j)] * betas[j][c];
        }
        let diag = 1.0 / (w[(j, j)] - cross);
        theta[(j, j)] = diag;
        for (c, &i) in others.iter().enumerate() {
            theta[(i, j)] = -betas[j][c] * diag;
        }
    }
    let theta = linalg::symmetric_part(&theta);
    let finite = theta.iter().all(|v| v.is_finite()) && w.iter().all(|v| v.is_finite());
    let positive = finite && linalg::cholesky_checked(&theta).is_some();
    if degenerate || !positive {
        log::warn!("graphical lasso lost positive definiteness at lambda = {lambda}");
        converged = false;
    }
    let duality_gap = (s * &theta).trace() + lambda * theta.iter().map(|v| v.abs()).sum::<f64>() - n as f64;

    Ok(CovarianceEstimate {
        sigma: w,
        theta,
        lambda,
        converged,
        iterations,
        objective_trace: trace,
        duality_gap,
    })
}

/// Edge weights `|Θ_ij|` above `tau`, used to count KRR-COV edges.
pub fn precision_to_adjacency(theta: &DMatrix<f64>, tau: f64) -> Result<WeightMatrix> {
    if !theta.is_square() {
        return Err(Error::DimensionMismatch {
            expected: theta.nrows(),
            got: theta.ncols(),
        });
    }
    let n = theta.nrows();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (theta[(i, j)].abs() + theta[(j, i)].abs());
            if v > tau {
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    WeightMatrix::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{edge_set, DEFAULT_EDGE_THRESHOLD};
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_data(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(p, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn covariance_of_identical_columns() {
        let col = [1.0, -0.5, 0.3, 2.0, -1.1];
        let x = DMatrix::from_fn(5, 2, |r, _| col[r]);
        let s = empirical_covariance(&x).unwrap();
        assert_abs_diff_eq!(s[(0, 1)], s[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn covariance_of_independent_noise() {
        let p = 4000;
        let s = empirical_covariance(&random_data(p, 4, 7)).unwrap();
        let bound = 3.0 / (p as f64).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(s[(i, j)].abs() < bound, "s[{i},{j}] = {}", s[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn covariance_single_standardized_column() {
        let raw = [3.0, 1.0, 4.0, 1.0, 5.0];
        let mean = raw.iter().sum::<f64>() / 5.0;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let x = DMatrix::from_fn(5, 1, |r, _| (raw[r] - mean) / sd);
        assert_abs_diff_eq!(empirical_covariance(&x).unwrap()[(0, 0)], 1.0, epsilon = 1e-12);
        assert!(empirical_covariance(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn glasso_diagonal_input() {
        let s = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.5, 0.4]);
        for lambda in [0.0, 0.1, 3.0] {
            let est = graphical_lasso(&s, lambda, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
            assert!(est.converged);
            for i in 0..3 {
                for j in 0..3 {
                    let expected = if i == j { 1.0 / (s[(i, i)] + lambda) } else { 0.0 };
                    assert_abs_diff_eq!(est.theta[(i, j)], expected, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn glasso_zero_penalty_inverts() {
        let s = empirical_covariance(&random_data(200, 5, 3)).unwrap();
        let est = graphical_lasso(&s, 0.0, 1e-10, DEFAULT_MAX_ITERS).unwrap();
        assert!(est.converged);
        let inv = s.clone().try_inverse().unwrap();
        assert_abs_diff_eq!(est.theta, inv, epsilon = 1e-5);
    }

    #[test]
    fn glasso_large_penalty_is_diagonal() {
        let s = empirical_covariance(&random_data(50, 4, 11)).unwrap();
        let est = graphical_lasso(&s, 10.0, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
        let w = precision_to_adjacency(&est.theta, 0.0).unwrap();
        assert!(edge_set(&w, 0.0).is_empty());
    }

    #[test]
    fn glasso_objective_and_inverse_relation() {
        let s = empirical_covariance(&random_data(60, 6, 5)).unwrap();
        let est = graphical_lasso(&s, 0.05, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
        assert!(est.converged);
        for pair in est.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9);
        }
        let product = &est.sigma * &est.theta;
        assert_abs_diff_eq!(product, DMatrix::identity(6, 6), epsilon = 1e-5);
        assert!(est.duality_gap.abs() < 1e-4);
    }

    #[test]
    fn glasso_rejects_singular_input() {
        // rank one with no penalty
        let s = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert!(matches!(
            graphical_lasso(&s, 0.0, DEFAULT_TOL, DEFAULT_MAX_ITERS),
            Err(Error::NonPositiveDefinite)
        ));
        assert!(graphical_lasso(&s, 0.1, DEFAULT_TOL, DEFAULT_MAX_ITERS).is_ok());
    }

    #[test]
    fn adjacency_from_precision() {
        let diag = DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0]);
        assert!(edge_set(&precision_to_adjacency(&diag, DEFAULT_EDGE_THRESHOLD).unwrap(), 0.0).is_empty());
        let pair = dmatrix![2.0, -0.8; -0.8, 2.0];
        let w = precision_to_adjacency(&pair, DEFAULT_EDGE_THRESHOLD).unwrap();
        assert_eq!(edge_set(&w, 0.0).len(), 1);
        assert_eq!(w.get(0, 1), 0.8);
    }

    #[test]
    fn edge_count_shrinks_with_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let base = random_data(80, 7, 2);
        let mix = DMatrix::from_fn(7, 7, |_, _| rng.random_range(-0.5..0.5)) + DMatrix::identity(7, 7);
        let s = empirical_covariance(&(base * mix)).unwrap();
        let mut previous = usize::MAX;
        for k in 0..12 {
            let lambda = 1e-3 * 10f64.powf(k as f64 / 4.0);
            let est = graphical_lasso(&s, lambda, DEFAULT_TOL, DEFAULT_MAX_ITERS).unwrap();
            let edges = edge_set(&precision_to_adjacency(&est.theta, DEFAULT_EDGE_THRESHOLD).unwrap(), 0.0).len();
            assert!(edges <= previous, "lambda {lambda}: {edges} > {previous}");
            previous = edges;
        }
    }
}
