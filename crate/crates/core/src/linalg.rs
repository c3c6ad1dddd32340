//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Pivots whose square falls below this fraction of the largest diagonal
/// entry mark the matrix as numerically singular.
pub(crate) const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Cholesky factorization that also rejects numerically singular matrices.
///
/// nalgebra happily factors a PSD-singular matrix when rounding leaves a
/// tiny positive pivot, which would turn later solves into noise.
pub(crate) fn cholesky_checked(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if a.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let scale = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    let floor = SINGULAR_PIVOT_RATIO * scale.max(f64::MIN_POSITIVE);
    for i in 0..a.nrows() {
        let pivot = l[(i, i)];
        if !pivot.is_finite() || pivot * pivot <= floor {
            return None;
        }
    }
    Some(chol)
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest |a_ij - a_ji|.
pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Mirror the upper triangle onto the lower one so symmetry holds exactly.
pub(crate) fn symmetrize_from_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            m[(j, i)] = m[(i, j)];
        }
    }
}

/// (A + Aᵀ) / 2
pub(crate) fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Truncated pseudoinverse from a one-sided Jacobi SVD, plus the numerical
/// rank. Singular values at or below `rel_cutoff·σ_max` are dropped.
///
/// nalgebra's bidiagonal SVD loses accuracy when singular values cluster,
/// which is the normal case for row subsets of an orthogonal matrix.
pub(crate) fn pinv_truncated(a: &DMatrix<f64>, rel_cutoff: f64) -> (DMatrix<f64>, usize) {
    if a.nrows() < a.ncols() {
        let (p, rank) = pinv_truncated(&a.transpose(), rel_cutoff);
        return (p.transpose(), rank);
    }
    let (m, k) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(k, k);
    for _ in 0..100 {
        let mut rotated = false;
        for i in 0..k {
            for j in (i + 1)..k {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..m {
                    let (x, y) = (w[(r, i)], w[(r, j)]);
                    w[(r, i)] = c * x - s * y;
                    w[(r, j)] = s * x + c * y;
                }
                for r in 0..k {
                    let (x, y) = (v[(r, i)], v[(r, j)]);
                    v[(r, i)] = c * x - s * y;
                    v[(r, j)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = (0..k).map(|j| w.column(j).norm()).collect();
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_cutoff * sigma_max;
    let mut pinv = DMatrix::zeros(k, m);
    let mut rank = 0;
    for (j, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            // v_j σ⁻¹ u_jᵀ with u_j = w_j / σ
            pinv += (v.column(j) / (s * s)) * w.column(j).transpose();
        }
    }
    (pinv, rank)
}

/// Groups rows and columns of `a` into independent blocks: two indices share
/// a block when linked by a chain of exact nonzero entries. Returns
/// `(rows, cols)` per block, both ascending; all-zero rows are omitted.
pub(crate) fn independent_blocks(a: &DMatrix<f64>) -> Vec<(Vec<usize>, Vec<usize>)> {
    let (m, k) = a.shape();
    let mut parent: Vec<usize> = (0..m + k).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for r in 0..m {
        for c in 0..k {
            if a[(r, c)] != 0.0 {
                let (x, y) = (find(&mut parent, r), find(&mut parent, m + c));
                if x != y {
                    parent[x.max(y)] = x.min(y);
                }
            }
        }
    }
    let mut blocks: Vec<(usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for idx in 0..m + k {
        let root = find(&mut parent, idx);
        let pos = match blocks.iter().position(|b| b.0 == root) {
            Some(p) => p,
            None => {
                blocks.push((root, Vec::new(), Vec::new()));
                blocks.len() - 1
            }
        };
        if idx < m {
            blocks[pos].1.push(idx);
        } else {
            blocks[pos].2.push(idx - m);
        }
    }
    blocks
        .into_iter()
        .filter(|b| !b.2.is_empty())
        .map(|(_, rows, cols)| (rows, cols))
        .collect()
}
