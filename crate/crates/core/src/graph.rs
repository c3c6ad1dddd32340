//! Weighted undirected graphs, combinatorial Laplacians and their spectra.
//!
//! Every other module consumes the types defined here. A [`WeightMatrix`]
//! holds the symmetric nonnegative edge weights, a [`LaplacianMatrix`] holds
//! `L = D - W`, and an [`EigenDecomposition`] holds `L = U diag(λ) Uᵀ` with
//! ascending eigenvalues and a fixed eigenvector sign convention.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Maximum |L_ij - L_ji| tolerated by [`LaplacianMatrix::new`].
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Maximum |Σ_j L_ij| tolerated by [`LaplacianMatrix::new`].
pub const ROW_SUM_TOL: f64 = 1e-8;
/// Default threshold above which a weight counts as an edge.
pub const DEFAULT_EDGE_THRESHOLD: f64 = 1e-4;

/// Components smaller than this are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-9;

/// Symmetric, nonnegative, zero-diagonal edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates `w` and stores it canonically from its upper triangle.
    pub fn new(mut w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::InvalidWeights(format!(
                "matrix is {}x{}, expected square",
                w.nrows(),
                w.ncols()
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidWeights("non-finite entry".into()));
        }
        let scale = linalg::max_abs(&w).max(1.0);
        if linalg::asymmetry(&w) > SYMMETRY_TOL * scale {
            return Err(Error::InvalidWeights("matrix is not symmetric".into()));
        }
        linalg::symmetrize_from_upper(&mut w);
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(Error::InvalidWeights(format!("nonzero diagonal at {i}")));
            }
        }
        if let Some(v) = w.iter().find(|v| **v < 0.0) {
            return Err(Error::InvalidWeights(format!("negative weight {v}")));
        }
        Ok(Self { w })
    }

    /// Builds the weights from an upper-triangle edge list.
    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut w = DMatrix::zeros(n, n);
        for e in edges {
            if e.i >= n || e.j >= n {
                return Err(Error::InvalidWeights(format!(
                    "edge ({}, {}) out of range for {n} nodes",
                    e.i, e.j
                )));
            }
            if e.i == e.j {
                return Err(Error::InvalidWeights(format!("self loop at {}", e.i)));
            }
            w[(e.i, e.j)] = e.weight;
            w[(e.j, e.i)] = e.weight;
        }
        Self::new(w)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }
}

/// Combinatorial graph Laplacian `L = D - W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    l: DMatrix<f64>,
}

impl LaplacianMatrix {
    /// Validates an explicit Laplacian against the module tolerances.
    pub fn new(l: DMatrix<f64>) -> Result<Self> {
        if !l.is_square() {
            return Err(Error::InvalidLaplacian(format!(
                "matrix is {}x{}, expected square",
                l.nrows(),
                l.ncols()
            )));
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLaplacian("non-finite entry".into()));
        }
        if linalg::asymmetry(&l) > SYMMETRY_TOL {
            return Err(Error::InvalidLaplacian("matrix is not symmetric".into()));
        }
        let n = l.nrows();
        for i in 0..n {
            if l[(i, i)] < -SYMMETRY_TOL {
                return Err(Error::InvalidLaplacian(format!("negative diagonal at {i}")));
            }
            for j in 0..n {
                if i != j && l[(i, j)] > SYMMETRY_TOL {
                    return Err(Error::InvalidLaplacian(format!(
                        "positive off-diagonal entry at ({i}, {j})"
                    )));
                }
            }
            let row_sum: f64 = l.row(i).iter().sum();
            if row_sum.abs() > ROW_SUM_TOL {
                return Err(Error::InvalidLaplacian(format!(
                    "row {i} sums to {row_sum:e}"
                )));
            }
        }
        Ok(Self { l })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            l: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn trace(&self) -> f64 {
        self.l.trace()
    }

    /// Recovers `W` as the negated off-diagonal part.
    pub fn weights(&self) -> WeightMatrix {
        let n = self.n();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (-self.l[(i, j)]).max(0.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        WeightMatrix { w }
    }

    /// Connected components (nodes linked by a nonzero off-diagonal entry),
    /// each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut label = vec![usize::MAX; n];
        let mut out = Vec::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            label[start] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for v in 0..n {
                    if v != u && label[v] == usize::MAX && self.l[(u, v)] != 0.0 {
                        label[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// `L = D - W` with `D_ii = Σ_j W_ij`.
pub fn laplacian_from_weights(w: &WeightMatrix) -> LaplacianMatrix {
    let n = w.n();
    let mut l = -w.matrix().clone();
    for i in 0..n {
        l[(i, i)] = w.matrix().row(i).iter().sum();
    }
    LaplacianMatrix { l }
}

/// Spectrum of a Laplacian: ascending eigenvalues, orthonormal eigenvectors
/// stored column-wise in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.n(), self.n(), |r, c| {
            self.eigenvectors[(r, c)] * f(self.eigenvalues[c])
        });
        scaled * self.eigenvectors.transpose()
    }
}

/// Symmetric eigendecomposition of `L`.
///
/// Each connected component is decomposed separately, so eigenvectors never
/// mix disconnected blocks even when eigenvalues coincide across them (every
/// component contributes a zero eigenvalue). Pairs are then sorted ascending,
/// ties kept in component order, and every eigenvector is flipped so its first
/// nonzero component is positive.
pub fn eigendecompose(l: &LaplacianMatrix) -> Result<EigenDecomposition> {
    let n = l.n();
    let mut pairs: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    for comp in l.components() {
        let sub = linalg::select(l.matrix(), &comp, &comp);
        let m = comp.len();
        let eig = SymmetricEigen::try_new(sub, f64::EPSILON, 1000 + 100 * m)
            .ok_or(Error::DecompositionFailure)?;
        let mut local: Vec<usize> = (0..m).collect();
        local.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for k in local {
            let mut v = DVector::zeros(n);
            for (r, &node) in comp.iter().enumerate() {
                v[node] = eig.eigenvectors[(r, k)];
            }
            pairs.push((eig.eigenvalues[k], v));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (k, (value, mut vector)) in pairs.into_iter().enumerate() {
        if let Some(first) = vector.iter().find(|x| x.abs() > SIGN_EPS) {
            if *first < 0.0 {
                vector.neg_mut();
            }
        }
        eigenvalues[k] = value;
        eigenvectors.set_column(k, &vector);
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Quadratic form `xᵀ L x`.
pub fn smoothness(l: &LaplacianMatrix, x: &[f64]) -> Result<f64> {
    if x.len() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            got: x.len(),
        });
    }
    let v = DVector::from_column_slice(x);
    Ok(v.dot(&(l.matrix() * &v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    #[serde(rename = "w")]
    pub weight: f64,
}

/// Upper-triangle pairs whose weight exceeds `tau`.
pub fn edge_set(w: &WeightMatrix, tau: f64) -> Vec<Edge> {
    let n = w.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let weight = w.get(i, j);
            if weight > tau {
                edges.push(Edge { i, j, weight });
            }
        }
    }
    edges
}

/// On-disk graph: node ids plus every strictly positive weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub n: usize,
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
}

impl GraphDocument {
    pub fn new(nodes: Vec<String>, w: &WeightMatrix) -> Result<Self> {
        if nodes.len() != w.n() {
            return Err(Error::DimensionMismatch {
                expected: w.n(),
                got: nodes.len(),
            });
        }
        Ok(Self {
            n: w.n(),
            nodes,
            edges: edge_set(w, 0.0),
        })
    }

    pub fn weights(&self) -> Result<WeightMatrix> {
        if self.nodes.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: self.nodes.len(),
            });
        }
        WeightMatrix::from_edges(self.n, &self.edges)
    }

    pub fn laplacian(&self) -> Result<LaplacianMatrix> {
        Ok(laplacian_from_weights(&self.weights()?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Observed values and presence flags for one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl GraphSignal {
    pub fn new(values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                got: mask.len(),
            });
        }
        Ok(Self { values, mask })
    }

    pub fn complete(values: Vec<f64>) -> Self {
        let mask = vec![true; values.len()];
        Self { values, mask }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pattern(&self) -> Result<SamplingPattern> {
        SamplingPattern::from_mask(&self.mask)
    }

    /// Values at the observed indices of `pattern`, in order.
    pub fn observed_values(&self, pattern: &SamplingPattern) -> Vec<f64> {
        pattern.observed().iter().map(|&i| self.values[i]).collect()
    }
}

/// Partition of `0..n` into observed (M) and unobserved (U) nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingPattern {
    n: usize,
    observed: Vec<usize>,
    unobserved: Vec<usize>,
}

impl SamplingPattern {
    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        let observed: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let unobserved: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if observed.is_empty() {
            return Err(Error::AllNodesMissing);
        }
        Ok(Self {
            n: mask.len(),
            observed,
            unobserved,
        })
    }

    /// Pattern with the given nodes unobserved and all others observed.
    pub fn with_unobserved(n: usize, unobserved: &[usize]) -> Result<Self> {
        let mut mask = vec![true; n];
        for &u in unobserved {
            if u >= n {
                return Err(Error::InvalidPattern(format!(
                    "node {u} out of range for {n} nodes"
                )));
            }
            mask[u] = false;
        }
        Self::from_mask(&mask)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn unobserved(&self) -> &[usize] {
        &self.unobserved
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &m in &self.observed {
            mask[m] = true;
        }
        mask
    }
}
