//! Smoothness-based Laplacian learning.
//!
//! Given standardized observations `X` (P rows of time instants, N node
//! columns) the learner minimizes
//!
//! ```text
//! ‖X − Y‖²_F + α Σ_t y_tᵀ L y_t + β ‖L‖²_F
//! s.t. tr(L) = N,  L_ij = L_ji ≤ 0 (i ≠ j),  L·1 = 0
//! ```
//!
//! by alternating two convex block minimizations: the Y-step is a linear
//! solve with `I + αL`, the L-step a quadratic program over the
//! upper-triangle weights `w ≥ 0` with `Σ w = N/2`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{laplacian_from_weights, LaplacianMatrix, WeightMatrix};
use crate::linalg;

/// Hyperparameters and stopping rules of [`learn_graph`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothLearnConfig {
    /// Weight of the smoothness term.
    pub alpha: f64,
    /// Weight of the Frobenius penalty; larger values give denser graphs.
    pub beta: f64,
    pub max_outer_iters: usize,
    /// Relative objective change that ends the alternation.
    pub rel_tol: f64,
    pub qp_max_iters: usize,
    /// Tolerance on the projected-gradient norm of the L-step.
    pub qp_tol: f64,
}

impl SmoothLearnConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            max_outer_iters: 50,
            rel_tol: 1e-4,
            qp_max_iters: 2000,
            qp_tol: 1e-8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("rel_tol", self.rel_tol)?;
        positive("qp_tol", self.qp_tol)?;
        if self.max_outer_iters == 0 || self.qp_max_iters == 0 {
            return Err(Error::InvalidConfig("iteration limits must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GraphLearnResult {
    pub laplacian: LaplacianMatrix,
    /// The filtered signal `Y`, same shape as the input.
    pub filtered: DMatrix<f64>,
    /// Full objective after each (L-step, Y-step) pair.
    pub objective_trace: Vec<f64>,
    /// False when the alternation hit `max_outer_iters` or the final L-step
    /// hit `qp_max_iters`.
    pub converged: bool,
}

/// Full objective `‖X−Y‖² + α Σ_t y_tᵀ L y_t + β‖L‖²_F`.
pub fn objective(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    l: &LaplacianMatrix,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if y.ncols() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            got: y.ncols(),
        });
    }
    let fidelity = (x - y).norm_squared();
    let smooth = (y * l.matrix()).component_mul(y).sum();
    Ok(fidelity + alpha * smooth + beta * l.matrix().norm_squared())
}

/// Minimizes the objective over `Y` with `L` fixed: every row solves
/// `(I + αL) y = x`.
pub fn y_step(x: &DMatrix<f64>, l: &LaplacianMatrix, alpha: f64) -> Result<DMatrix<f64>> {
    if x.ncols() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            got: x.ncols(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    let n = l.n();
    let system = DMatrix::identity(n, n) + l.matrix() * alpha;
    let chol = linalg::cholesky_checked(&system)
        .ok_or_else(|| Error::SolveFailure("I + alpha*L is not positive definite".into()))?;
    Ok(chol.solve(&x.transpose()).transpose())
}

/// The L-step as a quadratic program in the edge weights.
///
/// Weights are indexed by the upper-triangle pairs `(i, j), i < j` in
/// row-major order. With `z_ij = ‖y_i − y_j‖²` over the node columns of `Y`
/// and `d_i = Σ_j w_ij`,
///
/// ```text
/// f(w) = α Σ_e z_e w_e + β (Σ_i d_i² + 2 Σ_e w_e²)
/// ```
///
/// which equals `α tr(Y L Yᵀ) + β ‖L‖²_F` for `L = D − W`.
#[derive(Debug, Clone)]
pub struct LaplacianQp {
    n: usize,
    pairs: Vec<(usize, usize)>,
    linear: Vec<f64>,
    beta: f64,
}

impl LaplacianQp {
    pub fn new(y: &DMatrix<f64>, alpha: f64, beta: f64) -> Self {
        let n = y.ncols();
        let pairs = upper_pairs(n);
        let linear = pairs
            .iter()
            .map(|&(i, j)| alpha * (y.column(i) - y.column(j)).norm_squared())
            .collect();
        Self {
            n,
            pairs,
            linear,
            beta,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `Σ w = N/2`, i.e. `tr(L) = N`.
    pub fn weight_sum(&self) -> f64 {
        self.n as f64 / 2.0
    }

    fn degrees(&self, w: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (&(i, j), &we) in self.pairs.iter().zip(w) {
            d[i] += we;
            d[j] += we;
        }
        d
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let d = self.degrees(w);
        let lin: f64 = self.linear.iter().zip(w).map(|(c, we)| c * we).sum();
        let deg: f64 = d.iter().map(|v| v * v).sum();
        let off: f64 = w.iter().map(|v| v * v).sum();
        lin + self.beta * (deg + 2.0 * off)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = self.degrees(w);
        self.pairs
            .iter()
            .zip(w)
            .zip(&self.linear)
            .map(|((&(i, j), &we), &c)| c + 2.0 * self.beta * (d[i] + d[j]) + 4.0 * self.beta * we)
            .collect()
    }

    /// Upper bound on the Hessian spectrum: `2β (λ_max(SᵀS) + 2)` with
    /// `λ_max(SᵀS) = 2(N − 1)` for the complete-graph incidence `S`.
    pub fn lipschitz(&self) -> f64 {
        4.0 * self.beta * self.n as f64
    }

    /// Euclidean projection onto the feasible set.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        project_onto_simplex(v, self.weight_sum())
    }

    /// Barycenter of the feasible set.
    pub fn uniform_point(&self) -> Vec<f64> {
        let m = self.pairs.len();
        vec![self.weight_sum() / m as f64; m]
    }

    pub fn weights_matrix(&self, w: &[f64]) -> WeightMatrix {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&(i, j), &we) in self.pairs.iter().zip(w) {
            m[(i, j)] = we;
            m[(j, i)] = we;
        }
        WeightMatrix::new(m).expect("projected weights are symmetric and nonnegative")
    }

    pub fn laplacian(&self, w: &[f64]) -> LaplacianMatrix {
        laplacian_from_weights(&self.weights_matrix(w))
    }

    /// `‖w − P(w − ∇f/Lip)‖·Lip`, the gradient-mapping norm (∞-norm).
    pub fn projected_gradient_norm(&self, w: &[f64], g: &[f64]) -> f64 {
        let lip = self.lipschitz();
        let shifted: Vec<f64> = w.iter().zip(g).map(|(a, b)| a - b / lip).collect();
        let p = self.project(&shifted);
        p.iter()
            .zip(w)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
            * lip
    }

    /// Projected gradient with Barzilai–Borwein trial steps and backtracking.
    ///
    /// Every accepted step satisfies the sufficient-decrease condition, so the
    /// objective never increases from `start`.
    pub fn solve(&self, start: &[f64], max_iters: usize, tol: f64) -> QpSolution {
        let lip = self.lipschitz();
        let min_step = 1.0 / lip;
        let max_step = 1e6 / lip;
        let mut w = self.project(start);
        let mut f = self.value(&w);
        let mut g = self.gradient(&w);
        let mut step = min_step;
        let mut converged = false;
        let mut iterations = 0;

        while iterations < max_iters {
            let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            if self.projected_gradient_norm(&w, &g) <= tol * scale {
                converged = true;
                break;
            }
            iterations += 1;

            let mut t = step;
            let (w_new, f_new) = loop {
                let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - t * b).collect();
                let cand = self.project(&trial);
                let f_cand = self.value(&cand);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for ((c, a), gi) in cand.iter().zip(&w).zip(&g) {
                    let d = c - a;
                    lin += gi * d;
                    sq += d * d;
                }
                if f_cand <= f + lin + sq / (2.0 * t) || t <= min_step {
                    break (cand, f_cand);
                }
                t = (t * 0.5).max(min_step);
            };
            if !(f_new <= f) {
                // rounding noise at a stationary point
                converged = self.projected_gradient_norm(&w, &g) <= tol.sqrt() * scale;
                break;
            }

            let g_new = self.gradient(&w_new);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..w.len() {
                let s = w_new[i] - w[i];
                ss += s * s;
                sy += s * (g_new[i] - g[i]);
            }
            step = if sy > 0.0 {
                (ss / sy).clamp(min_step, max_step)
            } else {
                min_step
            };
            w = w_new;
            f = f_new;
            g = g_new;
        }
        if !converged {
            let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            converged = self.projected_gradient_norm(&w, &g) <= tol * scale;
        }
        QpSolution {
            laplacian: self.laplacian(&w),
            weights: w,
            value: f,
            iterations,
            converged,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub laplacian: LaplacianMatrix,
    /// Upper-triangle weights in [`LaplacianQp::pairs`] order.
    pub weights: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Euclidean projection of `v` onto `{w ≥ 0, Σ w = total}` (sort-based).
pub fn project_onto_simplex(v: &[f64], total: f64) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// The L-step from the barycenter of the feasible set.
pub fn l_step(y: &DMatrix<f64>, cfg: &SmoothLearnConfig) -> Result<QpSolution> {
    cfg.validate()?;
    if y.ncols() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: y.ncols(),
        });
    }
    let qp = LaplacianQp::new(y, cfg.alpha, cfg.beta);
    Ok(qp.solve(&qp.uniform_point(), cfg.qp_max_iters, cfg.qp_tol))
}

/// Rejects inputs the learner cannot use: too few rows or columns, missing
/// (non-finite) entries and constant columns.
pub fn check_learning_input(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: x.nrows(),
        });
    }
    if x.ncols() < 2 {
        return Err(Error::InvalidConfig(format!(
            "graph learning needs at least 2 nodes, got {}",
            x.ncols()
        )));
    }
    for column in 0..x.ncols() {
        for row in 0..x.nrows() {
            if !x[(row, column)].is_finite() {
                return Err(Error::MissingData { row, column });
            }
        }
        let first = x[(0, column)];
        if x.column(column).iter().all(|v| *v == first) {
            return Err(Error::ZeroVariance { column });
        }
    }
    Ok(())
}

/// Learns a Laplacian from standardized, complete observations.
///
/// The alternation starts from `Y = X` with an L-step, then alternates
/// Y-steps and warm-started L-steps until the relative objective change drops
/// below `rel_tol` or `max_outer_iters` pairs have run.
pub fn learn_graph(x: &DMatrix<f64>, cfg: &SmoothLearnConfig) -> Result<GraphLearnResult> {
    cfg.validate()?;
    check_learning_input(x)?;

    let mut y = x.clone();
    let mut weights: Option<Vec<f64>> = None;
    let mut trace: Vec<f64> = Vec::with_capacity(cfg.max_outer_iters);
    let mut outer_converged = false;
    let mut qp_converged = false;
    let mut laplacian = LaplacianMatrix::zeros(x.ncols());

    for _ in 0..cfg.max_outer_iters {
        let qp = LaplacianQp::new(&y, cfg.alpha, cfg.beta);
        let start = weights.take().unwrap_or_else(|| qp.uniform_point());
        let sol = qp.solve(&start, cfg.qp_max_iters, cfg.qp_tol);
        qp_converged = sol.converged;
        laplacian = sol.laplacian;
        weights = Some(sol.weights);

        y = y_step(x, &laplacian, cfg.alpha)?;
        let value = objective(x, &y, &laplacian, cfg.alpha, cfg.beta)?;
        if let Some(&prev) = trace.last() {
            let change = (prev - value).abs() / f64::max(prev.abs(), f64::MIN_POSITIVE);
            trace.push(value);
            if change < cfg.rel_tol {
                outer_converged = true;
                break;
            }
        } else {
            trace.push(value);
        }
    }

    Ok(GraphLearnResult {
        laplacian,
        filtered: y,
        objective_trace: trace,
        converged: outer_converged && qp_converged,
    })
}
