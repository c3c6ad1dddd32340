//! Generators and independent reference computations shared by the
//! integration tests. The references avoid the library's own solvers: dense
//! LU, QR and a Taylor matrix exponential.

#![allow(dead_code)]

use graph_recon::graph::{laplacian_from_weights, LaplacianMatrix, SamplingPattern, WeightMatrix};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random symmetric weights; every pair is an edge with probability
/// `density`, plus a random spanning path so the graph is connected.
pub fn connected_weights<R: Rng>(rng: &mut R, n: usize, density: f64) -> WeightMatrix {
    let mut w = DMatrix::zeros(n, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for pair in order.windows(2) {
        let v = rng.random_range(0.2..2.0);
        w[(pair[0], pair[1])] = v;
        w[(pair[1], pair[0])] = v;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random::<f64>() < density {
                let v = rng.random_range(0.2..2.0);
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    WeightMatrix::new(w).unwrap()
}

pub fn connected_laplacian<R: Rng>(rng: &mut R, n: usize, density: f64) -> LaplacianMatrix {
    laplacian_from_weights(&connected_weights(rng, n, density))
}

/// Random pattern with at least one observed and one unobserved node.
pub fn random_pattern<R: Rng>(rng: &mut R, n: usize) -> SamplingPattern {
    let hidden = rng.random_range(1..n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    SamplingPattern::with_unobserved(n, &order[..hidden]).unwrap()
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

pub fn gather(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Harmonic extension through the KKT system of
/// `min xᵀLx s.t. x_M = given`, solved densely by LU.
pub fn lap_int_oracle(l: &DMatrix<f64>, pattern: &SamplingPattern, x_m: &[f64]) -> Vec<f64> {
    let n = l.nrows();
    let m = pattern.observed();
    let size = n + m.len();
    let mut kkt = DMatrix::zeros(size, size);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(l * 2.0));
    for (r, &i) in m.iter().enumerate() {
        kkt[(n + r, i)] = 1.0;
        kkt[(i, n + r)] = 1.0;
    }
    let mut rhs = DVector::zeros(size);
    for (r, v) in x_m.iter().enumerate() {
        rhs[n + r] = *v;
    }
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    pattern.unobserved().iter().map(|&u| sol[u]).collect()
}

/// Ascending eigenpairs of the full matrix, without per-component splitting.
pub fn plain_eigen(l: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..l.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(l.nrows(), l.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// GDFT pipeline: least-squares K-sparse spectrum from the observed nodes by
/// QR, then the inverse transform.
pub fn gsp_oracle(u: &DMatrix<f64>, pattern: &SamplingPattern, k: usize, x_m: &[f64]) -> Vec<f64> {
    let m = pattern.observed();
    let u_mk = DMatrix::from_fn(m.len(), k, |r, c| u[(m[r], c)]);
    let qr = u_mk.qr();
    let rhs = qr.q().transpose() * DVector::from_column_slice(x_m);
    let spectrum = qr.r().solve_upper_triangular(&rhs).expect("U_MK has full column rank");
    let full = u.columns(0, k) * spectrum;
    pattern.unobserved().iter().map(|&i| full[i]).collect()
}

/// Representer form: `f = K_{·M} a`, `a = (K_MM + μ|M|I)⁻¹ x_M` by LU.
pub fn krr_oracle(kernel: &DMatrix<f64>, pattern: &SamplingPattern, mu: f64, x_m: &[f64]) -> Vec<f64> {
    let m = pattern.observed();
    let k_mm = DMatrix::from_fn(m.len(), m.len(), |r, c| kernel[(m[r], m[c])]);
    let system = k_mm + DMatrix::identity(m.len(), m.len()) * (mu * m.len() as f64);
    let coef = system.lu().solve(&DVector::from_column_slice(x_m)).expect("ridge system is nonsingular");
    pattern
        .unobserved()
        .iter()
        .map(|&u| m.iter().enumerate().map(|(r, &j)| kernel[(u, j)] * coef[r]).sum())
        .collect()
}

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.5 {
        s += 1;
    }
    let scaled = a / 2f64.powi(s);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Random symmetric positive definite matrix.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| normal(rng));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1
}

/// Rows are instants drawn from a Gaussian field that is smooth on `l`
/// (covariance `(L + εI)⁻¹`), mapped to `offset + scale·field`, plus white
/// noise of standard deviation `noise`.
pub fn smooth_signals<R: Rng>(rng: &mut R, l: &DMatrix<f64>, p: usize, scale: f64, offset: f64, noise: f64) -> DMatrix<f64> {
    let n = l.nrows();
    let (values, vectors) = plain_eigen(l);
    let gains: Vec<f64> = values.iter().map(|v| 1.0 / (v.max(0.0) + 0.05).sqrt()).collect();
    let norm = gains.iter().map(|g| g * g).sum::<f64>().sqrt() / (n as f64).sqrt();
    let mut x = DMatrix::zeros(p, n);
    for r in 0..p {
        let coef: Vec<f64> = gains.iter().map(|g| g / norm * normal(rng)).collect();
        for c in 0..n {
            let mut v = 0.0;
            for (k, ck) in coef.iter().enumerate() {
                v += vectors[(c, k)] * ck;
            }
            x[(r, c)] = offset + scale * v + noise * normal(rng);
        }
    }
    x
}

/// Geometric graph: nodes uniform in the unit square, Gaussian weights for
/// pairs closer than `radius`, kept connected by a nearest-neighbour chain.
pub fn geometric_laplacian<R: Rng>(rng: &mut R, n: usize, radius: f64) -> LaplacianMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let dist = |a: usize, b: usize| ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist(i, j);
            if d < radius {
                let v = (-(d * d) / (2.0 * (radius / 2.0).powi(2))).exp();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    for i in 1..n {
        let j = (0..i).min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b))).unwrap();
        if w[(i, j)] == 0.0 {
            let v = (-(dist(i, j).powi(2)) / (2.0 * (radius / 2.0).powi(2))).exp().max(0.05);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    laplacian_from_weights(&WeightMatrix::new(w).unwrap())
}
