//! Transductive graph signal reconstruction.
//!
//! All four methods reduce to a linear map `x_U = β x_M` from the observed
//! nodes M to the unobserved nodes U. The map depends on the sampling
//! pattern, so a new pattern needs a new fit; the fit is cheap compared to
//! the spectral or kernel data it reads, which [`GraphModel`] computes once.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{eigendecompose, EigenDecomposition, GraphSignal, LaplacianMatrix, SamplingPattern};
use crate::linalg;

/// Ridge added to a singular `L_UU` before giving up.
pub const LAP_INT_RIDGE: f64 = 1e-8;
/// Relative singular-value cutoff of the GSP pseudoinverse.
pub const GSP_RANK_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "lapint")]
    LapInt,
    #[serde(rename = "gsp")]
    Gsp,
    #[serde(rename = "krr-diff")]
    KrrDiff,
    #[serde(rename = "krr-cov")]
    KrrCov,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [Self::LapInt, Self::Gsp, Self::KrrDiff, Self::KrrCov];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LapInt => "lapint",
            Self::Gsp => "gsp",
            Self::KrrDiff => "krr-diff",
            Self::KrrCov => "krr-cov",
        }
    }

    /// KRR-COV reads a covariance kernel; the other three read a Laplacian.
    pub fn uses_laplacian(self) -> bool {
        self != Self::KrrCov
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// A reconstruction method and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// GSP bandwidth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// KRR ridge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// Diffusion-kernel scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
}

impl MethodSpec {
    pub fn lap_int() -> Self {
        Self {
            kind: MethodKind::LapInt,
            k: None,
            mu: None,
            sigma2: None,
        }
    }

    pub fn gsp(k: usize) -> Self {
        Self {
            kind: MethodKind::Gsp,
            k: Some(k),
            ..Self::lap_int()
        }
    }

    pub fn krr_diff(mu: f64, sigma2: f64) -> Self {
        Self {
            kind: MethodKind::KrrDiff,
            mu: Some(mu),
            sigma2: Some(sigma2),
            k: None,
        }
    }

    pub fn krr_cov(mu: f64) -> Self {
        Self {
            kind: MethodKind::KrrCov,
            mu: Some(mu),
            k: None,
            sigma2: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let missing = |name: &str| {
            Error::InvalidConfig(format!("{} requires hyperparameter {name}", self.kind))
        };
        match self.kind {
            MethodKind::LapInt => {}
            MethodKind::Gsp => {
                let k = self.k.ok_or_else(|| missing("k"))?;
                if k == 0 {
                    return Err(Error::InvalidConfig("k must be >= 1".into()));
                }
            }
            MethodKind::KrrDiff | MethodKind::KrrCov => {
                let mu = self.mu.ok_or_else(|| missing("mu"))?;
                if !(mu.is_finite() && mu > 0.0) {
                    return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
                }
                if self.kind == MethodKind::KrrDiff {
                    let s = self.sigma2.ok_or_else(|| missing("sigma2"))?;
                    if !(s.is_finite() && s >= 0.0) {
                        return Err(Error::InvalidConfig(format!(
                            "sigma2 must be nonnegative, got {s}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Symmetric positive semidefinite kernel over the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
}

impl KernelMatrix {
    /// Validates symmetry (1e-10) and PSD-ness (min eigenvalue > −1e-8).
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::InvalidKernel("matrix is not square".into()));
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel("non-finite entry".into()));
        }
        if linalg::asymmetry(&k) > 1e-10 {
            return Err(Error::InvalidKernel("matrix is not symmetric".into()));
        }
        let k = linalg::symmetric_part(&k);
        if k.nrows() > 0 {
            let min = SymmetricEigen::new(k.clone()).eigenvalues.min();
            if min < -1e-8 {
                return Err(Error::InvalidKernel(format!(
                    "matrix is not PSD (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self { k })
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }
}

/// Diffusion kernel `U diag(exp(−σ²λ/2)) Uᵀ`; exactly the identity at σ² = 0.
pub fn diffusion_kernel(eig: &EigenDecomposition, sigma2: f64) -> Result<KernelMatrix> {
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma2 must be nonnegative, got {sigma2}"
        )));
    }
    let n = eig.n();
    if sigma2 == 0.0 {
        return Ok(KernelMatrix {
            k: DMatrix::identity(n, n),
        });
    }
    let k = eig.spectral_map(|lambda| (-sigma2 * lambda.max(0.0) / 2.0).exp());
    Ok(KernelMatrix {
        k: linalg::symmetric_part(&k),
    })
}

/// Fitted linear map from observed to unobserved values.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReconstructor {
    beta: DMatrix<f64>,
    pattern: SamplingPattern,
    method: MethodSpec,
    /// Lap.Int only: `L_UU` was singular and the ridge was applied.
    pub ridge_applied: bool,
    /// GSP only: `U_MK` had numerical rank below K.
    pub rank_deficient: bool,
}

impl LinearReconstructor {
    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn pattern(&self) -> &SamplingPattern {
        &self.pattern
    }

    pub fn method(&self) -> &MethodSpec {
        &self.method
    }

    /// `β x_M`.
    pub fn reconstruct(&self, x_m: &[f64]) -> Result<Vec<f64>> {
        if x_m.len() != self.beta.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.ncols(),
                got: x_m.len(),
            });
        }
        let out = &self.beta * DVector::from_column_slice(x_m);
        Ok(out.iter().copied().collect())
    }

    /// Applies the map to many instants at once: rows of `x_m` are instants,
    /// columns the observed nodes. Returns instants × unobserved nodes.
    pub fn reconstruct_rows(&self, x_m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_m.ncols() != self.beta.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.ncols(),
                got: x_m.ncols(),
            });
        }
        Ok(x_m * self.beta.transpose())
    }
}

fn check_pattern(n: usize, pattern: &SamplingPattern) -> Result<()> {
    if pattern.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: pattern.n(),
        });
    }
    Ok(())
}

/// Laplacian interpolation: `β = −L_UU⁻¹ L_UM`.
///
/// A singular `L_UU` (an unobserved component with no path to M) is retried
/// with `L_UU + 1e-8·I` and flagged through `ridge_applied`.
pub fn fit_lap_int(l: &LaplacianMatrix, pattern: &SamplingPattern) -> Result<LinearReconstructor> {
    check_pattern(l.n(), pattern)?;
    let u = pattern.unobserved();
    let m = pattern.observed();
    let l_uu = linalg::select(l.matrix(), u, u);
    let rhs = -linalg::select(l.matrix(), u, m);

    let mut ridge_applied = false;
    let chol = match linalg::cholesky_checked(&l_uu) {
        Some(c) => c,
        None => {
            ridge_applied = true;
            log::warn!("L_UU is singular; applying ridge {LAP_INT_RIDGE:e}");
            let ridged = l_uu + DMatrix::identity(u.len(), u.len()) * LAP_INT_RIDGE;
            linalg::cholesky_checked(&ridged).ok_or(Error::SingularSubmatrix)?
        }
    };
    Ok(LinearReconstructor {
        beta: chol.solve(&rhs),
        pattern: pattern.clone(),
        method: MethodSpec::lap_int(),
        ridge_applied,
        rank_deficient: false,
    })
}

/// GSP low-pass: `β = U_UK U_MK⁺`.
///
/// The pseudoinverse is taken block by block over the independent blocks of
/// `U_MK`, dropping singular values at or below `1e-10·σ_max` of the block.
pub fn fit_gsp(eig: &EigenDecomposition, pattern: &SamplingPattern, k: usize) -> Result<LinearReconstructor> {
    check_pattern(eig.n(), pattern)?;
    let m = pattern.observed();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if k > m.len() {
        return Err(Error::BandwidthTooLarge {
            k,
            observed: m.len(),
        });
    }
    let band: Vec<usize> = (0..k).collect();
    let u_mk = linalg::select(&eig.eigenvectors, m, &band);
    let u_uk = linalg::select(&eig.eigenvectors, pattern.unobserved(), &band);

    // eigenvectors of different components never share support, so U_MK
    // splits into independent blocks; each block gets its own pseudoinverse
    let mut pinv = DMatrix::zeros(k, m.len());
    let mut rank = 0;
    for (rows, cols) in linalg::independent_blocks(&u_mk) {
        if rows.is_empty() {
            continue;
        }
        let (p, r) = linalg::pinv_truncated(&linalg::select(&u_mk, &rows, &cols), GSP_RANK_CUTOFF);
        rank += r;
        for (a, &c) in cols.iter().enumerate() {
            for (b, &row) in rows.iter().enumerate() {
                pinv[(c, row)] = p[(a, b)];
            }
        }
    }
    let rank_deficient = rank < k;
    if rank_deficient {
        log::warn!("U_MK has numerical rank {rank} < K = {k}; using truncated pseudoinverse");
    }
    Ok(LinearReconstructor {
        beta: u_uk * pinv,
        pattern: pattern.clone(),
        method: MethodSpec::gsp(k),
        ridge_applied: false,
        rank_deficient,
    })
}

/// Kernel ridge regression: `β = K_UM (K_MM + μ·|M|·I)⁻¹`.
pub fn fit_krr(kernel: &KernelMatrix, pattern: &SamplingPattern, mu: f64) -> Result<LinearReconstructor> {
    fit_krr_as(kernel, pattern, mu, MethodSpec::krr_cov(mu))
}

fn fit_krr_as(
    kernel: &KernelMatrix,
    pattern: &SamplingPattern,
    mu: f64,
    method: MethodSpec,
) -> Result<LinearReconstructor> {
    check_pattern(kernel.n(), pattern)?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
    }
    let m = pattern.observed();
    let u = pattern.unobserved();
    let ridge = mu * m.len() as f64;
    let system = linalg::select(kernel.matrix(), m, m) + DMatrix::identity(m.len(), m.len()) * ridge;
    let chol = linalg::cholesky_checked(&system)
        .ok_or_else(|| Error::SolveFailure("K_MM + mu*M*I is not positive definite".into()))?;
    let k_mu = linalg::select(kernel.matrix(), m, u);
    Ok(LinearReconstructor {
        beta: chol.solve(&k_mu).transpose(),
        pattern: pattern.clone(),
        method,
        ridge_applied: false,
        rank_deficient: false,
    })
}

/// Graph-side inputs of the reconstructors, computed once and shared.
///
/// Built either from a Laplacian (serves Lap.Int, GSP and KRR-DIFF; the
/// eigendecomposition is computed up front) or from a covariance kernel
/// (serves KRR-COV).
#[derive(Debug, Clone)]
pub struct GraphModel {
    laplacian: Option<LaplacianMatrix>,
    eigen: Option<EigenDecomposition>,
    covariance: Option<KernelMatrix>,
}

impl GraphModel {
    pub fn from_laplacian(l: LaplacianMatrix) -> Result<Self> {
        let eigen = eigendecompose(&l)?;
        Ok(Self {
            laplacian: Some(l),
            eigen: Some(eigen),
            covariance: None,
        })
    }

    pub fn from_covariance(kernel: KernelMatrix) -> Self {
        Self {
            laplacian: None,
            eigen: None,
            covariance: Some(kernel),
        }
    }

    pub fn n(&self) -> usize {
        self.laplacian
            .as_ref()
            .map(LaplacianMatrix::n)
            .or_else(|| self.covariance.as_ref().map(KernelMatrix::n))
            .unwrap_or(0)
    }

    pub fn laplacian(&self) -> Option<&LaplacianMatrix> {
        self.laplacian.as_ref()
    }

    pub fn eigen(&self) -> Option<&EigenDecomposition> {
        self.eigen.as_ref()
    }

    pub fn covariance(&self) -> Option<&KernelMatrix> {
        self.covariance.as_ref()
    }

    /// The kernel a KRR method reads: the diffusion kernel for KRR-DIFF, the
    /// stored covariance for KRR-COV.
    pub fn kernel(&self, method: &MethodSpec) -> Result<KernelMatrix> {
        method.validate()?;
        match method.kind {
            MethodKind::KrrDiff => diffusion_kernel(self.require_eigen()?, method.sigma2.unwrap_or(0.0)),
            MethodKind::KrrCov => self.require_covariance().cloned(),
            other => Err(Error::InvalidConfig(format!("{other} does not use a kernel"))),
        }
    }

    fn require_eigen(&self) -> Result<&EigenDecomposition> {
        self.eigen
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("method needs a Laplacian-based model".into()))
    }

    fn require_covariance(&self) -> Result<&KernelMatrix> {
        self.covariance
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("krr-cov needs a covariance-based model".into()))
    }

    /// Fits `method` for `pattern`.
    pub fn fit(&self, method: &MethodSpec, pattern: &SamplingPattern) -> Result<LinearReconstructor> {
        method.validate()?;
        match method.kind {
            MethodKind::LapInt => {
                let l = self.laplacian.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("lapint needs a Laplacian-based model".into())
                })?;
                fit_lap_int(l, pattern)
            }
            MethodKind::Gsp => fit_gsp(self.require_eigen()?, pattern, method.k.unwrap_or(0)),
            MethodKind::KrrDiff | MethodKind::KrrCov => {
                let kernel = self.kernel(method)?;
                self.fit_with_kernel(&kernel, method, pattern)
            }
        }
    }

    /// KRR fit with a kernel the caller already computed (see [`Self::kernel`]).
    pub fn fit_with_kernel(
        &self,
        kernel: &KernelMatrix,
        method: &MethodSpec,
        pattern: &SamplingPattern,
    ) -> Result<LinearReconstructor> {
        method.validate()?;
        let mu = method
            .mu
            .ok_or_else(|| Error::InvalidConfig(format!("{} does not use a kernel", method.kind)))?;
        fit_krr_as(kernel, pattern, mu, *method)
    }

    /// Fills the masked-out entries of `signal`; observed entries are copied
    /// through unchanged.
    pub fn reconstruct_signal(&self, method: &MethodSpec, signal: &GraphSignal) -> Result<Vec<f64>> {
        if signal.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: signal.len(),
            });
        }
        let pattern = signal.pattern()?;
        let mut out = signal.values.clone();
        if pattern.unobserved().is_empty() {
            return Ok(out);
        }
        let fitted = self.fit(method, &pattern)?;
        let filled = fitted.reconstruct(&signal.observed_values(&pattern))?;
        for (&u, v) in pattern.unobserved().iter().zip(filled) {
            out[u] = v;
        }
        Ok(out)
    }
}
