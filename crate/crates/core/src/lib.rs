//! Graph learning from sensor time series and transductive reconstruction of
//! unobserved node signals.
//!
//! The crate learns a combinatorial Laplacian from smooth multivariate time
//! series, then fills in missing or unobserved nodes with one of four linear
//! reconstructors:
//!
//! | Method | Coefficients `β` in `x_U = β x_M` |
//! |--------|-----------------------------------|
//! | Laplacian interpolation | `-L_UU⁻¹ L_UM` |
//! | GSP low-pass | `U_UK U_MK⁺` |
//! | KRR, diffusion kernel | `K_UM (K_MM + μ·|M|·I)⁻¹`, `K = exp(-σ²L/2)` |
//! | KRR, vertex covariance | same, with the graphical-lasso covariance as `K` |
//!
//! Around them sit the evaluation tools: k-fold cross-validation over the
//! joint graph/reconstruction grid, the semi-supervised availability sweep,
//! cluster-wise learning with Ward clustering, and a drift-compensation
//! simulation.
//!
//! ```
//! use graph_recon::graph::{laplacian_from_weights, WeightMatrix, GraphSignal};
//! use graph_recon::reconstruction::{GraphModel, MethodSpec};
//! use nalgebra::dmatrix;
//!
//! // path 0 - 1 - 2 with node 1 missing
//! let w = WeightMatrix::new(dmatrix![0.0, 1.0, 0.0; 1.0, 0.0, 1.0; 0.0, 1.0, 0.0]).unwrap();
//! let model = GraphModel::from_laplacian(laplacian_from_weights(&w)).unwrap();
//! let signal = GraphSignal::new(vec![0.0, f64::NAN, 2.0], vec![true, false, true]).unwrap();
//! let filled = model.reconstruct_signal(&MethodSpec::lap_int(), &signal).unwrap();
//! assert!((filled[1] - 1.0).abs() < 1e-12);
//! ```

pub mod clustering;
pub mod covariance;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod learning;
mod linalg;
pub mod reconstruction;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/covariance.md")]
    mod covariance {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
}
